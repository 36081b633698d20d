"""Bob's digital post-processing: calibration, pilot estimators, recovery.

Pilot triplets carry phases {0, 2pi/3, 4pi/3}.  Writing the X-quadrature
measurements of one triplet as u_i = D cos(theta + 2 pi i / 3) + noise,
the identities

    (u3 - u2) / sqrt(3)      = D sin(theta)
    (2 u1 - u2 - u3) / 3     = D cos(theta)
    (2/3) sum_i (u_i - m)^2  = D^2        (m = triplet mean)

make both the drift phase and the displacement magnitude exactly
recoverable from noiseless pilots.  The phase estimator here uses
four-quadrant atan2 of the two identities above; a two-quadrant arctan of
their ratio cannot track a full 2*pi of drift, and the ratio form also
needs its sqrt(3) placed as above to reduce to tan(theta) (a cross-check
against the triplet identities is in the test suite).

P-quadrature measurements of the same pilots follow the same pattern with
the cosine replaced by sine, i.e. a pattern offset of -pi/2 relative to
the cosine reference.  Each pattern set carries that known offset and the
estimator subtracts it, so X and P sets of one packet agree on the channel
phase.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import DomainError, rotate, wrap_angle
from .transmitter import ModulationParams, psk_displacements


class Quadrature(enum.Enum):
    X = "x"
    P = "p"

    @property
    def pattern_offset(self) -> float:
        """Known phase offset of this quadrature's pilot pattern relative
        to the cosine reference (sin(t) = cos(t - pi/2))."""
        return 0.0 if self is Quadrature.X else -0.5 * math.pi


@dataclass(frozen=True)
class PatternSet:
    """One quadrature's three measurements of one pilot triplet."""

    u: tuple[float, float, float]
    quadrature_tag: Quadrature
    packet_index: int = 0

    def __post_init__(self) -> None:
        if len(self.u) != 3:
            raise DomainError(f"a pattern set holds exactly 3 values, got {len(self.u)}")


@dataclass(frozen=True)
class PhaseEstimate:
    theta_raw: float
    theta_smoothed: float
    weight: float


@dataclass(frozen=True)
class CalibrationResult:
    n0_mv2: float
    v_ele_assumed: float
    samples_used: int

    def __post_init__(self) -> None:
        if self.n0_mv2 <= 0:
            raise DomainError("n0_mv2 must be > 0")

    @property
    def divisor_mv(self) -> float:
        """Millivolts per sqrt(N0): divide raw samples by this."""
        return math.sqrt(self.n0_mv2)


MIN_CALIBRATION_SAMPLES = 1000


def calibrate_shot_noise(
    vacuum_mv: np.ndarray, v_ele: float
) -> CalibrationResult:
    """Estimate the shot-noise unit from vacuum-slot measurements.

    ``vacuum_mv`` is an (n, 2) array of raw (x, p) millivolt pairs.  The
    measured vacuum variance is N0 + v_ele in detector units, so the
    shot-noise unit is the pooled sample variance divided by (1 + v_ele),
    with v_ele taken from its independent bench characterization.
    """
    vac = np.asarray(vacuum_mv, dtype=float)
    if vac.ndim != 2 or vac.shape[1] != 2:
        raise DomainError("vacuum_mv must have shape (n, 2)")
    n = vac.shape[0]
    if n < MIN_CALIBRATION_SAMPLES:
        raise DomainError(
            f"need at least {MIN_CALIBRATION_SAMPLES} vacuum samples, got {n}"
        )
    if v_ele < 0:
        raise DomainError(f"v_ele must be >= 0, got {v_ele}")
    var = float(np.mean(np.var(vac, axis=0, ddof=1)))
    # a stuck detector reads back (numerically) constant values: variance
    # at rounding-noise level relative to the signal magnitude
    if var <= 1e-18 * max(1.0, float(np.mean(vac * vac))):
        raise DomainError("vacuum variance is zero: detector fault")
    return CalibrationResult(n0_mv2=var / (1.0 + v_ele), v_ele_assumed=v_ele, samples_used=n)


def _set_deviation_sq(u: np.ndarray) -> np.ndarray:
    m = u.mean(axis=-1, keepdims=True)
    return ((u - m) ** 2).sum(axis=-1)


def per_set_magnitudes(u: np.ndarray) -> np.ndarray:
    """sqrt((2/3) sum_i (u_i - m)^2) per pattern set; u has shape (k, 3)."""
    return np.sqrt((2.0 / 3.0) * _set_deviation_sq(np.asarray(u, dtype=float)))


def estimate_displacement(sets: Sequence[PatternSet] | np.ndarray) -> float:
    """Displacement magnitude: mean over sets of sqrt((2/3) sum (u - m)^2).

    Accepts a sequence of :class:`PatternSet` or a raw (k, 3) array.  Exact
    on noiseless pilots; on noisy pilots it carries a small positive bias
    of about noise_var / (3 * delta) (see :func:`debias_displacement`).
    """
    u = _sets_to_array(sets)
    if u.shape[0] == 0:
        raise DomainError("need at least one pattern set")
    return float(np.mean(per_set_magnitudes(u)))


def debias_displacement(delta_raw: float, noise_var: float) -> float:
    """Remove the second-order noise bias of :func:`estimate_displacement`.

    Per pattern set the deviation vector is a 2D Gaussian of per-axis
    variance noise_var around a mean of length sqrt(3/2) * delta, so the
    set estimate is Rice-distributed with mean delta + noise_var/(3 delta)
    + O(noise_var^2 / delta^3).
    """
    if delta_raw <= 0:
        raise DomainError(f"delta_raw must be > 0, got {delta_raw}")
    if noise_var < 0:
        raise DomainError(f"noise_var must be >= 0, got {noise_var}")
    return delta_raw - noise_var / (3.0 * delta_raw)


def _sets_to_array(sets: Sequence[PatternSet] | np.ndarray) -> np.ndarray:
    if isinstance(sets, np.ndarray):
        arr = np.asarray(sets, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise DomainError("pattern-set array must have shape (k, 3)")
        return arr
    return np.array([s.u for s in sets], dtype=float).reshape(-1, 3)


def estimate_packet_phase(
    sets: Sequence[PatternSet] | np.ndarray,
    offsets: Sequence[float] | None = None,
) -> float:
    """Circular mean of per-set phase estimates for one packet.

    Per set j: theta_j = atan2((u3 - u2)/sqrt(3), (2 u1 - u2 - u3)/3)
    minus the set's known pattern offset.  When ``sets`` holds
    :class:`PatternSet` objects the offsets default to each set's
    quadrature pattern offset (0 for X, -pi/2 for P); a raw (k, 3) array
    requires explicit offsets.  All-zero triplets are skipped.
    """
    u = _sets_to_array(sets)
    if offsets is None:
        if isinstance(sets, np.ndarray):
            raise DomainError("offsets are required with a raw pattern-set array")
        offsets_arr = np.array([s.quadrature_tag.pattern_offset for s in sets])
    else:
        offsets_arr = np.asarray(offsets, dtype=float)
        if offsets_arr.shape != (u.shape[0],):
            raise DomainError("offsets must have one entry per pattern set")
    if u.shape[0] == 0:
        raise DomainError("need at least one pattern set")

    sin_part = (u[:, 2] - u[:, 1]) / math.sqrt(3.0)
    cos_part = (2.0 * u[:, 0] - u[:, 1] - u[:, 2]) / 3.0
    keep = (sin_part != 0.0) | (cos_part != 0.0)
    if not keep.any():
        raise DomainError("all pattern sets are degenerate (zero triplets)")
    theta = np.arctan2(sin_part[keep], cos_part[keep]) - offsets_arr[keep]
    return float(np.arctan2(np.sin(theta).sum(), np.cos(theta).sum()))


def smooth_phase(raw: Sequence[float], w: float) -> np.ndarray:
    """Exponential averaging of per-packet phase estimates.

    s_0 = raw_0 and s_n = s_{n-1} + w * wrap(raw_n - s_{n-1}): each raw
    value is first unwrapped to within +-pi of the running estimate, so
    the output tracks continuously through multiples of 2*pi.
    """
    if not 0.0 < w <= 1.0:
        raise DomainError(f"weight must be in (0, 1], got {w}")
    raw_arr = np.asarray(raw, dtype=float)
    out = np.empty_like(raw_arr)
    if raw_arr.size == 0:
        return out
    s = raw_arr[0]
    out[0] = s
    for i in range(1, raw_arr.size):
        s = s + w * float(wrap_angle(raw_arr[i] - s))
        out[i] = s
    return out


def derotate(xs, ps, theta):
    """Rotate samples by -theta (scalar or per-sample array)."""
    return rotate(xs, ps, -np.asarray(theta))


def remove_displacement(
    xs: np.ndarray,
    ps: np.ndarray,
    symbols: np.ndarray,
    mod: ModulationParams,
    delta_hat: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Subtract the decided constellation point from phase-corrected data.

    The residual ensemble is the recovered Gaussian modulation; a wrong
    delta_hat leaves a mean offset along the constellation directions that
    shows up downstream as inflated excess noise.
    """
    xs = np.asarray(xs, dtype=float)
    ps = np.asarray(ps, dtype=float)
    symbols = np.asarray(symbols)
    if not (xs.shape == ps.shape == symbols.shape):
        raise DomainError(
            f"length mismatch: {xs.shape} vs {ps.shape} vs {symbols.shape}"
        )
    delta = psk_displacements(symbols, mod, delta_hat)
    return xs - delta[..., 0], ps - delta[..., 1]


def pattern_sets_from_pilots(
    pilot_x: np.ndarray, pilot_p: np.ndarray, packet_index: int = 0
) -> list[PatternSet]:
    """Split per-packet pilot measurements into X and P pattern sets.

    ``pilot_x``/``pilot_p`` are (sets, 3) arrays in transmission order.
    Each pilot triplet yields two pattern sets, one per quadrature, which
    is why a packet with 12 triplets contributes 24 sets.
    """
    px = np.asarray(pilot_x, dtype=float).reshape(-1, 3)
    pp = np.asarray(pilot_p, dtype=float).reshape(-1, 3)
    if px.shape != pp.shape:
        raise DomainError("pilot_x and pilot_p must have the same shape")
    out: list[PatternSet] = []
    for j in range(px.shape[0]):
        out.append(PatternSet(tuple(px[j]), Quadrature.X, packet_index))
        out.append(PatternSet(tuple(pp[j]), Quadrature.P, packet_index))
    return out
