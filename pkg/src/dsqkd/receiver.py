"""Bob: shot-noise-limited heterodyne detection with a millivolt boundary.

Heterodyne measures both quadratures of one pulse.  Per quadrature the
detector reports

    gain_mv * ( sqrt(gamma * eta) * incoming + n0 + ne )

with Var(n0) = N0 = 1 (shot noise) and Var(ne) = v_ele (electronic noise,
detector-referred).  Efficiency eta acts as an amplitude factor inside the
measurement, equivalent to loss in front of an ideal detector; composed
with the channel this reproduces the measured-variance identity
gamma*eta*T*V_A + N0 + gamma*eta*T*xi + v_ele.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, QuadraturePair, SlotRole, gaussian_sample


@dataclass(frozen=True)
class ReceiverParams:
    eta: float = 0.62
    v_ele: float = 0.01
    gamma: float = 0.5
    gain_mv: float = 10.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must be in (0, 1], got {self.eta}")
        if self.v_ele < 0:
            raise DomainError(f"v_ele must be >= 0, got {self.v_ele}")
        if self.gamma not in (1.0, 0.5):
            raise DomainError(f"gamma must be 1 (homodyne) or 1/2 (heterodyne), got {self.gamma}")
        if self.gain_mv <= 0:
            raise DomainError(f"gain_mv must be > 0, got {self.gain_mv}")

    @property
    def amplitude_factor(self) -> float:
        return math.sqrt(self.gamma * self.eta)


@dataclass(frozen=True)
class RawSample:
    """Detector output for one pulse, in millivolts."""

    x_mv: float
    p_mv: float
    slot_role: SlotRole | None = None


def _detection_noise(rng: np.random.Generator, params: ReceiverParams, n: int) -> np.ndarray:
    # One (n, 4) block per batch: columns are shot-x, shot-p, elec-x,
    # elec-p, so a batch consumes the stream exactly like n scalar calls.
    block = np.asarray(gaussian_sample(rng, 0.0, 1.0, size=(n, 4)))
    block[:, 2:] *= math.sqrt(params.v_ele)
    return block


def heterodyne_measure(
    incoming: QuadraturePair,
    params: ReceiverParams,
    rng: np.random.Generator,
    role: SlotRole | None = None,
) -> RawSample:
    """Measure both quadratures of one channel-output pulse."""
    noise = _detection_noise(rng, params, 1)[0]
    k = params.amplitude_factor * params.gain_mv
    return RawSample(
        x_mv=float(k * incoming.x + params.gain_mv * (noise[0] + noise[2])),
        p_mv=float(k * incoming.p + params.gain_mv * (noise[1] + noise[3])),
        slot_role=role,
    )


def heterodyne_measure_batch(
    xs: np.ndarray, ps: np.ndarray, params: ReceiverParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`heterodyne_measure`; returns (x_mv, p_mv) arrays."""
    xs = np.asarray(xs, dtype=float)
    noise = _detection_noise(rng, params, xs.size)
    k = params.amplitude_factor * params.gain_mv
    x_mv = k * xs + params.gain_mv * (noise[:, 0] + noise[:, 2])
    p_mv = k * np.asarray(ps, dtype=float) + params.gain_mv * (noise[:, 1] + noise[:, 3])
    return x_mv, p_mv


def measure_vacuum(
    params: ReceiverParams, rng: np.random.Generator, role: SlotRole | None = None
) -> RawSample:
    """Measure an empty slot: per-quadrature variance gain^2 * (N0 + v_ele)."""
    noise = _detection_noise(rng, params, 1)[0]
    return RawSample(
        x_mv=float(params.gain_mv * (noise[0] + noise[2])),
        p_mv=float(params.gain_mv * (noise[1] + noise[3])),
        slot_role=role,
    )


def measure_vacuum_batch(
    n: int, params: ReceiverParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`measure_vacuum`."""
    noise = _detection_noise(rng, params, n)
    return (
        params.gain_mv * (noise[:, 0] + noise[:, 2]),
        params.gain_mv * (noise[:, 1] + noise[:, 3]),
    )
