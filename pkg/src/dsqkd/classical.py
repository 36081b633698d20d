"""Classical-data decisions and figures of merit: PSK decisions, Q, BER."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import DomainError
from .transmitter import ModulationParams

# z for a 95% central normal interval, as used by the Wilson score below.
_WILSON_Z = 1.96


@dataclass(frozen=True)
class BitErrorCount:
    errors: int
    trials: int
    ber: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class LinkReport:
    """Classical figures of merit for one experiment."""

    modulation: int
    q_factor: float
    q_factor_modulation_only: float
    ber_analytic: float
    ber_empirical: float
    bit_errors: int
    bits_total: int
    ber_ci_low: float
    ber_ci_high: float
    symbol_errors: int
    data_rate_bps: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.ber_empirical <= 1.0:
            raise DomainError("empirical BER outside [0, 1]")
        if self.q_factor < 0:
            raise DomainError("q_factor must be >= 0")


def demodulate_psk(x, p, mod: ModulationParams):
    """Nearest-sector PSK decision on phase-corrected samples.

    Works on scalars or arrays.  Equal-magnitude PSK under isotropic
    Gaussian noise makes the angular sector the maximum-likelihood rule.
    Samples exactly on a decision boundary (including the origin) resolve
    to the lower symbol index.
    """
    m = mod.psk_order
    angles = np.arctan2(p, x)
    t = (angles - mod.rotation_offset) * m / (2.0 * np.pi)
    k = np.ceil(t - 0.5).astype(np.int64)
    sym = k % m
    # exact sector boundaries resolve to the lower of the two adjacent
    # symbol indices; for the wrap-around pair (M-1, 0) that is 0
    boundary = (t - np.floor(t)) == 0.5
    sym = np.where(boundary, np.minimum(sym, (k + 1) % m), sym)
    if np.ndim(x) == 0:
        return int(sym)
    return sym


def q_factor(d0: float, d1: float, s0: float, s1: float) -> float:
    """Separation-to-noise ratio |d0 - d1| / (s0 + s1) of two levels."""
    if s0 <= 0 or s1 <= 0:
        raise DomainError(f"level spreads must be > 0, got {s0}, {s1}")
    return abs(d0 - d1) / (s0 + s1)


def ber_from_q(q: float) -> float:
    """BER = 0.5 * erfc(Q / sqrt(2)); strictly decreasing in Q."""
    if q < 0:
        raise DomainError(f"q must be >= 0, got {q}")
    return 0.5 * float(special.erfc(q / math.sqrt(2.0)))


def count_bit_errors(tx, rx) -> BitErrorCount:
    """Empirical BER with a Wilson 95% score interval."""
    tx_arr = np.asarray(tx, dtype=np.uint8)
    rx_arr = np.asarray(rx, dtype=np.uint8)
    if tx_arr.shape != rx_arr.shape:
        raise DomainError(f"length mismatch: {tx_arr.size} vs {rx_arr.size}")
    k = int(np.count_nonzero(tx_arr != rx_arr))
    return bit_error_rate_from_counts(k, int(tx_arr.size))


def bit_error_rate_from_counts(errors: int, trials: int) -> BitErrorCount:
    """Wilson-interval BER summary from already-accumulated counts."""
    if trials <= 0:
        raise DomainError("empty bit streams")
    if not 0 <= errors <= trials:
        raise DomainError(f"error count {errors} outside [0, {trials}]")
    lo, hi = _wilson_interval(errors, trials)
    return BitErrorCount(errors=errors, trials=trials, ber=errors / trials, ci_low=lo, ci_high=hi)


def _wilson_interval(k: int, n: int) -> tuple[float, float]:
    z2 = _WILSON_Z * _WILSON_Z
    p = k / n
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = (_WILSON_Z / denom) * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class ClusterMoments:
    """Streaming per-symbol first and second moments of (x, p) samples."""

    order: int
    count: np.ndarray
    sum_x: np.ndarray
    sum_p: np.ndarray
    sum_xx: np.ndarray
    sum_pp: np.ndarray
    sum_xp: np.ndarray

    @staticmethod
    def empty(order: int) -> "ClusterMoments":
        z = np.zeros(order)
        return ClusterMoments(order, z.copy(), z.copy(), z.copy(), z.copy(), z.copy(), z.copy())

    def add(self, xs: np.ndarray, ps: np.ndarray, symbols: np.ndarray) -> "ClusterMoments":
        count = self.count + np.bincount(symbols, minlength=self.order)
        sum_x = self.sum_x + np.bincount(symbols, weights=xs, minlength=self.order)
        sum_p = self.sum_p + np.bincount(symbols, weights=ps, minlength=self.order)
        sum_xx = self.sum_xx + np.bincount(symbols, weights=xs * xs, minlength=self.order)
        sum_pp = self.sum_pp + np.bincount(symbols, weights=ps * ps, minlength=self.order)
        sum_xp = self.sum_xp + np.bincount(symbols, weights=xs * ps, minlength=self.order)
        return ClusterMoments(self.order, count, sum_x, sum_p, sum_xx, sum_pp, sum_xp)

    def merge(self, other: "ClusterMoments") -> "ClusterMoments":
        return ClusterMoments(
            self.order,
            self.count + other.count,
            self.sum_x + other.sum_x,
            self.sum_p + other.sum_p,
            self.sum_xx + other.sum_xx,
            self.sum_pp + other.sum_pp,
            self.sum_xp + other.sum_xp,
        )

    def mean(self, k: int) -> np.ndarray:
        n = self.count[k]
        return np.array([self.sum_x[k], self.sum_p[k]]) / n

    def covariance(self, k: int) -> np.ndarray:
        n = self.count[k]
        mx, mp_ = self.mean(k)
        cxx = self.sum_xx[k] / n - mx * mx
        cpp = self.sum_pp[k] / n - mp_ * mp_
        cxp = self.sum_xp[k] / n - mx * mp_
        return np.array([[cxx, cxp], [cxp, cpp]])


def psk_q_factor(clusters: ClusterMoments, shot_plus_electronic: float | None = None) -> float:
    """Q of an M-PSK constellation from per-cluster moments.

    For each adjacent constellation pair, cluster means and spreads are
    projected on the axis joining the two empirical centers (the chord,
    separation 2*delta*sin(pi/M)) and fed to :func:`q_factor`; the mean
    over pairs is returned.  With ``shot_plus_electronic`` set, that
    variance is subtracted from the projected spreads first, giving the
    modulation-only variant of Q.
    """
    m = clusters.order
    pairs = [(0, 1)] if m == 2 else [(k, (k + 1) % m) for k in range(m)]
    qs = []
    for a, b in pairs:
        if clusters.count[a] < 2 or clusters.count[b] < 2:
            raise DomainError(f"cluster {a} or {b} has too few samples for Q")
        ca, cb = clusters.mean(a), clusters.mean(b)
        chord = cb - ca
        norm = float(np.hypot(*chord))
        if norm == 0:
            raise DomainError("degenerate constellation: coincident cluster centers")
        u = chord / norm
        var_a = float(u @ clusters.covariance(a) @ u)
        var_b = float(u @ clusters.covariance(b) @ u)
        if shot_plus_electronic is not None:
            var_a = max(var_a - shot_plus_electronic, 1e-12)
            var_b = max(var_b - shot_plus_electronic, 1e-12)
        qs.append(q_factor(float(u @ ca), float(u @ cb), math.sqrt(var_a), math.sqrt(var_b)))
    return float(np.mean(qs))
