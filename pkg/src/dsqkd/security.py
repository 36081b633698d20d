"""CV-QKD post-processing: parameter estimation and the secret key rate.

Channel parameters are inverted from two measured moments of the
Gaussian-modulated data (displacement removed):

    cov(A, B) = sqrt(gamma * eta * T) * V_A
    Var(B)    = gamma * eta * T * V_A + N0 + gamma * eta * T * xi + v_ele

The asymptotic collective-attack key rate in reverse reconciliation for a
heterodyne receiver is K = R * (beta * I_AB - chi_BE), with Eve's Holevo
information chi_BE computed from the five symplectic eigenvalues of the
relevant Gaussian covariance matrices.  I_AB is the full
log2((V + chi_tot)/(1 + chi_tot)): heterodyne reads both quadratures, so
no 1/2 prefactor appears.  Negative excess-noise estimates and negative
per-pulse rates are reported as-is (only the bits-per-second figure is
clamped at zero) so statistical fluctuations stay visible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import DomainError

_DISC_REJECT = -1e-6  # discriminants below this are unphysical inputs
# Tolerated numerical dip of lambda below 1.  Near analytically degenerate
# points (T -> 1 with xi -> 0, where two eigenvalues coalesce at 1) the
# quadratic-root formulas lose ~sqrt(eps) digits to cancellation, so dips
# of order 1e-8 are expected in double precision and clamped; anything
# larger signals genuinely unphysical inputs.
_EIG_CLAMP = 2e-7


@dataclass(frozen=True)
class SecurityParams:
    v_a: float = 5.0
    transmittance: float = 0.28
    excess_noise: float = 0.055
    eta: float = 0.62
    v_ele: float = 0.01
    gamma: float = 0.5
    reconciliation_efficiency: float = 0.9
    effective_rate_hz: float = 1.22e6

    def __post_init__(self) -> None:
        if self.v_a <= 0:
            raise DomainError(f"v_a must be > 0, got {self.v_a}")
        if not 0.0 < self.transmittance <= 1.0:
            raise DomainError(f"transmittance must be in (0, 1], got {self.transmittance}")
        if self.excess_noise < 0:
            raise DomainError(f"excess_noise must be >= 0, got {self.excess_noise}")
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"eta must be in (0, 1], got {self.eta}")
        if self.v_ele < 0:
            raise DomainError(f"v_ele must be >= 0, got {self.v_ele}")
        if not 0.0 < self.reconciliation_efficiency <= 1.0:
            raise DomainError(
                f"reconciliation_efficiency must be in (0, 1], got {self.reconciliation_efficiency}"
            )
        if self.effective_rate_hz <= 0:
            raise DomainError(f"effective_rate_hz must be > 0, got {self.effective_rate_hz}")


@dataclass(frozen=True)
class NoiseDecomposition:
    chi_line: float
    chi_het: float
    chi_tot: float
    v: float


@dataclass(frozen=True)
class SymplecticSpectrum:
    lambdas: tuple[float, float, float, float, float]
    a: float
    b: float
    c: float
    d: float


@dataclass(frozen=True)
class SecurityEstimate:
    t_hat: float
    xi_hat: float
    i_ab: float
    chi_be: float
    key_rate_per_pulse: float
    key_rate_bps: float
    samples_used: int = 0
    t_hat_anomalous: bool = False
    xi_hat_negative: bool = False


def estimate_transmittance(cov_ab: float, v_a: float, gamma: float, eta: float) -> float:
    """Invert cov(A, B) = sqrt(gamma eta T) V_A for T."""
    if v_a <= 0:
        raise DomainError(f"v_a must be > 0, got {v_a}")
    if gamma <= 0 or eta <= 0:
        raise DomainError("gamma and eta must be > 0")
    return (cov_ab / v_a) ** 2 / (gamma * eta)


def transmittance_is_anomalous(t_hat: float) -> bool:
    """Channel gain anomaly: estimate outside the physical band (0, 1.05]."""
    return not 0.0 < t_hat <= 1.05


def estimate_excess_noise(
    v_b: float, t_hat: float, v_a: float, gamma: float, eta: float, v_ele: float
) -> float:
    """Invert the measured-variance identity for xi (may come out negative)."""
    if t_hat <= 0:
        raise DomainError(f"t_hat must be > 0, got {t_hat}")
    get = gamma * eta * t_hat
    return (v_b - get * v_a - 1.0 - v_ele) / get


def g_holevo(x: float) -> float:
    """Bosonic entropy term G(x) = (x+1) log2(x+1) - x log2(x), G(0) = 0."""
    if x < 0:
        raise DomainError(f"g_holevo needs x >= 0, got {x}")
    if x == 0:
        return 0.0
    return (x + 1.0) * math.log2(x + 1.0) - x * math.log2(x)


def noise_decomposition(p: SecurityParams) -> NoiseDecomposition:
    """Input-referred channel and detection noises and their total."""
    t = p.transmittance
    chi_line = 1.0 / t - 1.0 + p.excess_noise
    chi_het = (2.0 + 2.0 * p.v_ele - p.eta) / p.eta
    return NoiseDecomposition(
        chi_line=chi_line,
        chi_het=chi_het,
        chi_tot=chi_line + chi_het / t,
        v=p.v_a + 1.0,
    )


def _lambda_pair(s: float, prod: float) -> tuple[float, float]:
    """Roots lambda^2 = (s +- sqrt(s^2 - 4 prod)) / 2, guarded near zero."""
    disc = s * s - 4.0 * prod
    if disc < _DISC_REJECT:
        raise DomainError(f"negative discriminant {disc}: unphysical parameters")
    root = math.sqrt(max(disc, 0.0))
    lam_sq_hi = 0.5 * (s + root)
    lam_sq_lo = 0.5 * (s - root)
    if lam_sq_lo < _DISC_REJECT:
        raise DomainError(f"negative eigenvalue square {lam_sq_lo}: unphysical parameters")
    return math.sqrt(max(lam_sq_hi, 0.0)), math.sqrt(max(lam_sq_lo, 0.0))


def symplectic_spectrum(nd: NoiseDecomposition, t: float) -> SymplecticSpectrum:
    """Symplectic eigenvalues of the shared and conditional Gaussian states."""
    if t <= 0:
        raise DomainError(f"transmittance must be > 0, got {t}")
    v = nd.v
    a = v * v * (1.0 - 2.0 * t) + 2.0 * t + t * t * (v + nd.chi_line) ** 2
    b = (t * (v * nd.chi_line + 1.0)) ** 2
    root_b = math.sqrt(b)
    denom = (t * (v + nd.chi_tot)) ** 2
    c = (
        a * nd.chi_het**2
        + b
        + 1.0
        + 2.0 * nd.chi_het * (v * root_b + t * (v + nd.chi_line))
        + 2.0 * t * (v * v - 1.0)
    ) / denom
    d = (v + root_b * nd.chi_het) ** 2 / denom
    l1, l2 = _lambda_pair(a, b)
    l3, l4 = _lambda_pair(c, d)
    return SymplecticSpectrum(lambdas=(l1, l2, l3, l4, 1.0), a=a, b=b, c=c, d=d)


def holevo_bound(s: SymplecticSpectrum) -> float:
    """Eve's information chi_BE = sum_{1,2} G((l-1)/2) - sum_{3,4,5} G((l-1)/2)."""
    terms = []
    for lam in s.lambdas:
        x = 0.5 * (lam - 1.0)
        if x < -0.5 * _EIG_CLAMP:
            raise DomainError(f"symplectic eigenvalue {lam} below 1: unphysical")
        terms.append(g_holevo(max(x, 0.0)))
    return terms[0] + terms[1] - (terms[2] + terms[3] + terms[4])


def mutual_information(v: float, chi_tot: float) -> float:
    """Alice-Bob mutual information log2((V + chi_tot)/(1 + chi_tot))."""
    if v < 1:
        raise DomainError(f"v must be >= 1, got {v}")
    if chi_tot < 0:
        raise DomainError(f"chi_tot must be >= 0, got {chi_tot}")
    return math.log2((v + chi_tot) / (1.0 + chi_tot))


def secret_key_rate(p: SecurityParams, samples_used: int = 0) -> SecurityEstimate:
    """Compose the noise decomposition, I_AB and chi_BE into a key rate."""
    nd = noise_decomposition(p)
    spectrum = symplectic_spectrum(nd, p.transmittance)
    i_ab = mutual_information(nd.v, nd.chi_tot)
    chi_be = holevo_bound(spectrum)
    per_pulse = p.reconciliation_efficiency * i_ab - chi_be
    return SecurityEstimate(
        t_hat=p.transmittance,
        xi_hat=p.excess_noise,
        i_ab=i_ab,
        chi_be=chi_be,
        key_rate_per_pulse=per_pulse,
        key_rate_bps=max(per_pulse, 0.0) * p.effective_rate_hz,
        samples_used=samples_used,
        t_hat_anomalous=transmittance_is_anomalous(p.transmittance),
        xi_hat_negative=p.excess_noise < 0,
    )


def max_tolerable_excess_noise(p: SecurityParams, tol: float = 1e-8) -> float:
    """Bisection root of K(xi) = 0; requires a live link at xi = 0."""

    def k_of(xi: float) -> float:
        return secret_key_rate(replace(p, excess_noise=xi)).key_rate_per_pulse

    if k_of(0.0) <= 0:
        raise DomainError("key rate is non-positive even at zero excess noise")
    lo, hi = 0.0, 0.1
    while k_of(hi) > 0:
        hi *= 2.0
        if hi > 1e6:
            raise DomainError("key rate never becomes negative: no root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if k_of(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
