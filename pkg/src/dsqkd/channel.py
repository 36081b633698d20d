"""Fiber channel: amplitude transmittance, excess noise, slow phase drift.

The channel output for an input quadrature pair q is

    sqrt(T) * Rot(theta) * (q + n_xi)

with n_xi i.i.d. per-quadrature noise of variance ``excess_noise``
(Alice-referred, so the measured contribution scales with the full
``gamma * eta * T`` chain).  The drift phase theta performs a Wiener walk,
one Gaussian step per pulse; the walk is stateful per channel instance
while independent experiments parallelize across instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DomainError, QuadraturePair, gaussian_sample, rotate


@dataclass(frozen=True)
class ChannelParams:
    transmittance: float = 0.28
    excess_noise: float = 0.055
    phase_step_std: float = 0.0
    initial_phase: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.transmittance <= 1.0:
            raise DomainError(f"transmittance must be in (0, 1], got {self.transmittance}")
        if self.excess_noise < 0:
            raise DomainError(f"excess_noise must be >= 0, got {self.excess_noise}")
        if self.phase_step_std < 0:
            raise DomainError(f"phase_step_std must be >= 0, got {self.phase_step_std}")


@dataclass(frozen=True)
class PhaseTrack:
    """Current true channel phase and how many pulses produced it."""

    theta: float = 0.0
    pulse_index: int = 0


def step_phase(track: PhaseTrack, params: ChannelParams, rng: np.random.Generator) -> PhaseTrack:
    """Advance the drift walk by one pulse."""
    step = gaussian_sample(rng, 0.0, params.phase_step_std**2)
    return PhaseTrack(theta=track.theta + float(step), pulse_index=track.pulse_index + 1)


def phase_trajectory(
    start: float, n: int, params: ChannelParams, rng: np.random.Generator
) -> np.ndarray:
    """Phases after each of n consecutive steps, starting from ``start``.

    Draw-for-draw identical to n repeated :func:`step_phase` calls on the
    same generator.
    """
    steps = np.asarray(gaussian_sample(rng, 0.0, params.phase_step_std**2, size=n))
    return start + np.cumsum(steps)


def propagate(
    q: QuadraturePair, track: PhaseTrack, params: ChannelParams, rng: np.random.Generator
) -> QuadraturePair:
    """Send one pulse through the channel at the track's current phase."""
    noise = np.asarray(gaussian_sample(rng, 0.0, params.excess_noise, size=2))
    x, p = rotate(q.x + noise[0], q.p + noise[1], track.theta)
    root_t = np.sqrt(params.transmittance)
    return QuadraturePair(float(root_t * x), float(root_t * p))


def propagate_batch(
    xs: np.ndarray,
    ps: np.ndarray,
    thetas: np.ndarray,
    params: ChannelParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`propagate` with a per-pulse phase array.

    Noise draws match a scalar loop: one (n, 2) block, row i consumed by
    pulse i.
    """
    xs = np.asarray(xs, dtype=float)
    noise = np.asarray(gaussian_sample(rng, 0.0, params.excess_noise, size=(xs.size, 2)))
    x, p = rotate(xs + noise[:, 0], np.asarray(ps, dtype=float) + noise[:, 1], thetas)
    root_t = np.sqrt(params.transmittance)
    return root_t * x, root_t * p
