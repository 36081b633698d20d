import math

import numpy as np
import pytest

from dsqkd.channel import (
    ChannelParams,
    PhaseTrack,
    phase_trajectory,
    propagate,
    propagate_batch,
    step_phase,
)
from dsqkd.core import DomainError, QuadraturePair, RngStream


def test_params_validation():
    with pytest.raises(DomainError):
        ChannelParams(transmittance=0.0)
    with pytest.raises(DomainError):
        ChannelParams(transmittance=1.2)
    with pytest.raises(DomainError):
        ChannelParams(excess_noise=-0.1)
    with pytest.raises(DomainError):
        ChannelParams(phase_step_std=-1e-3)


def test_zero_step_keeps_phase_constant():
    params = ChannelParams(phase_step_std=0.0, initial_phase=0.4)
    track = PhaseTrack(theta=0.4)
    gen = RngStream(1, 0).generator()
    for _ in range(10):
        track = step_phase(track, params, gen)
    assert track.theta == 0.4
    assert track.pulse_index == 10


def test_wiener_scaling():
    # after 1e6 steps of std 1e-3 the final phase is N(0, 1); the sample
    # variance over 100 walks sits inside a wide chi-square band
    params = ChannelParams(phase_step_std=1e-3)
    finals = np.array([
        phase_trajectory(0.0, 1_000_000, params, RngStream(123, i).generator())[-1]
        for i in range(100)
    ])
    assert 0.6 <= float(np.var(finals)) <= 1.5


def test_same_stream_same_trajectory():
    params = ChannelParams(phase_step_std=1e-3)
    a = phase_trajectory(0.0, 1000, params, RngStream(9, 5).generator())
    b = phase_trajectory(0.0, 1000, params, RngStream(9, 5).generator())
    np.testing.assert_array_equal(a, b)


def test_trajectory_matches_scalar_steps():
    params = ChannelParams(phase_step_std=2e-3)
    traj = phase_trajectory(0.1, 50, params, RngStream(4, 1).generator())
    track = PhaseTrack(theta=0.1)
    gen = RngStream(4, 1).generator()
    scalar = []
    for _ in range(50):
        track = step_phase(track, params, gen)
        scalar.append(track.theta)
    np.testing.assert_allclose(traj, scalar, rtol=0, atol=1e-15)


def test_identity_channel():
    params = ChannelParams(transmittance=1.0, excess_noise=0.0)
    out = propagate(QuadraturePair(1.3, -0.4), PhaseTrack(0.0), params, RngStream(0, 0).generator())
    assert out.x == pytest.approx(1.3) and out.p == pytest.approx(-0.4)


def test_amplitude_scaling():
    params = ChannelParams(transmittance=0.28, excess_noise=0.0)
    out = propagate(QuadraturePair(13.0, 0.0), PhaseTrack(0.0), params, RngStream(0, 0).generator())
    assert out.x == pytest.approx(math.sqrt(0.28) * 13.0, rel=1e-12)  # 6.87904
    assert out.p == 0.0


def test_rotation_preserves_mean_magnitude():
    params = ChannelParams(transmittance=0.28, excess_noise=0.0)
    for theta in (0.3, 1.2, -2.8):
        out = propagate(QuadraturePair(13.0, 0.0), PhaseTrack(theta), params,
                        RngStream(0, 0).generator())
        assert out.magnitude() == pytest.approx(math.sqrt(0.28) * 13.0, rel=1e-12)


def test_excess_noise_scaled_by_transmittance():
    # vacuum ensemble through (T, xi) picks up per-quadrature variance T*xi
    params = ChannelParams(transmittance=0.28, excess_noise=0.055)
    n = 1_000_000
    x, p = propagate_batch(np.zeros(n), np.zeros(n), np.zeros(n), params,
                           RngStream(21, 0).generator())
    expected = 0.28 * 0.055
    band = 3 * expected * math.sqrt(2 / n)
    assert abs(float(np.var(x)) - expected) < band
    assert abs(float(np.var(p)) - expected) < band


def test_batch_matches_scalar_bit_for_bit():
    params = ChannelParams(transmittance=0.5, excess_noise=0.1)
    thetas = np.linspace(-1, 1, 7)
    xs = np.arange(7.0)
    ps = -np.arange(7.0)
    bx, bp = propagate_batch(xs, ps, thetas, params, RngStream(2, 3).generator())
    gen = RngStream(2, 3).generator()
    for i in range(7):
        out = propagate(QuadraturePair(xs[i], ps[i]), PhaseTrack(thetas[i]), params, gen)
        assert out.x == bx[i] and out.p == bp[i]
