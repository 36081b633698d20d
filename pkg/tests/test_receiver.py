import math

import numpy as np
import pytest

from dsqkd.channel import ChannelParams, propagate_batch
from dsqkd.core import DomainError, QuadraturePair, RngStream
from dsqkd.receiver import (
    RawSample,
    ReceiverParams,
    heterodyne_measure,
    heterodyne_measure_batch,
    measure_vacuum,
    measure_vacuum_batch,
)
from dsqkd.transmitter import alice_displacement_magnitude, gaussian_modulate


def test_params_validation():
    with pytest.raises(DomainError):
        ReceiverParams(eta=0.0)
    with pytest.raises(DomainError):
        ReceiverParams(v_ele=-0.01)
    with pytest.raises(DomainError):
        ReceiverParams(gamma=0.7)
    with pytest.raises(DomainError):
        ReceiverParams(gain_mv=0.0)


def test_vacuum_unit_variance():
    # vacuum with unit gain and no electronic noise defines the shot-noise unit
    params = ReceiverParams(eta=0.62, v_ele=0.0, gamma=0.5, gain_mv=1.0)
    x, p = measure_vacuum_batch(1_000_000, params, RngStream(31, 0).generator())
    assert 0.99 < float(np.var(x)) < 1.01
    assert 0.99 < float(np.var(p)) < 1.01


def test_vacuum_gain_and_electronic_noise():
    params = ReceiverParams(gain_mv=10.0, v_ele=0.01)
    x, p = measure_vacuum_batch(1_000_000, params, RngStream(32, 0).generator())
    expected = 100.0 * 1.01  # gain^2 * (N0 + v_ele) mV^2
    band = 3 * expected * math.sqrt(2 / 1e6)
    assert abs(float(np.var(x)) - expected) < band


def test_balanced_detector_zero_mean():
    params = ReceiverParams()
    n = 100_000
    x, p = measure_vacuum_batch(n, params, RngStream(33, 0).generator())
    bound = 4 * math.sqrt(101.0 / n)
    assert abs(float(x.mean())) < bound
    assert abs(float(p.mean())) < bound


def test_composed_variance_identity():
    # full chain at the reference point: Var = g*e*T*V_A + 1 + g*e*T*xi + v_ele
    n = 1_000_000
    alice = gaussian_modulate(RngStream(41, 0).generator(), 5.0, n)
    ch = ChannelParams(transmittance=0.28, excess_noise=0.055)
    cx, cp = propagate_batch(alice[:, 0], alice[:, 1], np.zeros(n), ch,
                             RngStream(41, 1).generator())
    rx = ReceiverParams(eta=0.62, v_ele=0.01, gamma=0.5, gain_mv=1.0)
    bx, bp = heterodyne_measure_batch(cx, cp, rx, RngStream(41, 2).generator())
    expected = 0.5 * 0.62 * 0.28 * (5.0 + 0.055) + 1.0 + 0.01  # 1.448774
    band = 3 * expected * math.sqrt(2 / n)
    assert abs(float(np.var(bx)) - expected) < band
    assert abs(float(np.var(bp)) - expected) < band


def test_composed_covariance_identity():
    # <X_A X_B> = sqrt(gamma eta T) V_A
    n = 1_000_000
    alice = gaussian_modulate(RngStream(42, 0).generator(), 5.0, n)
    ch = ChannelParams(transmittance=0.28, excess_noise=0.055)
    cx, cp = propagate_batch(alice[:, 0], alice[:, 1], np.zeros(n), ch,
                             RngStream(42, 1).generator())
    rx = ReceiverParams(eta=0.62, v_ele=0.01, gamma=0.5, gain_mv=1.0)
    bx, bp = heterodyne_measure_batch(cx, cp, rx, RngStream(42, 2).generator())
    expected = math.sqrt(0.5 * 0.62 * 0.28) * 5.0  # 1.47309
    # var(A*B) approx 2 c^2 V_A^2 + V_A * noise_var
    band = 3 * math.sqrt((2 * 0.0868 * 25 + 5 * 1.0148) / n)
    cov = float(np.mean(alice[:, 0] * bx) - alice[:, 0].mean() * bx.mean())
    assert abs(cov - expected) < band


def test_displaced_mean_reaches_target():
    # back-computed Alice magnitude lands at 13 sqrt(N0) on Bob's side
    n = 200_000
    delta_alice = alice_displacement_magnitude(13.0, 0.5, 0.62, 0.28)
    ch = ChannelParams(transmittance=0.28, excess_noise=0.055)
    cx, cp = propagate_batch(np.full(n, delta_alice), np.zeros(n), np.zeros(n), ch,
                             RngStream(43, 1).generator())
    rx = ReceiverParams(eta=0.62, v_ele=0.01, gamma=0.5, gain_mv=1.0)
    bx, _bp = heterodyne_measure_batch(cx, cp, rx, RngStream(43, 2).generator())
    assert float(bx.mean()) == pytest.approx(13.0, abs=4 * math.sqrt(1.45 / n))


def test_gamma_scaling_halves_signal_share():
    n = 1_000_000
    alice = gaussian_modulate(RngStream(44, 0).generator(), 5.0, n)
    ch = ChannelParams(transmittance=0.28, excess_noise=0.0)
    cx, cp = propagate_batch(alice[:, 0], alice[:, 1], np.zeros(n), ch,
                             RngStream(44, 1).generator())
    var = {}
    for gamma in (1.0, 0.5):
        rx = ReceiverParams(eta=0.62, v_ele=0.01, gamma=gamma, gain_mv=1.0)
        bx, _ = heterodyne_measure_batch(cx, cp, rx, RngStream(44, 2).generator())
        var[gamma] = float(np.var(bx))
    signal_full = 0.62 * 0.28 * 5.0
    diff = var[1.0] - var[0.5]
    assert diff == pytest.approx(0.5 * signal_full, rel=0.02)


def test_batch_matches_scalar_bit_for_bit():
    params = ReceiverParams()
    xs = np.linspace(-2, 2, 9)
    ps = np.linspace(1, -1, 9)
    bx, bp = heterodyne_measure_batch(xs, ps, params, RngStream(6, 6).generator())
    gen = RngStream(6, 6).generator()
    for i in range(9):
        s = heterodyne_measure(QuadraturePair(xs[i], ps[i]), params, gen)
        assert s.x_mv == bx[i] and s.p_mv == bp[i]


def test_vacuum_batch_matches_scalar():
    params = ReceiverParams()
    bx, bp = measure_vacuum_batch(5, params, RngStream(7, 7).generator())
    gen = RngStream(7, 7).generator()
    for i in range(5):
        s = measure_vacuum(params, gen)
        assert s.x_mv == bx[i] and s.p_mv == bp[i]


def test_raw_sample_carries_role():
    from dsqkd.core import SlotRole

    s = heterodyne_measure(QuadraturePair(0, 0), ReceiverParams(),
                           RngStream(0, 0).generator(), role=SlotRole.shot_noise())
    assert isinstance(s, RawSample)
    assert s.slot_role.kind.name == "SHOT_NOISE"
