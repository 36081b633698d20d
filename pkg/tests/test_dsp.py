import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsqkd.core import DomainError, RngStream
from dsqkd.dsp import (
    CalibrationResult,
    PatternSet,
    Quadrature,
    calibrate_shot_noise,
    debias_displacement,
    derotate,
    estimate_displacement,
    estimate_packet_phase,
    pattern_sets_from_pilots,
    per_set_magnitudes,
    remove_displacement,
    smooth_phase,
)
from dsqkd.receiver import ReceiverParams, measure_vacuum_batch
from dsqkd.transmitter import ModulationParams, psk_displacements


def _triplet(delta, theta, kind=np.cos):
    i = np.arange(3)
    return delta * kind(theta + 2 * np.pi * i / 3)


# --- calibration -----------------------------------------------------------

def test_calibration_recovers_gain():
    params = ReceiverParams(gain_mv=10.0, v_ele=0.01)
    x, p = measure_vacuum_batch(1_000_000, params, RngStream(51, 0).generator())
    result = calibrate_shot_noise(np.stack([x, p], axis=1), 0.01)
    assert 99.0 <= result.n0_mv2 <= 101.0
    assert result.divisor_mv == pytest.approx(10.0, rel=5e-3)


def test_calibration_unit_gain_no_electronics():
    params = ReceiverParams(gain_mv=1.0, v_ele=0.0)
    x, p = measure_vacuum_batch(200_000, params, RngStream(52, 0).generator())
    result = calibrate_shot_noise(np.stack([x, p], axis=1), 0.0)
    assert result.n0_mv2 == pytest.approx(1.0, rel=0.02)


def test_calibration_rejects_few_samples():
    with pytest.raises(DomainError, match="1000"):
        calibrate_shot_noise(np.zeros((999, 2)), 0.0)


def test_calibration_rejects_constant_input():
    with pytest.raises(DomainError, match="fault"):
        calibrate_shot_noise(np.full((2000, 2), 3.3), 0.0)


def test_calibration_result_validation():
    with pytest.raises(DomainError):
        CalibrationResult(n0_mv2=0.0, v_ele_assumed=0.0, samples_used=10)


# --- displacement magnitude -----------------------------------------------

def test_displacement_exact_on_noiseless_triplet():
    u = _triplet(13.0, 0.4)
    sets = [PatternSet(tuple(u), Quadrature.X)]
    assert estimate_displacement(sets) == pytest.approx(13.0, abs=1e-12)


def test_displacement_exact_across_phase_and_magnitude():
    for delta in (1.0, 13.0, 100.0):
        for theta in np.linspace(0, 2 * np.pi, 11):
            u = _triplet(delta, theta)
            assert estimate_displacement(u.reshape(1, 3)) == pytest.approx(delta, abs=1e-12)


def test_displacement_zero_for_constant_triplet():
    assert estimate_displacement(np.array([[4.2, 4.2, 4.2]])) == 0.0


def test_displacement_empty_rejected():
    with pytest.raises(DomainError):
        estimate_displacement(np.zeros((0, 3)))


def test_displacement_noise_bias():
    # k = 1e4 noisy sets at the reference point: estimate within 1% of 13,
    # with a positive bias near noise_var / (3 * delta) (Rice mean, two
    # noise dimensions after triplet mean removal).
    rng = RngStream(53, 0).generator()
    k, delta, noise_var = 10_000, 13.0, 1.45
    thetas = rng.uniform(0, 2 * np.pi, size=k)
    u = delta * np.cos(thetas[:, None] + 2 * np.pi * np.arange(3) / 3)
    u = u + rng.normal(0, math.sqrt(noise_var), size=(k, 3))
    est = estimate_displacement(u)
    assert abs(est - delta) < 0.13  # within 1%
    bias_pred = noise_var / (3 * delta)  # 0.0372
    se = math.sqrt(2 / 3 * noise_var / k)
    assert est - delta == pytest.approx(bias_pred, abs=4 * se)
    # the second-order debias collapses the residual toward zero
    corrected = debias_displacement(est, noise_var)
    assert abs(corrected - delta) < 4 * se


def test_debias_validation():
    with pytest.raises(DomainError):
        debias_displacement(0.0, 1.0)
    with pytest.raises(DomainError):
        debias_displacement(13.0, -1.0)


@given(scale=st.floats(min_value=0.01, max_value=100), theta=st.floats(0, 6.28))
def test_displacement_scale_equivariance(scale, theta):
    u = _triplet(13.0, theta).reshape(1, 3)
    base = estimate_displacement(u)
    scaled = estimate_displacement(scale * u)
    assert math.isclose(scaled, scale * base, rel_tol=1e-12)


# --- packet phase -----------------------------------------------------------

def test_phase_zero_on_zero_phase_pilots():
    sets = [PatternSet(tuple(_triplet(13.0, 0.0)), Quadrature.X)]
    assert estimate_packet_phase(sets) == pytest.approx(0.0, abs=1e-12)


def test_phase_recovers_pi_over_six():
    u = _triplet(13.0, math.pi / 6)
    # corrected estimator identities: sin part = 13 sin(pi/6), cos part = 13 cos(pi/6)
    assert (u[2] - u[1]) / math.sqrt(3) == pytest.approx(13 * math.sin(math.pi / 6), rel=1e-12)
    assert (2 * u[0] - u[1] - u[2]) / 3 == pytest.approx(13 * math.cos(math.pi / 6), rel=1e-12)
    sets = [PatternSet(tuple(u), Quadrature.X)]
    assert estimate_packet_phase(sets) == pytest.approx(math.pi / 6, abs=1e-12)


def test_phase_exact_across_full_circle():
    for theta in np.linspace(-math.pi, math.pi, 37, endpoint=False):
        sets = [PatternSet(tuple(_triplet(13.0, theta)), Quadrature.X)]
        err = math.remainder(estimate_packet_phase(sets) - theta, 2 * math.pi)
        assert abs(err) <= 1e-12


def test_p_quadrature_sets_agree_with_x():
    # P measurements are the same pattern shifted by -pi/2; with the
    # quadrature's pattern offset both sets report the channel phase
    theta = 0.77
    sets = pattern_sets_from_pilots(_triplet(13.0, theta), _triplet(13.0, theta, np.sin))
    assert len(sets) == 2
    only_x = estimate_packet_phase([sets[0]])
    only_p = estimate_packet_phase([sets[1]])
    both = estimate_packet_phase(sets)
    assert only_x == pytest.approx(theta, abs=1e-12)
    assert only_p == pytest.approx(theta, abs=1e-12)
    assert both == pytest.approx(theta, abs=1e-12)


@given(phi=st.floats(min_value=-3, max_value=3), theta=st.floats(0, 6.28))
def test_phase_shift_equivariance(phi, theta):
    base = estimate_packet_phase([PatternSet(tuple(_triplet(13.0, theta)), Quadrature.X)])
    shifted = estimate_packet_phase(
        [PatternSet(tuple(_triplet(13.0, theta + phi)), Quadrature.X)]
    )
    assert abs(math.remainder(shifted - (base + phi), 2 * math.pi)) < 1e-9


@given(scale=st.floats(min_value=0.01, max_value=100))
def test_phase_scale_invariance(scale):
    u = _triplet(13.0, 1.1).reshape(1, 3)
    a = estimate_packet_phase(u, offsets=[0.0])
    b = estimate_packet_phase(scale * u, offsets=[0.0])
    assert math.isclose(a, b, rel_tol=0, abs_tol=1e-12)


def test_degenerate_sets_skipped_then_rejected():
    good = PatternSet(tuple(_triplet(13.0, 0.3)), Quadrature.X)
    zero = PatternSet((0.0, 0.0, 0.0), Quadrature.X)
    assert estimate_packet_phase([good, zero]) == pytest.approx(0.3, abs=1e-12)
    with pytest.raises(DomainError, match="degenerate"):
        estimate_packet_phase([zero, zero])


def test_raw_array_requires_offsets():
    with pytest.raises(DomainError, match="offsets"):
        estimate_packet_phase(np.ones((2, 3)))


def test_circular_mean_over_sets():
    # two sets at +-0.2 around pi (wrap-sensitive region) average to pi
    sets = np.stack([_triplet(13.0, math.pi - 0.2), _triplet(13.0, math.pi + 0.2)])
    est = estimate_packet_phase(sets, offsets=[0.0, 0.0])
    assert abs(math.remainder(est - math.pi, 2 * math.pi)) < 1e-12


# --- smoothing ---------------------------------------------------------------

def test_smoothing_weight_one_is_identity():
    raw = [0.1, -0.5, 2.0, 3.1]
    np.testing.assert_allclose(smooth_phase(raw, 1.0), raw, atol=1e-15)


def test_smoothing_fixed_point():
    out = smooth_phase([0.7] * 20, 0.3)
    np.testing.assert_allclose(out, 0.7, atol=1e-15)


def test_smoothing_weight_validated():
    with pytest.raises(DomainError):
        smooth_phase([0.0], 0.0)
    with pytest.raises(DomainError):
        smooth_phase([0.0], 1.5)


def test_smoothing_tracks_through_wrap():
    # raw estimates wrap at +-pi while the true phase ramps linearly; the
    # smoothed output must follow continuously without 2*pi glitches
    true = np.linspace(0, 6 * math.pi, 4000)
    raw = np.angle(np.exp(1j * true))
    out = smooth_phase(raw, 0.5)
    assert np.all(np.abs(np.diff(out)) < 0.1)
    assert out[-1] == pytest.approx(true[-1], abs=0.05)


def test_smoothing_steady_state_error_variance():
    # raw = Wiener walk + iid estimation noise; steady-state EWMA error
    # variance [(1-w)^2 q + w^2 s2] / (1 - (1-w)^2), checked within 20%
    w, q, s2 = 0.2, 1e-4, 0.01
    rng = RngStream(54, 0).generator()
    n = 200_000
    truth = np.cumsum(rng.normal(0, math.sqrt(q), size=n))
    raw = truth + rng.normal(0, math.sqrt(s2), size=n)
    smoothed = smooth_phase(raw, w)
    err = smoothed[2000:] - truth[2000:]
    predicted = ((1 - w) ** 2 * q + w**2 * s2) / (1 - (1 - w) ** 2)
    assert float(np.var(err)) == pytest.approx(predicted, rel=0.2)


# --- derotation and displacement removal ------------------------------------

def test_derotate_identity():
    x, p = derotate(np.array([1.0, 2.0]), np.array([0.5, -0.5]), 0.0)
    np.testing.assert_array_equal(x, [1.0, 2.0])
    np.testing.assert_array_equal(p, [0.5, -0.5])


@given(theta=st.floats(min_value=-7, max_value=7, allow_nan=False))
def test_rotate_then_derotate_is_identity(theta):
    from dsqkd.core import rotate

    x, p = rotate(1.3, -2.2, theta)
    bx, bp = derotate(x, p, theta)
    assert math.isclose(float(bx), 1.3, abs_tol=1e-12)
    assert math.isclose(float(bp), -2.2, abs_tol=1e-12)


def test_remove_displacement_exact_cancellation():
    mod = ModulationParams(psk_order=4)
    rng = RngStream(55, 0).generator()
    gauss = rng.normal(0, 1, size=(500, 2))
    symbols = rng.integers(0, 4, size=500)
    disp = psk_displacements(symbols, mod, 13.0)
    rx_x = gauss[:, 0] + disp[:, 0]
    rx_p = gauss[:, 1] + disp[:, 1]
    out_x, out_p = remove_displacement(rx_x, rx_p, symbols, mod, 13.0)
    np.testing.assert_allclose(out_x, gauss[:, 0], atol=1e-12)
    np.testing.assert_allclose(out_p, gauss[:, 1], atol=1e-12)


def test_remove_displacement_wrong_delta_leaves_offset():
    mod = ModulationParams(psk_order=2)
    symbols = np.zeros(10_000, dtype=int)
    rx_x = np.full(10_000, 13.0)
    rx_p = np.zeros(10_000)
    out_x, _ = remove_displacement(rx_x, rx_p, symbols, mod, 12.0)
    assert np.allclose(out_x, 1.0)  # delta error shows up as a mean offset


def test_remove_displacement_length_mismatch():
    mod = ModulationParams(psk_order=2)
    with pytest.raises(DomainError, match="mismatch"):
        remove_displacement(np.zeros(3), np.zeros(3), np.zeros(4, dtype=int), mod, 13.0)


def test_pattern_sets_from_pilots_pairs_quadratures():
    px = np.arange(36.0).reshape(12, 3)
    pp = -np.arange(36.0).reshape(12, 3)
    sets = pattern_sets_from_pilots(px, pp, packet_index=5)
    assert len(sets) == 24
    assert sum(1 for s in sets if s.quadrature_tag is Quadrature.X) == 12
    assert all(s.packet_index == 5 for s in sets)


def test_per_set_magnitudes_matches_estimator():
    rng = RngStream(56, 0).generator()
    u = rng.normal(0, 1, size=(40, 3))
    assert estimate_displacement(u) == pytest.approx(float(np.mean(per_set_magnitudes(u))))


def test_pattern_set_requires_three_entries():
    with pytest.raises(DomainError):
        PatternSet((1.0, 2.0), Quadrature.X)
