import numpy as np
import pytest

from srmid.commutation import design_commutation, imperfect_commutation
from srmid.control import PidController, RampReference, simulate_closed_loop
from srmid.estimator import FourierBasis, build_design, excitation_rank
from srmid.experiment import CampaignConfig, run_campaign
from srmid.plant import MotorGeometry, default_true_gain
from srmid.validation import (compare_commutations, first_harmonic_model, fit_report,
                              identified_vs_first_harmonic, ripple_profile, tracking_metrics)


def test_fit_report_pure_scaling(truth):
    rep = fit_report(truth.scaled(2.0), truth)
    assert rep.scale == pytest.approx(0.5, rel=1e-14)
    assert rep.relative_rms < 1e-12


@pytest.mark.parametrize("c", [-3.0, 1e-3, 1.0, 7.5])
def test_alignment_is_exact(truth, c):
    assert fit_report(truth.scaled(c), truth).relative_rms < 1e-12


def test_fit_report_identified(posterior, truth):
    rep = fit_report(posterior, truth)
    assert rep.relative_rms < 0.05
    assert rep.coverage_95 >= 0.9
    assert 0.5 < rep.scale < 2.0


def test_fit_report_geometry_mismatch(truth):
    with pytest.raises(ValueError):
        fit_report(default_true_gain(MotorGeometry(50, 3)), truth)


def test_tracking_metrics_examples():
    assert tracking_metrics(np.zeros(10)) == (0.0, 0.0)
    inf, two = tracking_metrics(np.full(16, -0.5))
    assert inf == 0.5 and two == pytest.approx(0.5 * 4)
    assert tracking_metrics(np.arange(5.0), start=5) == (0.0, 0.0)


def test_ripple_examples(truth):
    exact = ripple_profile(design_commutation(truth), truth)
    assert exact.peak < 1e-9
    base = design_commutation(first_harmonic_model(truth), kind="first-harmonic")
    rp = ripple_profile(base, truth)
    assert rp.peak > 1e-2
    assert abs(np.mean(rp.ripple)) < 1e-12


def test_first_harmonic_model(posterior):
    m = first_harmonic_model(posterior)
    c = m.coeff_matrix
    assert np.all(c[:, 0] == 0) and np.all(c[:, 3:] == 0)
    np.testing.assert_array_equal(c[:, 1:3], posterior.gain_model().coeff_matrix[:, 1:3])


def test_identical_commutations_ratio_one(truth, plant, controller, geometry):
    cf = design_commutation(truth)
    ref = RampReference(0.1, 4 * geometry.pitch)
    assert compare_commutations(cf, cf, plant, ref, controller).ratio == 1.0


def test_identified_beats_first_harmonic(posterior, plant, controller, truth, geometry):
    cmp = identified_vs_first_harmonic(posterior, plant, controller, omega_r=0.1)
    assert cmp.ratio <= 0.1
    assert cmp.einf_identified < cmp.einf_baseline
    # designing from the truth only removes what the identification error leaves
    ref = RampReference(0.1, 12 * geometry.pitch)
    base = design_commutation(first_harmonic_model(posterior), kind="first-harmonic")
    floor = compare_commutations(design_commutation(truth), base, plant, ref, controller)
    assert floor.ratio <= cmp.ratio


def test_ripple_excitation_trend(truth, plant, controller, geometry):
    basis = FourierBasis(131, 5)
    peaks, sv = [], []
    for phi_o in (0.05, 0.1, 0.2, 0.4):
        peaks.append(ripple_profile(imperfect_commutation(geometry, phi_o), truth).peak)
        cfg = CampaignConfig(-phi_o, phi_o, 2 * phi_o, stroke_teeth=6.0)
        ds = run_campaign(cfg, plant, controller, seed=0)
        sv.append(excitation_rank(build_design(ds, basis)).singular_values.min())
    assert np.all(np.diff(peaks) > 0)
    assert np.all(np.diff(sv) > 0)


def test_scaled_model_with_rescaled_loop_gain_is_identical(truth, plant, controller, geometry):
    # currents designed from 3*ghat are a third of those from ghat; a 3x controller
    # restores the loop gain
    c = 3.0
    cf1 = design_commutation(truth)
    cf3 = design_commutation(truth.scaled(c))
    k = controller
    ctl3 = PidController(c * k.kp, c * k.ki, c * k.kd, k.tau, k.dt)
    ref = RampReference(0.05, 3 * geometry.pitch)
    a = simulate_closed_loop(plant, cf1, k, ref, np.random.default_rng(1))
    b = simulate_closed_loop(plant, cf3, ctl3, ref, np.random.default_rng(1))
    np.testing.assert_allclose(b.phi, a.phi, rtol=0, atol=1e-12)
    np.testing.assert_allclose(b.u, a.u, rtol=1e-9, atol=1e-15)
