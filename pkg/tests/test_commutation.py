import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from srmid.commutation import (CommutationFunction, InfeasibleCommutationError, SaturationLimits,
                               TorqueSharingFunction, commutate, design_commutation,
                               f_imp_eval, imperfect_commutation, simple_sinusoid, tooth_grid,
                               tsf_eval)
from srmid.plant import MotorGeometry, TorqueGainModel, default_true_gain, gain_eval
from srmid.validation import ripple_profile

GEO = MotorGeometry(131, 3)
TSF = TorqueSharingFunction()
SAT = SaturationLimits()


@pytest.fixture(scope="module")
def sweep():
    return np.random.default_rng(7).uniform(-1.0, 1.0, 10_000)


@pytest.mark.parametrize("sign", [1, -1])
def test_tsf_partition_of_unity(sweep, sign):
    w = tsf_eval(TSF, GEO, sweep, sign)
    np.testing.assert_allclose(w.sum(axis=1), sign, rtol=0, atol=1e-12)
    assert np.all(sign * w >= 0)
    assert np.min(np.count_nonzero(w, axis=1)) >= 1


def test_tsf_single_active_coil():
    # peak of coil 1, well inside its exclusive region
    phi = 0.5 * math.pi / GEO.n_t
    np.testing.assert_array_equal(tsf_eval(TSF, GEO, phi, 1), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(tsf_eval(TSF, GEO, phi + GEO.pitch / 2, -1), [-1.0, 0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.49), st.integers(3, 7))
def test_tsf_partition_any_overlap(overlap, n_c):
    geo = MotorGeometry(50, n_c)
    tsf = TorqueSharingFunction(overlap)
    if (1 + overlap) / n_c >= 0.5:
        with pytest.raises(ValueError):
            tsf.check(geo)
        return
    phi = np.linspace(0, geo.pitch, 997)
    np.testing.assert_allclose(tsf_eval(tsf, geo, phi, 1).sum(axis=1), 1.0, atol=1e-12)


def test_tsf_overlap_too_wide():
    with pytest.raises(ValueError):
        TorqueSharingFunction(0.6).check(GEO)
    with pytest.raises(ValueError):
        TorqueSharingFunction(1.0)


def test_saturation_limits():
    assert SAT(25.0) == 10.0 and SAT(-25.0) == -10.0 and SAT(0.5) == 0.5
    with pytest.raises(ValueError):
        SaturationLimits(1.0, -1.0)
    with pytest.raises(ValueError):
        SaturationLimits(-math.inf, 1.0)


def test_imperfect_zero_torque(sweep):
    assert np.all(f_imp_eval(sweep, np.zeros_like(sweep), 0.2, TSF, SAT, GEO) == 0.0)


def test_imperfect_unit_gain_coil():
    phi = 0.5 * math.pi / GEO.n_t
    u = f_imp_eval(phi, 2.0, 0.0, TSF, SAT, GEO)
    np.testing.assert_allclose(u, [2.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("phi_o", [-0.4, -0.2, 0.0, 0.1, 0.2])
def test_imperfect_inverts_its_own_model(sweep, phi_o):
    T = np.random.default_rng(3).uniform(-5, 5, sweep.size)
    u = f_imp_eval(sweep, T, phi_o, TSF, SAT, GEO)
    s = simple_sinusoid(GEO, sweep, phi_o)
    active = u > 0
    inv = np.where(s != 0, 1 / np.where(s != 0, s, 1), 0)
    sat_free = ~np.any(active & (np.abs(inv) >= SAT.x_max), axis=1)
    assert sat_free.mean() > 0.99
    realized = np.sum(s * u, axis=1)
    np.testing.assert_allclose(realized[sat_free], T[sat_free], rtol=0, atol=1e-10)
    assert np.all(u >= 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-2, 2), st.floats(-10, 10), st.floats(-0.5, 0.5))
@example(-1.1752983755142317, -1.0, 0.25)  # blend edge, sensitive to angle rounding
def test_imperfect_scalar_path_matches(phi, T, phi_o):
    cf = imperfect_commutation(GEO, phi_o)
    np.testing.assert_allclose(cf.scalar_evaluator()(phi, T), commutate(cf, phi, T),
                               rtol=1e-12, atol=1e-14)


def test_imperfection_by_design(truth):
    for phi_o in (-0.2, 0.2):
        assert ripple_profile(imperfect_commutation(GEO, phi_o), truth).peak > 1e-3


def test_first_harmonic_design_is_exact():
    model = TorqueGainModel.sinusoid(GEO, 0.3, 1.7)
    cf = design_commutation(model)
    grid = np.linspace(0, GEO.pitch, 10_000)
    g = gain_eval(model, grid)
    np.testing.assert_allclose(np.sum(g * cf.f_plus(grid), axis=1), 1.0, atol=1e-9)
    np.testing.assert_allclose(np.sum(g * cf.f_minus(grid), axis=1), -1.0, atol=1e-9)


def test_design_scaling_halves_currents(truth):
    grid = tooth_grid(GEO, 4096)
    f1 = design_commutation(truth).f_plus(grid)
    f2 = design_commutation(truth.scaled(2.0)).f_plus(grid)
    np.testing.assert_allclose(f2, f1 / 2, rtol=1e-14, atol=0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_designed_outputs_nonnegative(seed):
    cf = design_commutation(default_true_gain(GEO, seed))
    grid = tooth_grid(GEO, 4096)
    assert np.all(cf.f_plus(grid) >= 0) and np.all(cf.f_minus(grid) >= 0)


@settings(max_examples=300, deadline=None)
@given(st.floats(-2, 2), st.floats(-10, 10))
def test_designed_scalar_path_matches(phi, T):
    cf = design_commutation(default_true_gain(GEO, 1))
    np.testing.assert_allclose(cf.scalar_evaluator()(phi, T), commutate(cf, phi, T),
                               rtol=1e-12, atol=1e-14)


def test_commutate_branches(truth, sweep):
    cf = design_commutation(truth)
    np.testing.assert_array_equal(commutate(cf, sweep[:10], 0.0), 0.0)
    np.testing.assert_allclose(commutate(cf, sweep[:10], -1.0), cf.f_minus(sweep[:10]))
    T = np.linspace(-3, 3, 10)
    u = commutate(cf, sweep[:10], T)
    assert np.all(u >= 0)
    np.testing.assert_allclose(np.sum(gain_eval(truth, sweep[:10]) * u, axis=1), T, atol=1e-12)


def test_identified_commutation_has_constant_scale(posterior, truth):
    cf = design_commutation(posterior.gain_model())
    grid = tooth_grid(GEO, 4096)
    for T in (0.7, -1.3):
        realized = np.sum(gain_eval(truth, grid) * commutate(cf, grid, T), axis=1) / T
        assert np.ptp(realized) / np.mean(realized) < 0.02


def test_threshold_above_peak_is_infeasible(truth):
    peak = np.abs(gain_eval(truth, tooth_grid(GEO))).max()
    with pytest.raises(InfeasibleCommutationError) as info:
        design_commutation(truth, threshold=peak + 1e-6)
    assert 0 <= info.value.angle < GEO.pitch


def _zero_coil(model, coil):
    c = model.coeff_matrix.copy()
    c[coil] = 0.0
    return TorqueGainModel(model.geometry, model.n_h, c.ravel())


def test_zeroed_coil_three_coils_leaves_gap():
    # two sinusoids 120 degrees apart are both negative over a 60 degree arc
    model = _zero_coil(TorqueGainModel.sinusoid(GEO), 2)
    with pytest.raises(InfeasibleCommutationError):
        design_commutation(model)


def test_zeroed_coil_five_coils_still_covered():
    geo = MotorGeometry(131, 5)
    model = _zero_coil(TorqueGainModel.sinusoid(geo), 2)
    cf = design_commutation(model)
    grid = tooth_grid(geo, 4096)
    np.testing.assert_allclose(np.sum(gain_eval(model, grid) * cf.f_plus(grid), axis=1), 1.0,
                               atol=1e-9)
    np.testing.assert_array_equal(cf.f_plus(grid)[:, 2], 0.0)


def test_commutation_validation(truth):
    with pytest.raises(ValueError):
        CommutationFunction("bogus", GEO)
    with pytest.raises(ValueError):
        CommutationFunction("identified", GEO)
    cf = CommutationFunction("identified", GEO, model=truth, thresholds=0.1)
    assert cf.thresholds.shape == (3,)
