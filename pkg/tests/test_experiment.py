import math

import numpy as np
import pytest

from srmid.control import pid_design
from srmid.experiment import (CampaignConfig, CampaignError, ExperimentDataset, ExperimentRecord,
                              downsample, run_campaign, trim_transient, velocity_heuristic_check)

# short strokes keep the supervision tests fast
SHORT = dict(stroke_teeth=3.0, trim_teeth=1.0, n_samples=200)


def make_record(n, phi, direction=1, exp_id=0, phi_o=0.2):
    t = np.arange(n) * 1e-3
    z = np.zeros(n)
    return ExperimentRecord(exp_id, phi_o, direction, t, np.asarray(phi, float), z + 0.01,
                            np.ones((n, 3)), z, z + 0.01, 0.01)


def test_default_campaign_layout(campaign, geometry):
    assert len(campaign.records) == 4 and not campaign.discarded
    assert all(len(r) == 1000 and r.status == "ok" for r in campaign.records)
    assert sorted((r.direction, r.phi_o) for r in campaign.records) == [
        (-1, -0.2), (-1, 0.2), (1, -0.2), (1, 0.2)]
    assert campaign.provenance["backoffs"] == 0
    assert campaign.provenance["omega_r"] == 0.01
    campaign.check_complete()


def test_retained_samples_satisfy_heuristic(campaign, geometry):
    for r in campaign.records:
        check = velocity_heuristic_check(r.e, geometry)
        assert check.passed and 0.01 < check.ratio < 1.0
        assert np.max(np.abs(r.omega - r.direction * 0.01)) / 0.01 < 1e-3


def test_retained_span_is_ten_teeth(campaign, geometry):
    for r in campaign.records:
        span = abs(r.phi[-1] - r.phi[0]) / geometry.pitch
        assert span == pytest.approx(10.0, abs=0.01)


def test_stroke_leaks_disturbance_over_tooth(campaign, geometry):
    phi = np.concatenate([r.phi for r in campaign.records])
    rel = np.sort(np.mod(phi, geometry.pitch))
    gaps = np.diff(np.concatenate([rel, [rel[0] + geometry.pitch]]))
    assert gaps.max() < 0.02 * geometry.pitch


def test_offsets_inclusive():
    np.testing.assert_allclose(CampaignConfig().offsets(), [-0.2, 0.2])
    np.testing.assert_allclose(CampaignConfig(-0.2, 0.2, 0.1).offsets(), [-0.2, -0.1, 0, 0.1, 0.2],
                               atol=1e-15)
    assert CampaignConfig(0.1, 0.1).offsets().tolist() == [0.1]


@pytest.mark.parametrize("kw", [dict(e_max=0.0), dict(e_safety=-1.0), dict(delta=0.0),
                                dict(phi_o_min=0.3), dict(velocity_backoff=1.0),
                                dict(omega_r=-0.01), dict(trim_teeth=12.0), dict(n_samples=0)])
def test_campaign_config_validation(kw):
    with pytest.raises(ValueError):
        CampaignConfig(**kw)


def test_safety_zero_discards_everything(plant, controller):
    with pytest.raises(CampaignError, match="e_safety"):
        run_campaign(CampaignConfig(e_safety=0.0, **SHORT), plant, controller)


def test_backoff_reduces_velocity(plant, controller):
    ds = run_campaign(CampaignConfig(e_max=2.0e-7, **SHORT), plant, controller, seed=0)
    assert ds.provenance["backoffs"] >= 1
    assert ds.provenance["omega_r"] < 0.01
    assert all(r.max_abs_e <= 2.0e-7 for r in ds.records)


def test_velocity_floor(plant, controller):
    cfg = CampaignConfig(e_max=1e-12, omega_floor=4e-3, **SHORT)
    with pytest.raises(CampaignError, match="floor"):
        run_campaign(cfg, plant, controller)


def test_single_offset_is_incomplete(plant, controller):
    with pytest.raises(CampaignError, match="two distinct"):
        run_campaign(CampaignConfig(0.2, 0.2, **SHORT), plant, controller)


def test_campaign_is_reproducible(plant, controller):
    cfg = CampaignConfig(**SHORT)
    a = run_campaign(cfg, plant, controller, seed=4)
    b = run_campaign(cfg, plant, pid_design(20.0, plant.dynamics), seed=4)
    c = run_campaign(cfg, plant, controller, seed=5)
    for ra, rb in zip(a.records, b.records):
        np.testing.assert_array_equal(ra.u, rb.u)
    assert not np.array_equal(a.records[0].u, c.records[0].u)


def test_monotone_supervision(plant, controller):
    kept = []
    for e_max in (1e-7, 3e-7, 1e-6):
        try:
            ds = run_campaign(CampaignConfig(e_max=e_max, omega_floor=2e-3, **SHORT),
                              plant, controller, seed=1)
            kept.append({(r.direction, r.phi_o) for r in ds.records})
        except CampaignError:
            kept.append(set())
    assert kept[0] <= kept[1] <= kept[2]
    assert kept[2]


def test_trim_transient(geometry):
    phi = np.linspace(0, 12 * geometry.pitch, 12001)
    rec = make_record(phi.size, phi)
    out = trim_transient(rec, 2.0, geometry)
    assert abs(out.phi[-1] - out.phi[0]) / geometry.pitch == pytest.approx(10.0, abs=1e-3)
    assert trim_transient(rec, 0.0, geometry) is rec
    with pytest.raises(ValueError):
        trim_transient(make_record(10, np.zeros(10)), 2.0, geometry)


def test_downsample():
    rec = make_record(60000, np.arange(60000) * 1e-5)
    out = downsample(rec, 1000)
    assert len(out) == 1000
    assert out.t[0] == rec.t[0] and out.t[-1] == rec.t[-1]
    assert np.all(np.diff(out.t) > 0)
    assert downsample(out, 1000) is out
    with pytest.raises(ValueError):
        downsample(out, 1001)


def test_velocity_heuristic(geometry):
    ok = velocity_heuristic_check(np.zeros(10), geometry)
    assert ok.passed and ok.ratio == 0.0
    assert ok.threshold == pytest.approx(1e-4 * 2 * math.pi / 131)
    assert not velocity_heuristic_check(np.full(3, geometry.pitch), geometry).passed


def test_dataset_completeness(geometry):
    recs = [make_record(5, np.arange(5.0), d, k, p)
            for k, (d, p) in enumerate([(1, -0.2), (1, 0.2), (-1, -0.2)])]
    with pytest.raises(CampaignError, match="differ"):
        ExperimentDataset(recs, geometry).check_complete()
    with pytest.raises(CampaignError, match="direction"):
        ExperimentDataset(recs[:2], geometry).check_complete()
    ds = ExperimentDataset(recs + [make_record(5, np.arange(5.0), -1, 3, 0.2)], geometry)
    ds.check_complete()
    phi, u, T, direction = ds.stacked()
    assert phi.size == 20 and direction.tolist() == [1] * 10 + [-1] * 10
