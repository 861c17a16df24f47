"""Metrics that turn identification and commutation quality into numbers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .commutation import CommutationFunction, design_commutation, tooth_grid
from .control import ClosedLoopTrajectory, PidController, RampReference, simulate_closed_loop
from .estimator import PosteriorModel, confidence_band
from .plant import Plant, TorqueGainModel, gain_eval


@dataclass(frozen=True)
class FitReport:
    scale: float
    relative_rms: float
    coverage_95: float

    def as_dict(self):
        return {"scale": self.scale, "relative_rms": self.relative_rms,
                "coverage_95": self.coverage_95}


def fit_report(model, truth: TorqueGainModel, grid_size: int = 4096) -> FitReport:
    """Compare an identified gain with the truth over one tooth.

    The identified gain is first scaled by the least-squares factor
    ``c = <ghat, g> / <ghat, ghat>``, since constant-torque data only fix
    ``g`` up to a scalar.  ``model`` may be a :class:`PosteriorModel` or a
    plain :class:`TorqueGainModel` (treated as having zero variance).
    """
    if model.geometry != truth.geometry:
        raise ValueError("model and truth geometries differ")
    grid = tooth_grid(truth.geometry, grid_size)
    g = gain_eval(truth, grid)
    if isinstance(model, PosteriorModel):
        ghat, half = confidence_band(model, grid)
    else:
        ghat, half = gain_eval(model, grid), np.zeros_like(g)
    g_norm = np.linalg.norm(g)
    if g_norm == 0:
        raise ValueError("true gain is identically zero")
    denom = float(np.sum(ghat * ghat))
    scale = float(np.sum(ghat * g)) / denom if denom > 0 else 0.0
    resid = scale * ghat - g
    rel = float(np.linalg.norm(resid) / g_norm)
    coverage = float(np.mean(np.abs(resid) <= abs(scale) * half))
    return FitReport(scale, rel, coverage)


def tracking_metrics(traj, start: int = 0):
    """``(max |e|, sqrt(sum e^2))`` over samples from index ``start`` on."""
    e = np.asarray(traj.e if hasattr(traj, "e") else traj)[start:]
    if e.size == 0:
        return 0.0, 0.0
    return float(np.max(np.abs(e))), float(np.sqrt(np.sum(e * e)))


@dataclass(frozen=True)
class RippleProfile:
    phi: np.ndarray
    ripple: np.ndarray
    mean: float

    @property
    def peak(self) -> float:
        return float(np.max(np.abs(self.ripple)))


def ripple_profile(cf: CommutationFunction, truth: TorqueGainModel,
                   grid_size: int = 4096) -> RippleProfile:
    """Deviation of the realized positive-branch gain ``g f+`` from its mean."""
    grid = tooth_grid(truth.geometry, grid_size)
    realized = np.sum(gain_eval(truth, grid) * cf.f_plus(grid), axis=-1)
    mean = float(np.mean(realized))
    return RippleProfile(grid, realized - mean, mean)


def first_harmonic_model(model) -> TorqueGainModel:
    """Keep only the first harmonic of an identified gain (bias zeroed)."""
    if isinstance(model, PosteriorModel):
        model = model.gain_model()
    return model.truncated(1, keep_bias=False)


@dataclass(frozen=True)
class Comparison:
    ratio: float
    e2_identified: float
    e2_baseline: float
    einf_identified: float
    einf_baseline: float

    def as_dict(self):
        return dict(self.__dict__)


class SafetyBreach(RuntimeError):
    pass


def _post_transient_start(traj: ClosedLoopTrajectory, skip: float) -> int:
    travel = np.abs(traj.phi_r - traj.phi_r[0])
    return int(np.searchsorted(travel, skip)) if skip > 0 else 0


def compare_commutations(identified: CommutationFunction, baseline: CommutationFunction,
                         plant: Plant, ref: RampReference, controller: PidController,
                         seed: int = 0, e_safety: float = math.inf,
                         trim_teeth: float = 2.0) -> Comparison:
    """Track ``ref`` with both commutations on identical disturbance draws and
    return the ratio of post-transient error 2-norms (identified / baseline)."""
    runs = []
    for cf in (identified, baseline):
        traj = simulate_closed_loop(plant, cf, controller, ref, np.random.default_rng(seed),
                                    e_safety=e_safety)
        if traj.diverged:
            raise SafetyBreach(f"{cf.kind} commutation breached e_safety = {e_safety:g} rad")
        start = _post_transient_start(traj, trim_teeth * plant.geometry.pitch)
        runs.append(tracking_metrics(traj, start))
    (inf_i, two_i), (inf_b, two_b) = runs
    ratio = two_i / two_b if two_b > 0 else (1.0 if two_i == 0 else math.inf)
    return Comparison(ratio, two_i, two_b, inf_i, inf_b)


def identified_vs_first_harmonic(post, plant: Plant, controller: PidController,
                                 omega_r: float = 0.1, stroke_teeth: float = 12.0,
                                 seed: int = 0, threshold_fraction: float = 0.1,
                                 trim_teeth: float = 2.0) -> Comparison:
    """Designed commutation from the full identified model versus one designed
    from its first harmonic only."""
    model = post.gain_model() if isinstance(post, PosteriorModel) else post
    cf_id = design_commutation(model, threshold_fraction=threshold_fraction)
    cf_base = design_commutation(first_harmonic_model(model),
                                 threshold_fraction=threshold_fraction, kind="first-harmonic")
    ref = RampReference(omega_r, stroke_teeth * plant.geometry.pitch)
    return compare_commutations(cf_id, cf_base, plant, ref, controller, seed,
                                trim_teeth=trim_teeth)
