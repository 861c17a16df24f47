"""Closed-loop data collection with deliberately imperfect commutation.

For each offset ``phi_o`` the motor tracks a slow ramp using a commutation
that inverts an offset sinusoid.  Runs whose error exceeds ``e_safety`` are
discarded; if a retained run exceeds ``e_max`` the velocity is reduced and
the whole campaign restarts.  The sweep is repeated with the reference
reversed, then every record is trimmed and decimated.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .commutation import SaturationLimits, TorqueSharingFunction, imperfect_commutation
from .control import ClosedLoopTrajectory, PidController, RampReference, simulate_closed_loop
from .plant import MotorGeometry, Plant

log = logging.getLogger(__name__)

HEURISTIC_FRACTION = 1e-4


class CampaignError(RuntimeError):
    """Data collection could not produce a usable dataset."""


@dataclass(frozen=True)
class CampaignConfig:
    phi_o_min: float = -0.2
    phi_o_max: float = 0.2
    delta: float = 0.4
    omega_r: float = 0.01
    stroke_teeth: float = 12.0
    e_max: float = HEURISTIC_FRACTION * 2 * math.pi / 131
    e_safety: float = 1e-2
    velocity_backoff: float = 0.5
    trim_teeth: float = 2.0
    n_samples: int = 1000
    omega_floor: float = 1e-6

    def __post_init__(self):
        if not self.e_max > 0:
            raise ValueError("e_max must be positive")
        if not self.e_safety >= 0:
            raise ValueError("e_safety must be non-negative")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.phi_o_min > self.phi_o_max:
            raise ValueError("phi_o_min must not exceed phi_o_max")
        if not 0 < self.velocity_backoff < 1:
            raise ValueError("velocity_backoff must lie in (0, 1)")
        if not self.omega_r > 0:
            raise ValueError("omega_r must be positive; direction reversal is automatic")
        if not 0 <= self.trim_teeth < self.stroke_teeth:
            raise ValueError("need 0 <= trim_teeth < stroke_teeth")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")

    def offsets(self) -> np.ndarray:
        """Offsets from ``phi_o_min`` in steps of ``delta``, ``phi_o_max`` included."""
        n = int(math.floor((self.phi_o_max - self.phi_o_min) / self.delta + 1e-9)) + 1
        return self.phi_o_min + self.delta * np.arange(n)

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class ExperimentRecord:
    experiment_id: int
    phi_o: float
    direction: int
    t: np.ndarray
    phi: np.ndarray
    T_star: np.ndarray
    u: np.ndarray
    e: np.ndarray | None = None
    omega: np.ndarray | None = None
    omega_r: float = math.nan
    status: str = "ok"

    def __len__(self):
        return self.t.size

    @property
    def max_abs_e(self) -> float:
        return float(np.max(np.abs(self.e))) if self.e is not None and self.e.size else math.nan

    def take(self, idx) -> "ExperimentRecord":
        pick = (lambda a: None if a is None else a[idx])
        return dataclasses.replace(self, t=self.t[idx], phi=self.phi[idx],
                                   T_star=self.T_star[idx], u=self.u[idx],
                                   e=pick(self.e), omega=pick(self.omega))

    @classmethod
    def from_trajectory(cls, traj: ClosedLoopTrajectory, experiment_id: int, phi_o: float,
                        direction: int, omega_r: float) -> "ExperimentRecord":
        return cls(experiment_id, phi_o, direction, traj.t, traj.phi, traj.T_star,
                   traj.u, traj.e, traj.omega, omega_r,
                   "discarded-safety" if traj.diverged else "ok")


@dataclass
class ExperimentDataset:
    records: list
    geometry: MotorGeometry
    provenance: dict = field(default_factory=dict)
    discarded: list = field(default_factory=list)

    @property
    def n_total(self) -> int:
        return sum(len(r) for r in self.records)

    def stacked(self):
        """Concatenated ``(phi, u, T_star, direction)`` over all records."""
        if not self.records:
            raise ValueError("dataset has no records")
        phi = np.concatenate([r.phi for r in self.records])
        u = np.concatenate([r.u for r in self.records])
        T = np.concatenate([r.T_star for r in self.records])
        direction = np.concatenate([np.full(len(r), r.direction) for r in self.records])
        return phi, u, T, direction

    def check_complete(self):
        """Both directions, identical offset sets, and at least two offsets."""
        by_dir = {}
        for r in self.records:
            by_dir.setdefault(r.direction, set()).add(round(r.phi_o, 12))
        if set(by_dir) != {1, -1}:
            raise CampaignError(f"dataset lacks a direction: have {sorted(by_dir)}")
        if by_dir[1] != by_dir[-1]:
            raise CampaignError("forward and backward offset sets differ")
        if len(by_dir[1]) < 2:
            raise CampaignError("at least two distinct offsets are needed for excitation")


def trim_transient(record: ExperimentRecord, trim_teeth: float,
                   geometry: MotorGeometry) -> ExperimentRecord:
    """Drop samples within ``trim_teeth`` tooth pitches of the start angle."""
    travel = np.abs(record.phi - record.phi[0]) if len(record) else np.zeros(0)
    limit = trim_teeth * geometry.pitch
    if travel.size == 0 or not travel.max() > limit:
        raise ValueError(f"record spans {travel.max() if travel.size else 0:.3g} rad, "
                         f"not more than the {limit:.3g} rad to trim")
    if trim_teeth == 0:
        return record
    return record.take(travel >= limit)


def downsample(record: ExperimentRecord, n_samples: int) -> ExperimentRecord:
    """Keep exactly ``n_samples`` uniformly spaced samples, endpoints included."""
    n = len(record)
    if n < n_samples:
        raise ValueError(f"record has {n} samples, fewer than {n_samples}")
    if n == n_samples:
        return record
    idx = np.round(np.linspace(0, n - 1, n_samples)).astype(int)
    return record.take(idx)


@dataclass(frozen=True)
class HeuristicCheck:
    passed: bool
    ratio: float
    threshold: float


def velocity_heuristic_check(traj, geometry: MotorGeometry) -> HeuristicCheck:
    """Pass iff ``max |e| < 1e-4 * 2 pi / n_t``; ``ratio`` is ``max |e|`` over that bound."""
    e = np.asarray(traj.e if hasattr(traj, "e") else traj)
    if e.size == 0:
        raise ValueError("empty trajectory")
    threshold = HEURISTIC_FRACTION * geometry.pitch
    ratio = float(np.max(np.abs(e))) / threshold
    return HeuristicCheck(ratio < 1.0, ratio, threshold)


def run_experiment(plant: Plant, controller: PidController, phi_o: float, direction: int,
                   omega_r: float, config: CampaignConfig, rng: np.random.Generator,
                   experiment_id: int = 0, tsf=None, sat=None, cf=None):
    """One ramp experiment; returns ``(raw trajectory, trimmed record)``.

    The record is ``None`` when the run breached ``e_safety``.
    """
    geometry = plant.geometry
    cf = cf or imperfect_commutation(geometry, phi_o, tsf, sat)
    ref = RampReference(direction * omega_r, config.stroke_teeth * geometry.pitch)
    traj = simulate_closed_loop(plant, cf, controller, ref, rng, e_safety=config.e_safety)
    rec = ExperimentRecord.from_trajectory(traj, experiment_id, phi_o, direction, omega_r)
    if traj.diverged:
        return traj, None
    return traj, trim_transient(rec, config.trim_teeth, geometry)


def run_campaign(config: CampaignConfig, plant: Plant, controller: PidController,
                 tsf: TorqueSharingFunction | None = None,
                 sat: SaturationLimits | None = None, seed: int = 0) -> ExperimentDataset:
    """Collect a complete forward/backward dataset, backing off the velocity as needed.

    Experiment ``k`` of a sweep always draws its temporal disturbance from
    the stream ``(seed, k)``, so reruns are reproducible.

    Raises
    ------
    CampaignError
        When every run is discarded for safety, when the velocity falls below
        ``config.omega_floor`` without meeting ``e_max``, or when the kept
        records do not cover both directions with matching offsets.
    """
    geometry = plant.geometry
    offsets = config.offsets()
    omega_r = config.omega_r
    backoffs = 0
    while True:
        records, discarded, worst = [], [], 0.0
        restart = False
        for direction in (1, -1):
            for phi_o in offsets:
                k = len(records) + len(discarded)
                rng = np.random.default_rng([seed, k])
                traj, rec = run_experiment(plant, controller, float(phi_o), direction,
                                           omega_r, config, rng, k, tsf, sat)
                if rec is None:
                    log.info("experiment %d (phi_o=%+.3f, dir=%+d) discarded: |e| > e_safety",
                             k, phi_o, direction)
                    discarded.append(ExperimentRecord.from_trajectory(
                        traj, k, float(phi_o), direction, omega_r))
                    continue
                worst = max(worst, rec.max_abs_e)
                if rec.max_abs_e > config.e_max:
                    restart = True
                    break
                records.append(downsample(rec, config.n_samples))
            if restart:
                break
        if restart:
            new_omega = omega_r * config.velocity_backoff
            log.info("max |e| = %.3g > e_max = %.3g at omega_r = %.3g; backing off to %.3g",
                     worst, config.e_max, omega_r, new_omega)
            if new_omega < config.omega_floor:
                raise CampaignError(
                    f"e_max = {config.e_max:.3g} rad not met (last max |e| = {worst:.3g}) "
                    f"before omega_r fell below the floor {config.omega_floor:.3g} rad/s")
            omega_r = new_omega
            backoffs += 1
            continue
        if not records:
            raise CampaignError(
                f"all {len(discarded)} experiments breached e_safety = {config.e_safety:.3g} rad")
        dataset = ExperimentDataset(
            records, geometry,
            provenance={"config_hash": config.digest(), "seed": seed,
                        "omega_r": omega_r, "backoffs": backoffs},
            discarded=discarded)
        dataset.check_complete()
        return dataset
