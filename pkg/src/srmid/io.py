"""File formats: dataset CSV + JSON sidecar, model and commutation JSON,
trajectory and plot-data CSVs.

Floats are written with ``repr`` so that files round-trip exactly and reruns
with the same seed are byte-identical.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .commutation import (CommutationFunction, SaturationLimits, TorqueSharingFunction,
                          tooth_grid)
from .control import ClosedLoopTrajectory
from .estimator import FourierBasis, PosteriorModel, confidence_band
from .experiment import ExperimentDataset, ExperimentRecord
from .plant import MotorGeometry, TorqueGainModel


class FormatError(ValueError):
    pass


def _f(x) -> str:
    return repr(float(x))


def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    text = Path(path).read_text()
    if not text.strip():
        raise FormatError(f"{path} is empty")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc


# -- dataset ---------------------------------------------------------------

def write_dataset(dataset: ExperimentDataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n_c = dataset.geometry.n_c
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["experiment_id", "phi_o", "direction", "t", "phi", "T_star"]
                   + [f"u_{c + 1}" for c in range(n_c)])
        for r in dataset.records:
            for k in range(len(r)):
                w.writerow([r.experiment_id, _f(r.phi_o), r.direction, _f(r.t[k]),
                            _f(r.phi[k]), _f(r.T_star[k])] + [_f(v) for v in r.u[k]])
    meta = {
        "n_t": dataset.geometry.n_t,
        "n_c": n_c,
        "provenance": dataset.provenance,
        "experiments": [_record_meta(r) for r in dataset.records],
        "discarded": [_record_meta(r) for r in dataset.discarded],
    }
    write_json(_sidecar(path), meta)
    return path


def _record_meta(r: ExperimentRecord) -> dict:
    max_e = r.max_abs_e
    return {"experiment_id": r.experiment_id, "phi_o": r.phi_o, "direction": r.direction,
            "omega_r": r.omega_r, "n_samples": len(r), "status": r.status,
            "max_abs_e": None if math.isnan(max_e) else max_e}


def read_dataset(path) -> ExperimentDataset:
    """Parse a dataset CSV; geometry and provenance come from the JSON sidecar."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path} does not exist")
    sidecar = _sidecar(path)
    if not sidecar.exists():
        raise FormatError(f"missing sidecar {sidecar}")
    meta = read_json(sidecar)
    try:
        geometry = MotorGeometry(int(meta["n_t"]), int(meta["n_c"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad sidecar {sidecar}: {exc}") from exc
    n_c = geometry.n_c
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path} is empty")
    expected = (["experiment_id", "phi_o", "direction", "t", "phi", "T_star"]
                + [f"u_{c + 1}" for c in range(n_c)])
    if rows[0] != expected:
        raise FormatError(f"{path}: unexpected header {rows[0]}")
    groups: dict[int, list] = {}
    try:
        for row in rows[1:]:
            if len(row) != len(expected):
                raise FormatError(f"{path}: row with {len(row)} fields")
            groups.setdefault(int(row[0]), []).append([float(v) for v in row[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not groups:
        raise FormatError(f"{path} has no samples")
    info = {e["experiment_id"]: e for e in meta.get("experiments", [])}
    records = []
    for exp_id, data in groups.items():
        a = np.array(data)
        e_meta = info.get(exp_id, {})
        records.append(ExperimentRecord(
            exp_id, float(a[0, 0]), int(a[0, 1]), a[:, 2], a[:, 3], a[:, 4], a[:, 5:],
            omega_r=float(e_meta.get("omega_r", math.nan)),
            status=e_meta.get("status", "ok")))
    return ExperimentDataset(records, geometry, meta.get("provenance", {}))


# -- models ----------------------------------------------------------------

def posterior_to_dict(post: PosteriorModel) -> dict:
    return {"n_t": post.geometry.n_t, "n_c": post.geometry.n_c, "n_h": post.basis.n_h,
            "theta_hat": post.theta_hat.tolist(), "covariance": post.covariance.tolist(),
            "T_const": post.T_const, "provenance": post.provenance}


def posterior_from_dict(d: dict) -> PosteriorModel:
    try:
        geometry = MotorGeometry(int(d["n_t"]), int(d["n_c"]))
        basis = FourierBasis(geometry.n_t, int(d["n_h"]))
        theta = np.array(d["theta_hat"], dtype=float)
        cov = np.array(d["covariance"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model: {exc}") from exc
    p = basis.n_theta(geometry.n_c)
    if theta.shape != (p,) or cov.shape != (p, p):
        raise FormatError(f"model arrays do not match n_theta = {p}")
    return PosteriorModel(theta, cov, basis, geometry, float(d.get("T_const", math.nan)),
                          d.get("provenance", {}))


def write_model(post: PosteriorModel, path):
    write_json(path, posterior_to_dict(post))


def read_model(path) -> PosteriorModel:
    return posterior_from_dict(read_json(path))


def write_model_plot(post: PosteriorModel, path, grid_size: int = 4096):
    """ghat mean and 95% bounds per coil over one tooth."""
    grid = tooth_grid(post.geometry, grid_size)
    mean, half = confidence_band(post, grid)
    n_c = post.geometry.n_c
    header = ["phi"]
    for c in range(1, n_c + 1):
        header += [f"g_{c}", f"g_{c}_lo", f"g_{c}_hi"]
    cols = [grid]
    for c in range(n_c):
        cols += [mean[:, c], mean[:, c] - half[:, c], mean[:, c] + half[:, c]]
    write_columns(path, header, cols)


def commutation_to_dict(cf: CommutationFunction) -> dict:
    d = {"kind": cf.kind, "n_t": cf.geometry.n_t, "n_c": cf.geometry.n_c,
         "phi_o": cf.phi_o,
         "tsf": {"overlap": cf.tsf.overlap, "shape": cf.tsf.shape},
         "sat": {"x_min": cf.sat.x_min, "x_max": cf.sat.x_max}}
    if cf.model is not None:
        d.update(n_h=cf.model.n_h, coeffs=cf.model.coeffs.tolist(),
                 thresholds=cf.thresholds.tolist())
    return d


def commutation_from_dict(d: dict) -> CommutationFunction:
    try:
        geometry = MotorGeometry(int(d["n_t"]), int(d["n_c"]))
        tsf = TorqueSharingFunction(**d.get("tsf", {}))
        sat = SaturationLimits(**d.get("sat", {}))
        model = None
        if "coeffs" in d:
            model = TorqueGainModel(geometry, int(d["n_h"]), d["coeffs"])
        return CommutationFunction(d["kind"], geometry, model=model,
                                   thresholds=d.get("thresholds"),
                                   phi_o=float(d.get("phi_o", 0.0)), tsf=tsf, sat=sat)
    except (KeyError, TypeError) as exc:
        raise FormatError(f"malformed commutation: {exc}") from exc


def write_commutation(cf: CommutationFunction, path):
    write_json(path, commutation_to_dict(cf))


def read_commutation(path) -> CommutationFunction:
    return commutation_from_dict(read_json(path))


# -- plain tables ----------------------------------------------------------

def write_columns(path, header, columns):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float) for c in columns]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([_f(v) for v in row])


def read_columns(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path} is empty")
    data = np.array([[float(v) for v in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
    return rows[0], data


def write_trajectory(traj: ClosedLoopTrajectory, path):
    n_c = traj.u.shape[1]
    header = ["t", "phi_r", "phi", "e", "T_star"] + [f"u_{c + 1}" for c in range(n_c)]
    cols = [traj.t, traj.phi_r, traj.phi, traj.e, traj.T_star] + [traj.u[:, c] for c in range(n_c)]
    write_columns(path, header, cols)


def read_trajectory(path) -> ClosedLoopTrajectory:
    header, a = read_columns(path)
    if header[:5] != ["t", "phi_r", "phi", "e", "T_star"]:
        raise FormatError(f"{path}: not a trajectory file")
    return ClosedLoopTrajectory(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5:],
                                np.full(a.shape[0], math.nan))
