"""Command-line pipeline driver.

::

    srmid collect   [--config CFG] [--seed N] [--out DIR]
    srmid identify  [--dataset CSV] [--proceed-on-rank-warning]
    srmid design    [--model JSON] [--threshold X]
    srmid validate  [--model JSON]
    srmid reproduce [--config CFG] [--seed N] [--out DIR]

Exit status is 0 on success, 1 for configuration, file-format or campaign
errors and 2 for numerical failures (singular systems, rank deficiency,
infeasible commutation, safety breaches).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .commutation import InfeasibleCommutationError, design_commutation, tooth_grid
from .config import ConfigError, PipelineConfig, load_config
from .estimator import SingularSystemError, build_design, identify, excitation_rank
from .experiment import CampaignError, ExperimentDataset, run_campaign, velocity_heuristic_check
from .plant import gain_eval
from .validation import SafetyBreach, fit_report, identified_vs_first_harmonic

log = logging.getLogger("srmid")

DATASET = "dataset.csv"
MODEL = "model.json"
MODEL_PLOT = "model_plot.csv"
COMMUTATION = "commutation.json"
RIPPLE = "ripple.csv"
VALIDATION = "validation.json"
SUMMARY = "summary.json"


class RankWarning(RuntimeError):
    pass


_num = {"type": "number"}
SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["config_hash", "seed", "collect", "identify", "design", "validate"],
    "properties": {
        "config_hash": {"type": "string"},
        "seed": {"type": "integer"},
        "collect": {
            "type": "object",
            "required": ["omega_r", "backoffs", "n_experiments", "n_samples",
                         "max_abs_e", "e_max", "heuristic_ratio"],
            "properties": {"max_abs_e": {"type": "array", "items": _num},
                           "heuristic_ratio": {"type": "array", "items": _num}},
        },
        "identify": {
            "type": "object",
            "required": ["rank", "n_theta", "relative_rms", "coverage_95", "scale"],
            "properties": {"rank": {"type": "integer"}, "n_theta": {"type": "integer"},
                           "relative_rms": _num, "coverage_95": _num, "scale": _num},
        },
        "design": {"type": "object", "required": ["max_inversion_error"],
                   "properties": {"max_inversion_error": _num}},
        "validate": {
            "type": "object",
            "required": ["ratio", "e2_identified", "e2_baseline"],
            "properties": {"ratio": _num, "e2_identified": _num, "e2_baseline": _num},
        },
    },
}


# -- stages ----------------------------------------------------------------

def stage_collect(cfg: PipelineConfig, out: Path, seed: int) -> tuple[ExperimentDataset, dict]:
    plant = cfg.plant(seed)
    dataset = run_campaign(cfg.campaign(), plant, cfg.controller(), cfg.tsf(), cfg.sat(), seed)
    dataset.provenance["pipeline_hash"] = cfg.digest()
    io.write_dataset(dataset, out / DATASET)
    geometry = cfg.geometry()
    max_e, ratios = [], []
    for r in dataset.records:
        check = velocity_heuristic_check(r.e, geometry)
        max_e.append(r.max_abs_e)
        ratios.append(check.ratio)
        print(f"experiment {r.experiment_id}: phi_o={r.phi_o:+.3f} dir={r.direction:+d} "
              f"max|e|={r.max_abs_e:.3e} rad  heuristic ratio={check.ratio:.3f} "
              f"({'ok' if check.passed else 'FAIL'})")
    for r in dataset.discarded:
        print(f"experiment {r.experiment_id}: phi_o={r.phi_o:+.3f} dir={r.direction:+d} "
              f"discarded (safety)")
    report = {"omega_r": dataset.provenance["omega_r"],
              "backoffs": dataset.provenance["backoffs"],
              "n_experiments": len(dataset.records), "n_discarded": len(dataset.discarded),
              "n_samples": dataset.n_total, "max_abs_e": max_e,
              "e_max": cfg.campaign().e_max, "heuristic_ratio": ratios}
    return dataset, report


def stage_identify(cfg: PipelineConfig, dataset: ExperimentDataset, out: Path,
                   proceed: bool = False):
    basis = cfg.basis()
    if dataset.geometry != cfg.geometry():
        raise ConfigError("dataset geometry does not match the config")
    rank = excitation_rank(build_design(dataset, basis), cfg.rank_tolerance)
    print(f"design rank {rank.rank}/{rank.n_cols}; smallest singular values "
          + " ".join(f"{s:.3g}" for s in rank.smallest))
    if not rank.full:
        msg = (f"design matrix rank {rank.rank} < {rank.n_cols}: the data do not "
               f"excite every gain coefficient")
        log.warning(msg)
        if not proceed:
            raise RankWarning(msg + " (use --proceed-on-rank-warning to continue)")
    post = identify(dataset, basis, cfg.prior())
    post.provenance.update(rank=rank.rank, pipeline_hash=cfg.digest())
    io.write_model(post, out / MODEL)
    io.write_model_plot(post, out / MODEL_PLOT, cfg.grid_size)
    fit = fit_report(post, cfg.truth(), cfg.grid_size)
    print(f"relative rms {fit.relative_rms:.4g}, 95% coverage {fit.coverage_95:.3f}, "
          f"scale {fit.scale:.4g}")
    report = {"rank": rank.rank, "n_theta": rank.n_cols,
              "smallest_singular_values": rank.smallest.tolist(), **fit.as_dict()}
    return post, report


def stage_design(cfg: PipelineConfig, post, out: Path, threshold=None):
    model = post.gain_model()
    cf = design_commutation(model, cfg.tsf(), threshold=threshold,
                            threshold_fraction=cfg.threshold_fraction,
                            grid_size=cfg.grid_size)
    grid = tooth_grid(model.geometry, cfg.grid_size)
    ghat = gain_eval(model, grid)
    plus = np.sum(ghat * cf.f_plus(grid), axis=-1)
    minus = np.sum(ghat * cf.f_minus(grid), axis=-1)
    err = float(max(np.max(np.abs(plus - 1)), np.max(np.abs(minus + 1))))
    io.write_commutation(cf, out / COMMUTATION)
    realized = np.sum(gain_eval(cfg.truth(), grid) * cf.f_plus(grid), axis=-1)
    io.write_columns(out / RIPPLE, ["phi", "ghat_f_plus", "g_true_f_plus"],
                     [grid, plus, realized])
    print(f"max |ghat f+ - 1| over {cfg.grid_size} grid points: {err:.3e}")
    return cf, {"max_inversion_error": err,
                "true_ripple_peak": float(np.max(np.abs(realized - realized.mean())))}


def stage_validate(cfg: PipelineConfig, post, out: Path, seed: int):
    cmp = identified_vs_first_harmonic(
        post, cfg.plant(seed), cfg.controller(), cfg.validation_omega_r,
        cfg.validation_stroke_teeth, seed, cfg.threshold_fraction, cfg.trim_teeth)
    report = cmp.as_dict()
    io.write_json(out / VALIDATION, report)
    print(f"||e||_2 identified {cmp.e2_identified:.3e}, first-harmonic {cmp.e2_baseline:.3e}, "
          f"ratio {cmp.ratio:.4f}")
    return report


# -- commands --------------------------------------------------------------

def _setup(args) -> tuple[PipelineConfig, Path, int]:
    cfg = load_config(args.config, seed=args.seed)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out, cfg.seed


def cmd_collect(args):
    cfg, out, seed = _setup(args)
    stage_collect(cfg, out, seed)
    print(f"wrote {out / DATASET}")


def cmd_identify(args):
    cfg, out, _ = _setup(args)
    dataset = io.read_dataset(args.dataset or out / DATASET)
    stage_identify(cfg, dataset, out, args.proceed_on_rank_warning)
    print(f"wrote {out / MODEL} and {out / MODEL_PLOT}")


def cmd_design(args):
    cfg, out, _ = _setup(args)
    post = io.read_model(args.model or out / MODEL)
    stage_design(cfg, post, out, args.threshold)
    print(f"wrote {out / COMMUTATION} and {out / RIPPLE}")


def cmd_validate(args):
    cfg, out, seed = _setup(args)
    post = io.read_model(args.model or out / MODEL)
    stage_validate(cfg, post, out, seed)
    print(f"wrote {out / VALIDATION}")


def cmd_reproduce(args):
    cfg, out, seed = _setup(args)
    summary = {"config_hash": cfg.digest(), "seed": seed}
    stage = "collect"
    try:
        dataset, summary["collect"] = stage_collect(cfg, out, seed)
        stage = "identify"
        post, summary["identify"] = stage_identify(cfg, dataset, out,
                                                   args.proceed_on_rank_warning)
        stage = "design"
        _, summary["design"] = stage_design(cfg, post, out)
        stage = "validate"
        summary["validate"] = stage_validate(cfg, post, out, seed)
    except Exception as exc:
        exc.stage = stage
        raise
    io.write_json(out / SUMMARY, summary)
    print(f"wrote {out / SUMMARY}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="srmid", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="pipeline config file (default: bundled)")
        p.add_argument("--seed", type=int, help="disturbance seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config out_dir)")
        p.set_defaults(func=func)
        return p

    add("collect", cmd_collect, "run the closed-loop data collection campaign")
    p = add("identify", cmd_identify, "identify the gain model from a dataset")
    p.add_argument("--dataset", help=f"dataset CSV (default: OUT/{DATASET})")
    p.add_argument("--proceed-on-rank-warning", action="store_true")
    p = add("design", cmd_design, "design a commutation from an identified model")
    p.add_argument("--model", help=f"model JSON (default: OUT/{MODEL})")
    p.add_argument("--threshold", type=float, help="absolute per-coil gain threshold")
    p = add("validate", cmd_validate, "compare identified and first-harmonic commutation")
    p.add_argument("--model", help=f"model JSON (default: OUT/{MODEL})")
    p = add("reproduce", cmd_reproduce, "collect, identify, design and validate end to end")
    p.add_argument("--proceed-on-rank-warning", action="store_true")
    return parser


_NUMERICAL = (SingularSystemError, RankWarning, InfeasibleCommutationError, SafetyBreach,
              np.linalg.LinAlgError, FloatingPointError)
_INPUT = (ConfigError, io.FormatError, CampaignError, ValueError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except _NUMERICAL as exc:
        _report(exc)
        return 2
    except _INPUT as exc:
        _report(exc)
        return 1
    return 0


def _report(exc: Exception):
    stage = getattr(exc, "stage", None)
    tag = f"[{stage}] " if stage else ""
    print(f"srmid: {tag}{type(exc).__name__}: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
