"""Flat ``key = value`` pipeline configuration.

Every key maps to one field of :class:`PipelineConfig`; blank values mean
"unset" for optional fields, ``#`` starts a comment.  The bundled
``default.cfg`` reproduces the simulation study (131 teeth, 3 coils,
``G(s) = 1/(s^2+s)`` at 1 kHz, 20 Hz PID, offsets of +-0.2 rad).
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .commutation import SaturationLimits, TorqueSharingFunction
from .control import PidController, pid_design
from .estimator import DisturbancePrior, FourierBasis, PeriodicKernel, WhiteKernel
from .experiment import CampaignConfig
from .plant import (DisturbanceModel, MotorGeometry, Plant, RotorDynamics,
                    TorqueGainModel, default_true_gain)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    # geometry
    n_t: int = 131
    n_c: int = 3
    # ground-truth gain
    truth_seed: int = 0
    truth_n_h: int = 5
    truth_harmonic_scale: float = 0.3
    truth_coeffs_file: typing.Optional[str] = None
    # disturbance; the spatial frequency is d2_frequency_ratio * n_t
    seed: int = 0
    sigma1_sq: float = 7e-9
    d2_amplitude: float = 5e-4
    d2_frequency_ratio: float = 1 / 1.4
    d2_phase: float = 0.0
    # rotor dynamics
    damping: float = 1.0
    dt: float = 1e-3
    # controller
    bandwidth_hz: float = 20.0
    integrator_limit: typing.Optional[float] = None
    # imperfect commutation
    tsf_overlap: float = 0.3
    sat_limit: float = 10.0
    # campaign
    phi_o_min: float = -0.2
    phi_o_max: float = 0.2
    delta: float = 0.4
    omega_r: float = 0.01
    stroke_teeth: float = 12.0
    e_max: typing.Optional[float] = None
    e_safety: float = 1e-2
    velocity_backoff: float = 0.5
    trim_teeth: float = 2.0
    n_samples: int = 1000
    omega_floor: float = 1e-6
    # estimator
    n_h: int = 5
    prior_sigma_sq: float = 0.0
    prior_kernel: str = "white"
    prior_variance: float = 1e-6
    prior_lengthscale: float = 1.0
    prior_period: typing.Optional[float] = None
    rank_tolerance: float = 1e-10
    # design and validation
    threshold_fraction: float = 0.1
    grid_size: int = 4096
    validation_omega_r: float = 0.1
    validation_stroke_teeth: float = 12.0
    out_dir: str = "srmid-out"

    def __post_init__(self):
        positive = ["damping", "dt", "bandwidth_hz", "sat_limit", "delta", "omega_r",
                    "stroke_teeth", "velocity_backoff", "n_samples", "omega_floor",
                    "validation_omega_r", "validation_stroke_teeth", "grid_size",
                    "rank_tolerance"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("sigma1_sq", "prior_sigma_sq", "prior_variance", "n_h", "truth_n_h",
                     "threshold_fraction", "e_safety"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.prior_kernel not in ("white", "periodic"):
            raise ConfigError("prior_kernel must be 'white' or 'periodic'")
        if self.truth_coeffs_file is not None and not Path(self.truth_coeffs_file).exists():
            raise ConfigError(f"truth_coeffs_file {self.truth_coeffs_file} does not exist")
        try:
            self.geometry()
            self.campaign()
            self.tsf().check(self.geometry())
            self.disturbance()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # builders ---------------------------------------------------------------

    def geometry(self) -> MotorGeometry:
        return MotorGeometry(self.n_t, self.n_c)

    def truth(self) -> TorqueGainModel:
        geometry = self.geometry()
        if self.truth_coeffs_file is None:
            return default_true_gain(geometry, self.truth_seed, self.truth_n_h,
                                     self.truth_harmonic_scale)
        data = json.loads(Path(self.truth_coeffs_file).read_text())
        if isinstance(data, dict):
            return TorqueGainModel(geometry, int(data["n_h"]), data["coeffs"])
        n_h = (len(data) // self.n_c - 1) // 2
        return TorqueGainModel(geometry, n_h, data)

    def disturbance(self, seed: int | None = None) -> DisturbanceModel:
        terms = ()
        if self.d2_amplitude != 0:
            terms = ((self.d2_amplitude, self.d2_frequency_ratio * self.n_t, self.d2_phase),)
        return DisturbanceModel(self.sigma1_sq, terms, self.n_t,
                                self.seed if seed is None else seed)

    def dynamics(self) -> RotorDynamics:
        return RotorDynamics(self.damping, self.dt)

    def plant(self, seed: int | None = None) -> Plant:
        return Plant(self.truth(), self.disturbance(seed), self.dynamics())

    def controller(self) -> PidController:
        ctl = pid_design(self.bandwidth_hz, self.dynamics())
        ctl.integrator_limit = self.integrator_limit
        return ctl

    def tsf(self) -> TorqueSharingFunction:
        return TorqueSharingFunction(self.tsf_overlap)

    def sat(self) -> SaturationLimits:
        return SaturationLimits(-self.sat_limit, self.sat_limit)

    def campaign(self) -> CampaignConfig:
        e_max = self.e_max
        if e_max is None:
            e_max = 1e-4 * 2 * math.pi / self.n_t
        return CampaignConfig(self.phi_o_min, self.phi_o_max, self.delta, self.omega_r,
                              self.stroke_teeth, e_max, self.e_safety, self.velocity_backoff,
                              self.trim_teeth, self.n_samples, self.omega_floor)

    def basis(self) -> FourierBasis:
        return FourierBasis(self.n_t, self.n_h)

    def prior(self) -> DisturbancePrior:
        if self.prior_kernel == "white":
            kernel = WhiteKernel(self.prior_variance)
        else:
            period = self.prior_period or 2 * math.pi / self.n_t
            kernel = PeriodicKernel(self.prior_variance, self.prior_lengthscale, period)
        return DisturbancePrior(self.prior_sigma_sq, kernel)

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def _convert(name: str, raw: str):
    tp = _TYPES[name]
    optional = tp.startswith("typing.Optional[") if isinstance(tp, str) else False
    base = tp[len("typing.Optional["):-1] if optional else tp
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        if optional:
            return None
        raise ConfigError(f"{name} requires a value")
    try:
        if base == "int":
            return int(raw)
        if base == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{name}: cannot parse {raw!r} as {base}") from exc


def parse_config(text: str, **overrides) -> PipelineConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string("[pipeline]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    values = {}
    for key, raw in parser["pipeline"].items():
        if key not in _TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _convert(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return PipelineConfig(**values)


def default_config_text() -> str:
    return resources.files("srmid").joinpath("default.cfg").read_text()


def load_config(path=None, **overrides) -> PipelineConfig:
    """Read ``path`` (or the bundled default) and apply keyword overrides."""
    if path is None:
        text = default_config_text()
    else:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        text = p.read_text()
    return parse_config(text, **overrides)
