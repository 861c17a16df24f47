"""Commutation functions: torque sharing, deliberately imperfect inverses of a
sinusoidal gain model, and exact inverses designed from an identified gain.

All angles passed in are mechanical rotor angles; internally the electrical
angle ``n_t * phi`` is used so that one tooth pitch maps to ``2 pi``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .plant import MotorGeometry, TorqueGainModel, gain_eval

KINDS = ("imperfect", "identified", "first-harmonic")


class InfeasibleCommutationError(ValueError):
    """No coil clears the gain threshold with the required sign at ``angle``."""

    def __init__(self, angle: float, sign: int):
        self.angle = float(angle)
        self.sign = sign
        which = "positive" if sign > 0 else "negative"
        super().__init__(f"no coil can produce {which} torque at phi={self.angle:.6g} rad")


def _wrap(x):
    return np.mod(x + math.pi, 2.0 * math.pi) - math.pi


@dataclass(frozen=True)
class TorqueSharingFunction:
    """Raised-cosine torque sharing between neighbouring coils.

    Each coil owns an electrical sector of width ``2 pi / n_c`` centred on
    the peak (positive torque) or trough (negative torque) of its reference
    sinusoid ``sin(n_t phi + 2 pi (c-1)/n_c)``.  Hand-off between neighbours
    is blended over ``overlap`` times that sector width.
    """

    overlap: float = 0.3
    shape: str = "raised-cosine"

    def __post_init__(self):
        if not 0.0 < self.overlap < 1.0:
            raise ValueError("overlap must lie in (0, 1)")
        if self.shape != "raised-cosine":
            raise ValueError(f"unsupported TSF shape {self.shape!r}")

    def check(self, geometry: MotorGeometry):
        # support half-width must stay inside the half period where the
        # reference sinusoid has the right sign
        if (1.0 + self.overlap) / geometry.n_c >= 0.5:
            raise ValueError(
                f"overlap {self.overlap} too large for n_c={geometry.n_c}: "
                "coil support would reach the zero crossing of its sinusoid")


def tsf_eval(tsf: TorqueSharingFunction, geometry: MotorGeometry, phi, torque_sign: int = 1):
    """Weights per coil summing to ``+1`` (``torque_sign >= 0``) or ``-1``."""
    tsf.check(geometry)
    sign = 1.0 if torque_sign >= 0 else -1.0
    centre = 0.5 * math.pi if sign > 0 else 1.5 * math.pi
    phi = np.asarray(phi, dtype=float)
    a = np.abs(_wrap(geometry.n_t * phi[..., None] + geometry.coil_phases() - centre))
    half = math.pi / geometry.n_c
    blend = tsf.overlap * half
    lo, hi = half - blend, half + blend
    ramp = 0.5 * (1.0 + np.cos(math.pi * (a - lo) / (2.0 * blend)))
    raw = np.where(a <= lo, 1.0, np.where(a >= hi, 0.0, ramp))
    return sign * raw / raw.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class SaturationLimits:
    x_min: float = -10.0
    x_max: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.x_min) and math.isfinite(self.x_max)):
            raise ValueError("saturation limits must be finite")
        if self.x_min > self.x_max:
            raise ValueError("x_min must not exceed x_max")

    def __call__(self, x):
        return np.clip(x, self.x_min, self.x_max)


def simple_sinusoid(geometry: MotorGeometry, phi, phi_o: float = 0.0):
    """Reference gain ``sin(n_t phi + 2 pi (c-1)/n_c + phi_o)`` per coil."""
    phi = np.asarray(phi, dtype=float)
    return np.sin(geometry.n_t * phi[..., None] + geometry.coil_phases() + phi_o)


def f_imp_eval(phi, T_star, phi_o: float, tsf: TorqueSharingFunction,
               sat: SaturationLimits, geometry: MotorGeometry):
    """Squared currents inverting the offset sinusoid model.

    The TSF is shifted along with the model so coil supports follow the
    offset sinusoid.  The demand enters through its magnitude; its sign
    selects the TSF branch, which keeps the output non-negative for either
    torque direction.
    """
    T_star = np.asarray(T_star, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = simple_sinusoid(geometry, phi, phi_o)
    with np.errstate(divide="ignore", over="ignore"):
        inv = np.where(s != 0.0, 1.0 / np.where(s != 0.0, s, 1.0), 0.0)
    inv = sat(inv)
    shifted = phi + phi_o / geometry.n_t
    w_pos = tsf_eval(tsf, geometry, shifted, 1)
    w_neg = tsf_eval(tsf, geometry, shifted, -1)
    w = np.where(T_star[..., None] >= 0, w_pos, w_neg)
    return np.maximum(w * inv * np.abs(T_star)[..., None], 0.0)


def _excess_weights(ghat, thresholds, sign):
    """Partition of unity over coils whose signed gain clears its threshold."""
    excess = np.maximum(sign * ghat - thresholds, 0.0)
    raw = excess**2
    total = raw.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(total > 0, raw / np.where(total > 0, total, 1.0), 0.0)
    return w, total[..., 0] > 0


@dataclass(frozen=True)
class CommutationFunction:
    """Positive and negative branches ``f+(phi)``, ``f-(phi)`` of a commutation.

    ``kind == "imperfect"`` inverts the offset sinusoid with a torque sharing
    function; the other kinds invert ``model`` exactly on the coils whose
    gain clears ``thresholds``.
    """

    kind: str
    geometry: MotorGeometry
    model: TorqueGainModel | None = None
    thresholds: np.ndarray | None = field(default=None, repr=False)
    phi_o: float = 0.0
    tsf: TorqueSharingFunction = TorqueSharingFunction()
    sat: SaturationLimits = SaturationLimits()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown commutation kind {self.kind!r}")
        if self.kind == "imperfect":
            self.tsf.check(self.geometry)
        else:
            if self.model is None or self.thresholds is None:
                raise ValueError("designed commutation needs a model and thresholds")
            thr = np.broadcast_to(np.asarray(self.thresholds, dtype=float),
                                  (self.geometry.n_c,)).copy()
            object.__setattr__(self, "thresholds", thr)

    def branch(self, phi, sign: int):
        if self.kind == "imperfect":
            unit = 1.0 if sign >= 0 else -1.0
            return f_imp_eval(phi, np.full(np.shape(phi), unit), self.phi_o,
                              self.tsf, self.sat, self.geometry)
        ghat = gain_eval(self.model, phi)
        sgn = 1.0 if sign >= 0 else -1.0
        w, _ = _excess_weights(ghat, self.thresholds, sgn)
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(w > 0, w / (sgn * ghat), 0.0)
        return f

    def scalar_evaluator(self):
        """Fast ``(phi, T*) -> list`` equivalent of :func:`commutate` for
        per-sample simulation loops."""
        n_c, n_t = self.geometry.n_c, self.geometry.n_t
        phases = self.geometry.coil_phases().tolist()
        sin, cos, pi = math.sin, math.cos, math.pi
        two_pi = 2.0 * pi

        if self.kind == "imperfect":
            phi_o = self.phi_o
            x_min, x_max = self.sat.x_min, self.sat.x_max
            half = pi / n_c
            blend = self.tsf.overlap * half
            lo, hi = half - blend, half + blend

            def f(phi: float, T_star: float) -> list:
                # same operation order as f_imp_eval so both paths round alike
                xs = n_t * (phi + phi_o / n_t)
                x = n_t * phi
                centre = 0.5 * pi if T_star >= 0 else 1.5 * pi
                mag = abs(T_star)
                raw, inv = [], []
                for p in phases:
                    a = abs((xs + p - centre + pi) % two_pi - pi)
                    if a <= lo:
                        r = 1.0
                    elif a >= hi:
                        r = 0.0
                    else:
                        r = 0.5 * (1.0 + cos(pi * (a - lo) / (2.0 * blend)))
                    raw.append(r)
                    s = sin(x + p + phi_o)
                    v = 1.0 / s if s != 0.0 else 0.0
                    inv.append(min(max(v, x_min), x_max))
                total = sum(raw)
                sgn = 1.0 if T_star >= 0 else -1.0
                return [max(sgn * r / total * v * mag, 0.0) for r, v in zip(raw, inv)]

            return f

        g = self.model.scalar_evaluator()
        thr = self.thresholds.tolist()

        def f(phi: float, T_star: float) -> list:
            sgn = 1.0 if T_star >= 0 else -1.0
            gh = [sgn * v for v in g(phi)]
            raw = [(v - t) ** 2 if v > t else 0.0 for v, t in zip(gh, thr)]
            total = sum(raw)
            if total == 0.0:
                return [0.0] * n_c
            mag = abs(T_star)
            return [r / total / v * mag if r > 0 else 0.0 for r, v in zip(raw, gh)]

        return f

    def f_plus(self, phi):
        return self.branch(phi, 1)

    def f_minus(self, phi):
        return self.branch(phi, -1)

    def __call__(self, phi, T_star):
        return commutate(self, phi, T_star)


def imperfect_commutation(geometry: MotorGeometry, phi_o: float,
                          tsf: TorqueSharingFunction | None = None,
                          sat: SaturationLimits | None = None) -> CommutationFunction:
    return CommutationFunction("imperfect", geometry, phi_o=phi_o,
                               tsf=tsf or TorqueSharingFunction(),
                               sat=sat or SaturationLimits())


def commutate(cf: CommutationFunction, phi, T_star):
    """``u = f+(phi) T*`` for ``T* >= 0`` else ``-f-(phi) T*``."""
    T_star = np.asarray(T_star, dtype=float)
    if T_star.ndim == 0:
        if T_star >= 0:
            return cf.f_plus(phi) * float(T_star)
        return -cf.f_minus(phi) * float(T_star)
    pos = cf.f_plus(phi) * T_star[..., None]
    neg = -cf.f_minus(phi) * T_star[..., None]
    return np.where(T_star[..., None] >= 0, pos, neg)


def tooth_grid(geometry: MotorGeometry, n: int = 4096) -> np.ndarray:
    """``n`` equispaced angles covering one tooth, endpoint excluded."""
    return np.arange(n) * geometry.pitch / n


def design_commutation(model: TorqueGainModel, tsf: TorqueSharingFunction | None = None,
                       threshold=None, threshold_fraction: float = 0.1,
                       kind: str = "identified", grid_size: int = 4096) -> CommutationFunction:
    """Commutation that inverts ``model`` exactly: ``ghat f+ = 1``, ``ghat f- = -1``.

    Coil ``c`` contributes to positive torque only where ``ghat_c`` exceeds
    its threshold, weighted by the squared excess and normalized across
    coils; the negative branch mirrors this.  Thresholds default to
    ``threshold_fraction`` of each coil's peak ``|ghat_c|``.

    Raises
    ------
    InfeasibleCommutationError
        If at some grid angle no coil clears its threshold with the needed sign.
    """
    geometry = model.geometry
    grid = tooth_grid(geometry, grid_size)
    ghat = gain_eval(model, grid)
    if threshold is None:
        thresholds = threshold_fraction * np.abs(ghat).max(axis=0)
    else:
        thresholds = np.broadcast_to(np.asarray(threshold, dtype=float), (geometry.n_c,))
    for sign in (1, -1):
        _, ok = _excess_weights(ghat, thresholds, sign)
        if not ok.all():
            raise InfeasibleCommutationError(grid[np.argmin(ok)], sign)
    return CommutationFunction(kind, geometry, model=model, thresholds=thresholds,
                               tsf=tsf or TorqueSharingFunction())
