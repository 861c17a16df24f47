"""Ground-truth switched reluctance motor simulation.

Torque is generated as ``T = g(phi) u + d`` where ``u`` holds the squared
coil currents, ``g`` is a spatially periodic gain row vector and ``d`` a
time- and position-dependent disturbance.  The rotor is a unit inertia with
viscous damping, integrated exactly under a zero-order-hold torque input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm


@dataclass(frozen=True)
class MotorGeometry:
    """Tooth count ``n_t`` and coil count ``n_c``."""

    n_t: int = 131
    n_c: int = 3

    def __post_init__(self):
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ValueError(f"n_t must be an integer >= 1, got {self.n_t}")
        if int(self.n_c) != self.n_c or self.n_c < 2:
            raise ValueError(f"n_c must be an integer >= 2, got {self.n_c}")

    @property
    def pitch(self) -> float:
        """Tooth pitch, the spatial period of the gain in rad."""
        return 2.0 * math.pi / self.n_t

    def coil_phases(self) -> np.ndarray:
        """Electrical phase lead ``2 pi (c-1) / n_c`` of each coil."""
        return 2.0 * math.pi * np.arange(self.n_c) / self.n_c


def harmonic_basis(n_t: int, n_h: int, phi) -> np.ndarray:
    """Fourier row ``[1, sin(n_t phi), cos(n_t phi), ..., cos(n_h n_t phi)]``.

    Scalar ``phi`` gives shape ``(1 + 2 n_h,)``; an array of angles gives
    shape ``phi.shape + (1 + 2 n_h,)``.
    """
    phi = np.asarray(phi, dtype=float)
    arg = n_t * phi[..., None] * np.arange(1, n_h + 1)
    out = np.empty(phi.shape + (1 + 2 * n_h,))
    out[..., 0] = 1.0
    out[..., 1::2] = np.sin(arg)
    out[..., 2::2] = np.cos(arg)
    return out


@dataclass(frozen=True)
class TorqueGainModel:
    """Per-coil torque gain as a truncated Fourier series in rotor angle.

    ``coeffs`` has length ``n_c (1 + 2 n_h)``, grouped per coil as
    ``[bias, sin_1, cos_1, ..., sin_nh, cos_nh]``.  The same layout is used
    for identified parameter vectors, so a posterior mean can be wrapped
    directly.
    """

    geometry: MotorGeometry
    n_h: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n_h < 0:
            raise ValueError("n_h must be >= 0")
        coeffs = np.array(self.coeffs, dtype=float).ravel()
        expected = self.geometry.n_c * (1 + 2 * self.n_h)
        if coeffs.size != expected:
            raise ValueError(f"expected {expected} coefficients, got {coeffs.size}")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_basis(self) -> int:
        return 1 + 2 * self.n_h

    @property
    def coeff_matrix(self) -> np.ndarray:
        """Coefficients reshaped to ``(n_c, 1 + 2 n_h)``."""
        return self.coeffs.reshape(self.geometry.n_c, self.n_basis)

    def __call__(self, phi) -> np.ndarray:
        return gain_eval(self, phi)

    def scalar_evaluator(self):
        """Fast ``phi -> list`` gain evaluation for per-sample simulation loops."""
        n_t, n_h = self.geometry.n_t, self.n_h
        rows = [tuple(r) for r in self.coeff_matrix.tolist()]
        sin, cos = math.sin, math.cos

        def g(phi: float) -> list:
            x = n_t * phi
            beta = [1.0]
            for h in range(1, n_h + 1):
                beta.append(sin(h * x))
                beta.append(cos(h * x))
            return [sum([c * b for c, b in zip(row, beta)]) for row in rows]

        return g

    def scaled(self, factor: float) -> "TorqueGainModel":
        return TorqueGainModel(self.geometry, self.n_h, factor * self.coeffs)

    def truncated(self, keep_harmonics: int, keep_bias: bool = True) -> "TorqueGainModel":
        """Copy with harmonics above ``keep_harmonics`` (and optionally the bias) zeroed."""
        c = self.coeff_matrix.copy()
        c[:, 1 + 2 * keep_harmonics:] = 0.0
        if not keep_bias:
            c[:, 0] = 0.0
        return TorqueGainModel(self.geometry, self.n_h, c.ravel())

    @classmethod
    def sinusoid(cls, geometry: MotorGeometry, phase_offset: float = 0.0,
                 amplitude: float = 1.0) -> "TorqueGainModel":
        """``g_c(phi) = amplitude * sin(n_t phi + 2 pi (c-1)/n_c + phase_offset)``."""
        shift = geometry.coil_phases() + phase_offset
        c = np.zeros((geometry.n_c, 3))
        c[:, 1] = amplitude * np.cos(shift)
        c[:, 2] = amplitude * np.sin(shift)
        return cls(geometry, 1, c.ravel())

    @classmethod
    def symmetric(cls, geometry: MotorGeometry, coil_coeffs) -> "TorqueGainModel":
        """Build all coils from coil 1 by shifting it ``(c-1)/n_c`` of a tooth.

        Harmonic ``h`` of coil ``c`` is rotated by ``h * 2 pi (c-1) / n_c``.
        """
        coil = np.asarray(coil_coeffs, dtype=float)
        n_h = (coil.size - 1) // 2
        rows = []
        for delta in geometry.coil_phases():
            row = coil.copy()
            for h in range(1, n_h + 1):
                a, b = coil[2 * h - 1], coil[2 * h]
                ch, sh = math.cos(h * delta), math.sin(h * delta)
                row[2 * h - 1] = a * ch - b * sh
                row[2 * h] = a * sh + b * ch
            rows.append(row)
        return cls(geometry, n_h, np.concatenate(rows))


def default_true_gain(geometry: MotorGeometry, seed: int = 0, n_h: int = 5,
                      harmonic_scale: float = 0.3) -> TorqueGainModel:
    """Seeded ground truth: unit first harmonic plus higher harmonics of
    amplitude ``harmonic_scale / h`` with random phase, zero bias."""
    rng = np.random.default_rng(seed)
    coil = np.zeros(1 + 2 * n_h)
    coil[1] = 1.0
    for h in range(2, n_h + 1):
        phase = rng.uniform(0.0, 2.0 * math.pi)
        amp = harmonic_scale / h
        coil[2 * h - 1] = amp * math.cos(phase)
        coil[2 * h] = amp * math.sin(phase)
    return TorqueGainModel.symmetric(geometry, coil)


def gain_eval(model: TorqueGainModel, phi) -> np.ndarray:
    """Evaluate ``g(phi)``; returns shape ``(n_c,)`` or ``phi.shape + (n_c,)``."""
    beta = harmonic_basis(model.geometry.n_t, model.n_h, phi)
    return beta @ model.coeff_matrix.T


def total_torque(model: TorqueGainModel, phi: float, u, d: float = 0.0) -> float:
    u = np.asarray(u, dtype=float)
    if u.shape != (model.geometry.n_c,):
        raise ValueError(f"u must have length {model.geometry.n_c}")
    if np.any(u < 0):
        raise ValueError("squared currents must be non-negative")
    return float(gain_eval(model, phi) @ u + d)


@dataclass(frozen=True)
class DisturbanceModel:
    """``d(phi, t) = d1(t) + sum_i a_i sin(w_i phi + p_i)`` with ``d1 ~ N(0, sigma1_sq)``.

    Spatial frequencies that are integer multiples of ``n_t`` (including 0)
    would be indistinguishable from the gain and are rejected.
    """

    sigma1_sq: float = 0.0
    spatial_terms: tuple = ()
    n_t: int | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.sigma1_sq >= 0:
            raise ValueError("sigma1_sq must be >= 0")
        terms = tuple((float(a), float(w), float(p)) for a, w, p in self.spatial_terms)
        object.__setattr__(self, "spatial_terms", terms)
        if self.n_t is not None:
            for _, w, _ in terms:
                k = w / self.n_t
                if abs(k - round(k)) < 1e-9:
                    raise ValueError(
                        f"spatial frequency {w} is a multiple of n_t={self.n_t}; "
                        "such a disturbance is tooth-periodic")

    def spatial(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.zeros_like(phi)
        for a, w, p in self.spatial_terms:
            out = out + a * np.sin(w * phi + p)
        return out

    def sample(self, phi: float, rng: np.random.Generator) -> float:
        d1 = rng.normal(0.0, math.sqrt(self.sigma1_sq)) if self.sigma1_sq > 0 else 0.0
        return d1 + float(self.spatial(phi))


def disturbance_sample(model: DisturbanceModel, phi: float, rng: np.random.Generator) -> float:
    return model.sample(phi, rng)


def study_disturbance(n_t: int = 131, rng_seed: int = 0) -> DisturbanceModel:
    """Position-dependent friction-like disturbance of the simulation study."""
    return DisturbanceModel(sigma1_sq=7e-9, spatial_terms=((5e-4, n_t / 1.4, 0.0),),
                            n_t=n_t, rng_seed=rng_seed)


@dataclass(frozen=True)
class RotorDynamics:
    """Unit-inertia rotor ``G(s) = 1 / (s^2 + damping s)`` sampled with period ``dt``.

    ``Ad`` and ``Bd`` are the exact zero-order-hold discretization for the
    state ``[phi, omega]``.
    """

    damping: float = 1.0
    dt: float = 1e-3
    inertia: float = field(default=1.0, init=False)
    Ad: np.ndarray = field(init=False, repr=False)
    Bd: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.damping >= 0:
            raise ValueError("damping must be >= 0")
        A = np.array([[0.0, 1.0], [0.0, -self.damping]])
        B = np.array([[0.0], [1.0 / self.inertia]])
        M = np.zeros((3, 3))
        M[:2, :2] = A
        M[:2, 2:] = B
        E = expm(M * self.dt)
        object.__setattr__(self, "Ad", E[:2, :2])
        object.__setattr__(self, "Bd", E[:2, 2])

    def transfer(self, s):
        """Continuous frequency response ``G(s)``."""
        s = np.asarray(s, dtype=complex)
        return 1.0 / (self.inertia * s**2 + self.damping * s)


@dataclass
class PlantState:
    phi: float = 0.0
    omega: float = 0.0
    t: float = 0.0


def step(dynamics: RotorDynamics, state: PlantState, T: float) -> PlantState:
    """Advance one sample under a torque held constant over the period."""
    A, B = dynamics.Ad, dynamics.Bd
    phi = A[0, 0] * state.phi + A[0, 1] * state.omega + B[0] * T
    omega = A[1, 0] * state.phi + A[1, 1] * state.omega + B[1] * T
    if not (math.isfinite(phi) and math.isfinite(omega)):
        raise FloatingPointError("plant state became non-finite")
    return PlantState(phi, omega, state.t + dynamics.dt)


@dataclass(frozen=True)
class Plant:
    """The simulated motor: true gain, disturbance and rotor dynamics."""

    gain: TorqueGainModel
    disturbance: DisturbanceModel
    dynamics: RotorDynamics

    @property
    def geometry(self) -> MotorGeometry:
        return self.gain.geometry
