"""Discrete PID control and the closed-loop simulation of the commutated motor."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .commutation import CommutationFunction
from .plant import Plant, RotorDynamics


@dataclass
class PidController:
    """Parallel PID ``kp + ki/s + kd s/(tau s + 1)`` discretized with Tustin.

    The three branches are discretized separately, which is the same as
    discretizing the sum, and keeps the integrator state accessible for the
    optional clamp ``integrator_limit`` (``None`` disables anti-windup).
    """

    kp: float
    ki: float
    kd: float
    tau: float
    dt: float
    integrator_limit: float | None = None
    _e_prev: float = field(default=0.0, init=False, repr=False)
    _i: float = field(default=0.0, init=False, repr=False)
    _d: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self):
        if not self.ki > 0:
            raise ValueError("ki must be positive: ramp tracking needs integral action")
        if not (self.dt > 0 and self.tau >= 0):
            raise ValueError("dt must be positive and tau non-negative")
        self._ad = (2 * self.tau - self.dt) / (2 * self.tau + self.dt)
        self._bd = 2 * self.kd / (2 * self.tau + self.dt)
        self._bi = self.ki * self.dt / 2

    def reset(self):
        self._e_prev = self._i = self._d = 0.0

    def step(self, e: float) -> float:
        i = self._i + self._bi * (e + self._e_prev)
        if self.integrator_limit is not None:
            i = min(max(i, -self.integrator_limit), self.integrator_limit)
        d = self._ad * self._d + self._bd * (e - self._e_prev)
        self._i, self._d, self._e_prev = i, d, e
        return self.kp * e + i + d

    def continuous(self, s):
        s = np.asarray(s, dtype=complex)
        return self.kp + self.ki / s + self.kd * s / (self.tau * s + 1)

    def discrete(self, z):
        """Frequency response of the discrete controller at ``z``."""
        z = np.asarray(z, dtype=complex)
        T = self.dt
        return (self.kp + self._bi * (z + 1) / (z - 1)
                + 2 * self.kd * (z - 1) / ((2 * self.tau + T) * z - (2 * self.tau - T)))

    def tf(self):
        """Numerator and denominator of ``C(z)`` in powers of ``z^-1``."""
        T, tau = self.dt, self.tau
        p = np.array([self.kp])
        i_num, i_den = self._bi * np.array([1.0, 1.0]), np.array([1.0, -1.0])
        d_num = 2 * self.kd * np.array([1.0, -1.0])
        d_den = np.array([2 * tau + T, -(2 * tau - T)])
        den = np.polymul(i_den, d_den)
        num = (np.polymul(p, den) + np.polymul(i_num, d_den)
               + np.polymul(d_num, i_den))
        return num / den[0], den / den[0]


def controller_step(ctl: PidController, e: float) -> float:
    return ctl.step(e)


def pid_design(bandwidth_hz: float, dynamics: RotorDynamics) -> PidController:
    """Loop-shaped PID with unity crossover at ``bandwidth_hz``.

    Integrator corner at a tenth of the crossover, lead zero and pole a factor
    three below and above it.  On the sampled 1 kHz loop at 20 Hz this leaves
    about 44 degrees of phase margin.
    """
    nyquist_guard = 1.0 / (10.0 * dynamics.dt)
    if not 0 < bandwidth_hz < nyquist_guard:
        raise ValueError(f"bandwidth must lie in (0, {nyquist_guard:g}) Hz for dt={dynamics.dt:g}")
    wc = 2 * math.pi * bandwidth_hz
    wi, wz, wp = wc / 10, wc / 3, 3 * wc
    jw = 1j * wc
    shape = (1 + wi / jw) * (1 + jw / wz) / (1 + jw / wp)
    K = 1.0 / abs(shape * dynamics.transfer(jw))
    tau = 1.0 / wp
    ki = K * wi
    kp = K * (1 + wi / wz) - ki * tau
    kd = K / wz - kp * tau
    return PidController(kp, ki, kd, tau, dynamics.dt)


def loop_margins(ctl: PidController, dynamics: RotorDynamics, n: int = 20000):
    """Crossover frequency (Hz) and phase margin (deg) of the sampled loop.

    The plant is taken as its exact zero-order-hold equivalent so the
    sample-and-hold delay is included.
    """
    T = dynamics.dt
    w = np.logspace(-1, math.log10(math.pi / T) - 1e-6, n)
    z = np.exp(1j * w * T)
    A, B = dynamics.Ad, dynamics.Bd
    C = np.array([1.0, 0.0])
    # G(z) = C (zI - A)^-1 B for the 2x2 case
    det = (z - A[0, 0]) * (z - A[1, 1]) - A[0, 1] * A[1, 0]
    g = (C[0] * ((z - A[1, 1]) * B[0] + A[0, 1] * B[1])
         + C[1] * (A[1, 0] * B[0] + (z - A[0, 0]) * B[1])) / det
    L = ctl.discrete(z) * g
    mag = np.abs(L)
    k = np.nonzero(mag < 1.0)[0][0]
    # interpolate in log-magnitude between the bracketing samples
    f = math.log(mag[k - 1]) / (math.log(mag[k - 1]) - math.log(mag[k]))
    wc = w[k - 1] * (w[k] / w[k - 1]) ** f
    phase = np.angle(L[k - 1] * (L[k] / L[k - 1]) ** f, deg=True)
    return wc / (2 * math.pi), 180.0 + phase


@dataclass(frozen=True)
class RampReference:
    """``phi_r(t) = phi_start + omega_r t`` until ``|stroke|`` has been travelled."""

    omega_r: float
    stroke: float
    phi_start: float = 0.0

    def __post_init__(self):
        if not abs(self.stroke) > 0:
            raise ValueError("stroke must be non-zero")

    @property
    def duration(self) -> float:
        if self.omega_r == 0:
            return math.inf
        return abs(self.stroke) / abs(self.omega_r)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        travel = np.minimum(abs(self.omega_r) * t, abs(self.stroke))
        return self.phi_start + math.copysign(1.0, self.omega_r) * travel


@dataclass
class ClosedLoopTrajectory:
    t: np.ndarray
    phi_r: np.ndarray
    phi: np.ndarray
    e: np.ndarray
    T_star: np.ndarray
    u: np.ndarray
    omega: np.ndarray
    diverged: bool = False

    def __len__(self):
        return self.t.size

    def window(self, mask) -> "ClosedLoopTrajectory":
        return ClosedLoopTrajectory(self.t[mask], self.phi_r[mask], self.phi[mask],
                                    self.e[mask], self.T_star[mask], self.u[mask],
                                    self.omega[mask], self.diverged)


def simulate_closed_loop(plant: Plant, cf: CommutationFunction, ctl: PidController,
                         ref: RampReference, rng: np.random.Generator | None = None,
                         n_steps: int | None = None, e_safety: float = math.inf,
                         omega0: float = 0.0) -> ClosedLoopTrajectory:
    """Simulate the commutated motor under PID tracking of ``ref``.

    Per sample: ``e = phi_r - phi``, ``T* = C e``, ``u = f(phi, T*)``,
    ``T = g(phi) u + d`` held over the sample.  The controller is reset
    first.  If ``|e|`` exceeds ``e_safety`` the run stops and the returned
    trajectory (up to that sample) is flagged ``diverged``.
    """
    dyn = plant.dynamics
    if abs(ctl.dt - dyn.dt) > 1e-15:
        raise ValueError("controller and plant sample periods differ")
    if n_steps is None:
        if not math.isfinite(ref.duration):
            raise ValueError("n_steps required for a zero-velocity reference")
        n_steps = int(math.floor(ref.duration / dyn.dt + 1e-9)) + 1
    if rng is None:
        rng = np.random.default_rng(plant.disturbance.rng_seed)
    ctl.reset()
    dt = dyn.dt
    t = np.arange(n_steps) * dt
    phi_r = ref(t)
    sigma = math.sqrt(plant.disturbance.sigma1_sq)
    d1 = rng.normal(0.0, sigma, n_steps) if sigma > 0 else np.zeros(n_steps)

    n_c = plant.geometry.n_c
    phi_log = np.empty(n_steps)
    omega_log = np.empty(n_steps)
    T_log = np.empty(n_steps)
    u_log = np.empty((n_steps, n_c))
    A, B = dyn.Ad, dyn.Bd
    a00, a01, a11 = A[0, 0], A[0, 1], A[1, 1]
    b0, b1 = B[0], B[1]
    gain = plant.gain.scalar_evaluator()
    comm = cf.scalar_evaluator()
    dist = plant.disturbance
    terms = getattr(dist, "spatial_terms", None)
    if terms is not None:
        def spatial(x):
            return sum([a * math.sin(w * x + p) for a, w, p in terms])
    else:
        def spatial(x):
            return float(dist.spatial(x))
    phi, omega = ref.phi_start, omega0
    diverged = False
    k = 0
    for k in range(n_steps):
        e = phi_r[k] - phi
        if not abs(e) <= e_safety:
            diverged = True
            break
        T_star = ctl.step(e)
        u = comm(phi, T_star)
        torque = sum([a * b for a, b in zip(gain(phi), u)]) + d1[k] + spatial(phi)
        phi_log[k], omega_log[k], T_log[k] = phi, omega, T_star
        u_log[k] = u
        phi, omega = a00 * phi + a01 * omega + b0 * torque, a11 * omega + b1 * torque
    else:
        k = n_steps
    phi_log, phi_r = phi_log[:k], phi_r[:k]
    return ClosedLoopTrajectory(t[:k], phi_r, phi_log, phi_r - phi_log, T_log[:k],
                                u_log[:k], omega_log[:k], diverged)
