"""Bayesian identification of the torque gain from constant-velocity data.

At constant velocity the true torque is constant, so every sample satisfies
``g(phi_k) u_k = +-T_const - d_k``.  With ``g`` linear in Fourier
coefficients ``theta`` this is the linear model ``b = X theta - d`` with a
standard normal prior on ``theta`` and Gaussian priors on the disturbance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .plant import MotorGeometry, TorqueGainModel, harmonic_basis


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class FourierBasis:
    n_t: int
    n_h: int

    @property
    def size(self) -> int:
        return 1 + 2 * self.n_h

    def n_theta(self, n_c: int) -> int:
        return n_c * self.size

    def __call__(self, phi) -> np.ndarray:
        return harmonic_basis(self.n_t, self.n_h, phi)

    def psi(self, phi, n_c: int) -> np.ndarray:
        """``I_{n_c} kron beta(phi)`` with shape ``(n_c, n_c * size)``."""
        return np.kron(np.eye(n_c), self(phi)[None, :])


def basis_eval(basis: FourierBasis, phi) -> np.ndarray:
    return basis(phi)


def build_target(dataset, T_const: float | None = None):
    """Signed constant-torque targets; ``T_const`` defaults to the mean ``|T*|``."""
    if not dataset.records or dataset.n_total == 0:
        raise ValueError("dataset is empty")
    _, _, T_star, direction = dataset.stacked()
    if T_const is None:
        T_const = float(np.mean(np.abs(T_star)))
    return direction * T_const, T_const


def design_rows(phi, u, basis: FourierBasis) -> np.ndarray:
    """Rows ``u_k^T psi_g(phi_k) = kron(u_k, beta(phi_k))``."""
    phi = np.asarray(phi, dtype=float)
    u = np.atleast_2d(np.asarray(u, dtype=float))
    if u.shape[0] != phi.size:
        raise ValueError(f"{u.shape[0]} current rows for {phi.size} angles")
    beta = basis(phi)
    return (u[:, :, None] * beta[:, None, :]).reshape(phi.size, -1)


def build_design(dataset, basis: FourierBasis) -> np.ndarray:
    phi, u, _, _ = dataset.stacked()
    if u.shape[1] != dataset.geometry.n_c:
        raise ValueError("current columns do not match the coil count")
    return design_rows(phi, u, basis)


@dataclass(frozen=True)
class WhiteKernel:
    variance: float

    diagonal = True

    def __call__(self, a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return self.variance * (a[:, None] == b[None, :]).astype(float)


@dataclass(frozen=True)
class PeriodicKernel:
    """``variance * exp(-2 sin^2(pi |a - b| / period) / lengthscale^2)``."""

    variance: float
    lengthscale: float
    period: float

    diagonal = False

    def __call__(self, a, b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        s = np.sin(math.pi * np.abs(a[:, None] - b[None, :]) / self.period)
        return self.variance * np.exp(-2.0 * s**2 / self.lengthscale**2)


@dataclass(frozen=True)
class DisturbancePrior:
    """Temporal white variance ``sigma_sq`` plus a spatial kernel on rotor angle."""

    sigma_sq: float = 0.0
    kernel: object = field(default_factory=lambda: WhiteKernel(1e-6))

    def __post_init__(self):
        if not self.sigma_sq >= 0:
            raise ValueError("sigma_sq must be non-negative")

    def diagonal_noise(self, n: int) -> np.ndarray | None:
        """Diagonal of ``Sigma + sigma^2 I`` if it is diagonal, else ``None``."""
        if getattr(self.kernel, "diagonal", False):
            return np.full(n, self.kernel.variance + self.sigma_sq)
        return None


def build_sigma(prior: DisturbancePrior, phi, tol: float = 1e-10) -> np.ndarray:
    """Spatial covariance ``Sigma_ij = k(phi_i, phi_j)``; rejects non-PSD results."""
    phi = np.asarray(phi, dtype=float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("angles must be finite")
    S = prior.kernel(phi, phi)
    S = 0.5 * (S + S.T)
    if not getattr(prior.kernel, "diagonal", False):
        w = linalg.eigvalsh(S)
        if w[0] < -tol * max(w[-1], 1.0):
            raise ValueError(f"kernel matrix is not PSD (min eigenvalue {w[0]:.3g})")
    elif np.any(np.diag(S) < 0):
        raise ValueError("negative kernel variance")
    return S


@dataclass
class PosteriorModel:
    theta_hat: np.ndarray
    covariance: np.ndarray
    basis: FourierBasis
    geometry: MotorGeometry
    T_const: float = math.nan
    provenance: dict = field(default_factory=dict)

    @property
    def n_theta(self) -> int:
        return self.theta_hat.size

    def gain_model(self) -> TorqueGainModel:
        return TorqueGainModel(self.geometry, self.basis.n_h, self.theta_hat)

    def evaluate(self, phi):
        return model_eval(self, phi)


def _dual(X, b, noise):
    K = X @ X.T + noise
    try:
        cf = linalg.cho_factor(K, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("regularized Gram matrix is not positive definite") from exc
    theta = X.T @ linalg.cho_solve(cf, b)
    cov = np.eye(X.shape[1]) - X.T @ linalg.cho_solve(cf, X)
    return theta, cov


def _information(X, b, r):
    Xw = X / r[:, None]
    A = X.T @ Xw + np.eye(X.shape[1])
    try:
        cf = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularSystemError("information matrix is not positive definite") from exc
    theta = linalg.cho_solve(cf, Xw.T @ b)
    cov = linalg.cho_solve(cf, np.eye(X.shape[1]))
    return theta, cov


def posterior(X, b, prior: DisturbancePrior, phi=None, form: str = "auto"):
    """Posterior of ``theta ~ N(0, I)`` given ``b = X theta - d``.

    ``form="dual"`` uses the sample-space expression
    ``theta = X^T (X X^T + Sigma + sigma^2 I)^-1 b``; ``form="information"``
    uses ``(X^T R^-1 X + I)^-1 X^T R^-1 b`` and needs a diagonal ``R``.
    ``"auto"`` picks the information form whenever ``R`` is diagonal.

    Returns ``(theta_hat, covariance)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    b = np.asarray(b, dtype=float)
    N, p = X.shape
    if N < 1 or b.shape != (N,):
        raise ValueError("X and b sizes disagree or are empty")
    r = prior.diagonal_noise(N)
    if r is not None and np.all(r == 0):
        # noise-free limit: least squares with vanishing covariance
        if np.linalg.matrix_rank(X) < p:
            raise SingularSystemError("zero disturbance prior with rank-deficient X")
        return np.linalg.lstsq(X, b, rcond=None)[0], np.zeros((p, p))
    if form == "auto":
        form = "information" if r is not None and np.all(r > 0) else "dual"
    if form == "information":
        if r is None:
            raise ValueError("information form needs a diagonal disturbance prior")
        if np.any(r <= 0):
            raise SingularSystemError("information form needs strictly positive noise")
        return _information(X, b, r)
    if form != "dual":
        raise ValueError(f"unknown form {form!r}")
    if r is not None:
        noise = np.diag(r)
    else:
        if phi is None:
            raise ValueError("sample angles are needed to evaluate the spatial kernel")
        noise = build_sigma(prior, phi) + prior.sigma_sq * np.eye(N)
    return _dual(X, b, noise)


def identify(dataset, basis: FourierBasis, prior: DisturbancePrior | None = None,
             T_const: float | None = None, form: str = "auto") -> PosteriorModel:
    """Build targets and design matrix from ``dataset`` and condition the prior."""
    prior = prior or DisturbancePrior()
    b, T_const = build_target(dataset, T_const)
    X = build_design(dataset, basis)
    phi = dataset.stacked()[0]
    theta, cov = posterior(X, b, prior, phi=phi, form=form)
    return PosteriorModel(theta, 0.5 * (cov + cov.T), basis, dataset.geometry, T_const,
                          dict(dataset.provenance))


def model_eval(post: PosteriorModel, phi):
    """Mean ``ghat(phi)`` (length ``n_c``) and its ``n_c x n_c`` covariance.

    Vectorizes over an array of angles, adding leading axes.
    """
    n_c = post.geometry.n_c
    nb = post.basis.size
    beta = post.basis(phi)
    mean = beta @ post.theta_hat.reshape(n_c, nb).T
    C = post.covariance.reshape(n_c, nb, n_c, nb)
    var = np.einsum("...i,aibj,...j->...ab", beta, C, beta)
    return mean, var


def confidence_band(post: PosteriorModel, phi, z: float = 1.96):
    """Mean and ``z``-sigma half-width per coil."""
    mean, var = model_eval(post, phi)
    sd = np.sqrt(np.clip(np.diagonal(var, axis1=-2, axis2=-1), 0.0, None))
    return mean, z * sd


@dataclass(frozen=True)
class RankReport:
    rank: int
    n_cols: int
    singular_values: np.ndarray
    tolerance: float

    @property
    def full(self) -> bool:
        return self.rank == self.n_cols

    @property
    def smallest(self) -> np.ndarray:
        return np.sort(self.singular_values)[: min(5, self.singular_values.size)]


def excitation_rank(X, tolerance: float = 1e-10) -> RankReport:
    """Numerical rank: singular values above ``tolerance * sigma_max``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        raise ValueError("empty design matrix")
    s = linalg.svdvals(X)
    if s[0] == 0:
        return RankReport(0, X.shape[1], s, tolerance)
    return RankReport(int(np.sum(s > tolerance * s[0])), X.shape[1], s, tolerance)
