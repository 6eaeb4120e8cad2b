"""Random variates, densities and information-form Gaussian algebra.

Conventions
-----------
* ``vec`` stacks columns (``A.flatten(order="F")``).
* A matrix-normal ``MN(M, V, Sigma)`` has ``vec(X) ~ N(vec(M), kron(V, Sigma))``
  where ``V`` couples columns and ``Sigma`` couples rows.
* Gamma distributions are parameterised by shape and *rate*.
* Every sampler takes an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import NumericalError, ParameterError

_LOG_2PI = np.log(2.0 * np.pi)


def symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def safe_cholesky(S: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of ``(S + S^T)/2``.

    On failure a jitter of ``1e-10 * trace/dim`` is added once; a second
    failure raises :class:`NumericalError`.
    """
    S = symmetrize(np.asarray(S, dtype=float))
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    dim = S.shape[-1]
    jitter = 1e-10 * abs(np.trace(S)) / dim
    if not np.isfinite(jitter) or jitter == 0.0:
        jitter = 1e-10
    try:
        return np.linalg.cholesky(S + jitter * np.eye(dim))
    except np.linalg.LinAlgError:
        raise NumericalError(f"{what} is not positive definite",
                             condition=_condition(S)) from None


def _condition(S):
    try:
        return float(np.linalg.cond(S))
    except np.linalg.LinAlgError:
        return float("inf")


def is_spd(S: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(symmetrize(np.asarray(S, dtype=float)))
    except np.linalg.LinAlgError:
        return False
    return True


def chol_inverse(L: np.ndarray) -> np.ndarray:
    """Inverse of ``L @ L.T`` given its lower Cholesky factor."""
    Linv = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True, check_finite=False)
    return Linv.T @ Linv


def spd_inverse(S: np.ndarray, what: str = "matrix") -> np.ndarray:
    return chol_inverse(safe_cholesky(S, what))


def chol_logdet(L: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(L))))


# ---------------------------------------------------------------------------
# parameter containers

@dataclass(frozen=True)
class InverseWishartParams:
    dof: float
    scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        object.__setattr__(self, "scale", scale)
        dim = scale.shape[0]
        if scale.shape != (dim, dim):
            raise ParameterError(f"inverse-Wishart scale must be square, got {scale.shape}")
        if not self.dof > dim - 1:
            raise ParameterError(f"inverse-Wishart dof {self.dof} must exceed dim - 1 = {dim - 1}")
        if not is_spd(scale):
            raise ParameterError("inverse-Wishart scale must be positive definite")

    @property
    def dim(self) -> int:
        return self.scale.shape[0]

    def mean(self) -> np.ndarray:
        if self.dof <= self.dim + 1:
            raise ParameterError("inverse-Wishart mean requires dof > dim + 1")
        return self.scale / (self.dof - self.dim - 1)


@dataclass(frozen=True)
class MatrixNormalParams:
    M: np.ndarray
    V: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        V = np.atleast_2d(np.asarray(self.V, dtype=float))
        Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if V.shape != (M.shape[1], M.shape[1]) or Sigma.shape != (M.shape[0], M.shape[0]):
            raise ParameterError(
                f"matrix-normal shapes inconsistent: M {M.shape}, V {V.shape}, Sigma {Sigma.shape}")
        for name, mat in (("V", V), ("Sigma", Sigma)):
            if not is_spd(mat):
                raise ParameterError(f"matrix-normal {name} must be positive definite")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "Sigma", Sigma)


@dataclass(frozen=True)
class InformationGaussian:
    """Gaussian with information vector ``theta`` and precision ``lam``."""

    theta: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        lam = symmetrize(np.atleast_2d(np.asarray(self.lam, dtype=float)))
        if lam.shape != (theta.size, theta.size):
            raise ParameterError(f"precision shape {lam.shape} does not match theta {theta.shape}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "lam", lam)


def info_to_moment(g: InformationGaussian) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(mean, covariance)``; raises NumericalError if ``lam`` is singular."""
    try:
        L = np.linalg.cholesky(g.lam)
    except np.linalg.LinAlgError:
        raise NumericalError("precision matrix is not positive definite",
                             condition=_condition(g.lam)) from None
    cov = chol_inverse(L)
    mean = linalg.cho_solve((L, True), g.theta, check_finite=False)
    return mean, cov


def moment_to_info(mean: np.ndarray, cov: np.ndarray) -> InformationGaussian:
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    try:
        L = np.linalg.cholesky(symmetrize(np.atleast_2d(cov)))
    except np.linalg.LinAlgError:
        raise NumericalError("covariance matrix is not positive definite",
                             condition=_condition(np.atleast_2d(cov))) from None
    lam = chol_inverse(L)
    return InformationGaussian(lam @ mean, lam)


# ---------------------------------------------------------------------------
# samplers

def sample_inverse_wishart(params: InverseWishartParams, rng: np.random.Generator) -> np.ndarray:
    """Bartlett-decomposition draw from IW(dof, scale)."""
    L = safe_cholesky(params.scale, "inverse-Wishart scale")
    return sample_inverse_wishart_from_chol(params.dof, L, rng)


def sample_inverse_wishart_from_chol(dof, L, rng):
    """IW draw given the lower Cholesky factor ``L`` of the scale matrix."""
    p = L.shape[0]
    A = np.zeros((p, p))
    A.flat[::p + 1] = np.sqrt(rng.chisquare(dof - np.arange(p)))
    low = _strict_lower(p)
    A[low] = rng.standard_normal(len(low[0]))
    B = linalg.solve_triangular(A, L.T, lower=True, check_finite=False)
    return symmetrize(B.T @ B)


@functools.lru_cache(maxsize=None)
def _strict_lower(p):
    return np.tril_indices(p, -1)


def sample_matrix_normal(params: MatrixNormalParams, rng: np.random.Generator) -> np.ndarray:
    Lv = safe_cholesky(params.V, "matrix-normal V")
    Ls = safe_cholesky(params.Sigma, "matrix-normal Sigma")
    Z = rng.standard_normal(params.M.shape)
    return params.M + Ls @ Z @ Lv.T


def sample_matrix_normal_precision(M, right_precision, Sigma, rng):
    """Draw ``X ~ MN(M, right_precision^{-1}, Sigma)`` without inverting the precision."""
    Lk = safe_cholesky(right_precision, "matrix-normal right precision")
    Ls = safe_cholesky(Sigma, "matrix-normal Sigma")
    Z = rng.standard_normal(M.shape)
    # each row w of W solves Lk^T w = z, so cov(w) = Lk^{-T} Lk^{-1} = K^{-1}
    W = linalg.solve_triangular(Lk.T, Z.T, lower=False, check_finite=False).T
    return M + Ls @ W


def sample_niw(mean, kappa, dof, scale, rng):
    """Normal-inverse-Wishart: ``Sigma ~ IW(dof, scale)``, ``mu | Sigma ~ N(mean, Sigma/kappa)``."""
    if kappa <= 0:
        raise ParameterError("NIW kappa must be positive")
    Sigma = sample_inverse_wishart(InverseWishartParams(dof, scale), rng)
    L = safe_cholesky(Sigma / kappa, "NIW covariance")
    mu = np.asarray(mean, dtype=float) + L @ rng.standard_normal(L.shape[0])
    return mu, Sigma


def sample_gamma(shape, rate, rng, size=None):
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(shape <= 0) or np.any(rate <= 0):
        raise ParameterError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


def sample_beta(a, b, rng, size=None):
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) <= 0):
        raise ParameterError("beta parameters must be positive")
    return rng.beta(a, b, size=size)


def sample_log_dirichlet(concentration, rng):
    """Log of a Dirichlet draw, exact even for tiny concentrations.

    Uses ``G = Gamma(a + 1) * U**(1/a)`` so the log of each gamma variate is
    computed without underflow. Accepts a vector or a matrix of rows.
    """
    a = np.asarray(concentration, dtype=float)
    if a.size == 0 or np.any(~(a > 0)):
        raise ParameterError("Dirichlet concentrations must be strictly positive")
    log_g = np.log(rng.standard_gamma(a + 1.0)) + np.log(rng.random(a.shape)) / a
    top = log_g.max(axis=-1, keepdims=True)
    return log_g - (top + np.log(np.exp(log_g - top).sum(axis=-1, keepdims=True)))


def sample_dirichlet(concentration, rng):
    p = np.exp(sample_log_dirichlet(concentration, rng))
    return p / p.sum(axis=-1, keepdims=True)


def sample_info_gaussian(theta, lam, rng, what="information-form Gaussian"):
    """Draw from N^{-1}(theta, lam)."""
    L = safe_cholesky(lam, what)
    mean = linalg.cho_solve((L, True), theta, check_finite=False)
    return mean + linalg.solve_triangular(L.T, rng.standard_normal(mean.shape[0]), lower=False, check_finite=False)


def sample_categorical_log(logp, rng):
    p = np.exp(logp - np.max(logp))
    c = np.cumsum(p)
    return int(np.searchsorted(c, rng.random() * c[-1], side="right"))


# ---------------------------------------------------------------------------
# densities

def gaussian_logpdf_rows(resid: np.ndarray, cov_chol: np.ndarray) -> np.ndarray:
    """Zero-mean Gaussian log density of each row of ``resid``."""
    sol = linalg.solve_triangular(cov_chol, resid.T, lower=True, check_finite=False)
    d = cov_chol.shape[0]
    return -0.5 * np.sum(sol * sol, axis=0) - 0.5 * chol_logdet(cov_chol) - 0.5 * d * _LOG_2PI


def mvn_logpdf(x, mean, cov) -> float:
    L = safe_cholesky(np.atleast_2d(cov), "covariance")
    r = np.atleast_1d(np.asarray(x, dtype=float) - mean)
    return float(gaussian_logpdf_rows(r[None, :], L)[0])


def invwishart_logpdf(X, params: InverseWishartParams) -> float:
    p = params.dim
    nu = params.dof
    Lx = safe_cholesky(X, "inverse-Wishart argument")
    Ls = safe_cholesky(params.scale, "inverse-Wishart scale")
    Xinv = chol_inverse(Lx)
    return float(0.5 * nu * chol_logdet(Ls) - 0.5 * nu * p * np.log(2.0)
                 - special.multigammaln(0.5 * nu, p)
                 - 0.5 * (nu + p + 1) * chol_logdet(Lx)
                 - 0.5 * np.trace(params.scale @ Xinv))


def matrix_normal_logpdf(X, M, right_precision, Sigma) -> float:
    """log MN(X; M, right_precision^{-1}, Sigma)."""
    X = np.atleast_2d(X)
    d, m = X.shape
    Lk = safe_cholesky(right_precision, "right precision")
    Ls = safe_cholesky(Sigma, "Sigma")
    D = X - M
    Q = linalg.solve_triangular(Ls, D, lower=True, check_finite=False) @ Lk
    return float(-0.5 * np.sum(Q * Q) + 0.5 * d * chol_logdet(Lk)
                 - 0.5 * m * chol_logdet(Ls) - 0.5 * d * m * _LOG_2PI)


def gamma_logpdf(x, shape, rate) -> float:
    return float(shape * np.log(rate) - special.gammaln(shape)
                 + (shape - 1.0) * np.log(x) - rate * x)


def beta_logpdf(x, a, b) -> float:
    return float(special.xlog1py(b - 1.0, -x) + special.xlogy(a - 1.0, x) - special.betaln(a, b))


def dirichlet_logpdf(p, concentration, floor: float = 1e-300) -> float:
    a = np.asarray(concentration, dtype=float)
    logp = np.log(np.maximum(np.asarray(p, dtype=float), floor))
    return float(np.sum(special.gammaln(a.sum(axis=-1))) - np.sum(special.gammaln(a))
                 + np.sum((a - 1.0) * logp))
