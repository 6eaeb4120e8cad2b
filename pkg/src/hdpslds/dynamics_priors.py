"""Priors and conditional posteriors for the per-mode dynamic parameters.

Every mode follows the regression ``psi_t = A psibar_t + mu + e_t`` with
``e_t ~ N(0, Sigma)``. For autoregressive models ``psi_t = y_t`` and
``psibar_t`` stacks the ``r`` previous observations; for state-space models
``psi_t = x_t`` and ``psibar_t = x_{t-1}``.

Three prior families are supported:

* matrix-normal inverse-Wishart (conjugate in ``(A, Sigma)``),
* automatic relevance determination, a zero-mean Gaussian on ``vec(A)`` whose
  per-group precisions carry Gamma hyperpriors, with an IW prior on ``Sigma``,
* independent normal / inverse-Wishart / normal priors on ``A``, ``Sigma`` and
  ``mu`` ("N-IW-N"), which also allow ``A`` to be shared by all modes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .distributions import (InverseWishartParams, chol_inverse, safe_cholesky,
                            sample_gamma, sample_info_gaussian,
                            sample_inverse_wishart, sample_inverse_wishart_from_chol,
                            symmetrize)
from .errors import ParameterError


# ---------------------------------------------------------------------------
# regression data

@dataclass(frozen=True)
class PseudoObsRegression:
    """Aligned regression pairs ``(psi_t, psibar_t)`` with mode labels (0-based)."""

    psi: np.ndarray
    psibar: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        psi = np.atleast_2d(np.asarray(self.psi, dtype=float))
        psibar = np.atleast_2d(np.asarray(self.psibar, dtype=float))
        z = np.asarray(self.z, dtype=np.int64).ravel()
        if psi.shape[0] != psibar.shape[0] or psi.shape[0] != z.size:
            raise ParameterError(
                f"regression arrays misaligned: psi {psi.shape}, psibar {psibar.shape}, z {z.shape}")
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "psibar", psibar)
        object.__setattr__(self, "z", z)

    @property
    def out_dim(self) -> int:
        return self.psi.shape[1]

    @property
    def in_dim(self) -> int:
        return self.psibar.shape[1]

    def with_labels(self, z) -> "PseudoObsRegression":
        return PseudoObsRegression(self.psi, self.psibar, z)


def lagged_design(y: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """``(psi, psibar)`` for an AR(r) model; the first ``r`` rows of ``y`` are context."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T = y.shape[0] - r
    if T < 1:
        raise ParameterError(f"sequence of length {y.shape[0]} too short for {r} lags")
    psibar = np.hstack([y[r - i - 1:r - i - 1 + T] for i in range(r)])
    return y[r:], psibar


def ar_regression(y_seqs, r: int, z_seqs) -> PseudoObsRegression:
    parts = [lagged_design(y, r) for y in y_seqs]
    return PseudoObsRegression(np.vstack([p[0] for p in parts]),
                               np.vstack([p[1] for p in parts]),
                               np.concatenate([np.asarray(z) for z in z_seqs]))


def state_regression(x_seqs, z_seqs) -> PseudoObsRegression:
    """Regression pairs from state sequences that include ``x_0`` as their first row."""
    return PseudoObsRegression(np.vstack([x[1:] for x in x_seqs]),
                               np.vstack([x[:-1] for x in x_seqs]),
                               np.concatenate([np.asarray(z) for z in z_seqs]))


@dataclass(frozen=True)
class ModeStats:
    """Per-mode data sums: counts, second moments and first moments."""

    n: np.ndarray       # (L,)
    Sbb: np.ndarray     # (L, m, m)   sum psibar psibar^T
    Sab: np.ndarray     # (L, l, m)   sum psi psibar^T
    Saa: np.ndarray     # (L, l, l)   sum psi psi^T
    sa: np.ndarray      # (L, l)      sum psi
    sb: np.ndarray      # (L, m)      sum psibar

    @classmethod
    def from_regression(cls, reg: PseudoObsRegression, L: int) -> "ModeStats":
        z = reg.z
        if z.size and (z.min() < 0 or z.max() >= L):
            raise ParameterError("mode label out of range")
        onehot = np.zeros((z.size, L))
        onehot[np.arange(z.size), z] = 1.0
        P, B = reg.psi, reg.psibar
        T, l, m = z.size, P.shape[1], B.shape[1]
        # one-hot weighted copies turn the per-mode sums into single matrix products
        WB = (onehot[:, :, None] * B[:, None, :]).reshape(T, L * m)
        WP = (onehot[:, :, None] * P[:, None, :]).reshape(T, L * l)
        return cls(n=np.bincount(z, minlength=L).astype(np.int64),
                   Sbb=(WB.T @ B).reshape(L, m, m),
                   Sab=np.swapaxes((WB.T @ P).reshape(L, m, l), 1, 2),
                   Saa=(WP.T @ P).reshape(L, l, l),
                   sa=onehot.T @ P, sb=onehot.T @ B)

    def shifted(self, k: int, mu) -> tuple[np.ndarray, np.ndarray]:
        """``(sum (psi-mu)psibar^T, sum (psi-mu)(psi-mu)^T)`` for mode ``k``."""
        if mu is None:
            return self.Sab[k], self.Saa[k]
        mu = np.asarray(mu, dtype=float)
        Sab = self.Sab[k] - np.outer(mu, self.sb[k])
        Saa = (self.Saa[k] - np.outer(mu, self.sa[k]) - np.outer(self.sa[k], mu)
               + self.n[k] * np.outer(mu, mu))
        return Sab, symmetrize(Saa)

    def residual_scatter(self, k: int, A, mu=None) -> np.ndarray:
        """``sum_t (psi_t - A psibar_t - mu)(...)^T`` over the steps of mode ``k``."""
        Sab, Saa = self.shifted(k, mu)
        ASab = A @ Sab.T
        return symmetrize(Saa - ASab - ASab.T + A @ self.Sbb[k] @ A.T)

    def residual_sum(self, k: int, A) -> np.ndarray:
        return self.sa[k] - A @ self.sb[k]


@dataclass(frozen=True)
class ModeDynamics:
    A: np.ndarray
    Sigma: np.ndarray
    mu: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        Sigma = symmetrize(np.atleast_2d(np.asarray(self.Sigma, dtype=float)))
        if Sigma.shape != (A.shape[0], A.shape[0]):
            raise ParameterError(f"Sigma shape {Sigma.shape} does not match A {A.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Sigma", Sigma)
        if self.mu is not None:
            object.__setattr__(self, "mu", np.asarray(self.mu, dtype=float).reshape(A.shape[0]))

    @property
    def mean_offset(self) -> np.ndarray:
        return np.zeros(self.A.shape[0]) if self.mu is None else self.mu


# ---------------------------------------------------------------------------
# matrix-normal inverse-Wishart

@dataclass(frozen=True)
class MniwHyper:
    M: np.ndarray
    K: np.ndarray
    n0: float
    S0: np.ndarray

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        if K.shape != (M.shape[1], M.shape[1]):
            raise ParameterError(f"K shape {K.shape} does not match M {M.shape}")
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "K", K)
        iw = InverseWishartParams(self.n0, self.S0)
        object.__setattr__(self, "S0", iw.scale)
        safe_cholesky(K, "MNIW K")


@dataclass(frozen=True)
class MniwStats:
    S_bb: np.ndarray
    S_ab: np.ndarray
    S_aa: np.ndarray
    n: int


def mniw_sufficient_stats(reg_or_stats, k: int, hyper: MniwHyper, mu=None) -> MniwStats:
    """Prior-augmented statistics ``(S_bb, S_ab, S_aa, n_k)`` for mode ``k``.

    Accepts a :class:`PseudoObsRegression` or precomputed :class:`ModeStats`.
    A process mean ``mu`` is subtracted from ``psi`` when given.
    """
    stats = _as_stats(reg_or_stats, k)
    if stats.Sbb.shape[1:] != hyper.K.shape or stats.Sab.shape[1:] != hyper.M.shape:
        raise ParameterError("regression dimensions do not match the MNIW hyperparameters")
    Sab, Saa = stats.shifted(k, mu)
    MK = hyper.M @ hyper.K
    return MniwStats(S_bb=symmetrize(stats.Sbb[k] + hyper.K),
                     S_ab=Sab + MK,
                     S_aa=symmetrize(Saa + MK @ hyper.M.T),
                     n=int(stats.n[k]))


def _as_stats(reg_or_stats, k):
    if isinstance(reg_or_stats, ModeStats):
        return reg_or_stats
    L = max(int(reg_or_stats.z.max(initial=-1)) + 1, k + 1)
    return ModeStats.from_regression(reg_or_stats, L)


def mniw_posterior_mean(stats: MniwStats) -> np.ndarray:
    Lb = safe_cholesky(stats.S_bb, "S_bb")
    return linalg.cho_solve((Lb, True), stats.S_ab.T, check_finite=False).T


def sample_mniw_posterior(stats: MniwStats, hyper: MniwHyper, rng, mu=None) -> ModeDynamics:
    """``Sigma ~ IW(n_k + n0, S_a|b + S0)`` then ``A | Sigma ~ MN(S_ab S_bb^-1, S_bb^-1, Sigma)``."""
    Lb = safe_cholesky(stats.S_bb, "S_bb")
    Mpost = linalg.cho_solve((Lb, True), stats.S_ab.T, check_finite=False).T
    S_cond = symmetrize(stats.S_aa - Mpost @ stats.S_ab.T)
    Ls = safe_cholesky(S_cond + hyper.S0, "MNIW posterior scale")
    Sigma = sample_inverse_wishart_from_chol(stats.n + hyper.n0, Ls, rng)
    # rows of W solve Lb^T w = z and so have covariance S_bb^{-1}
    Z = rng.standard_normal(Mpost.shape)
    W = linalg.solve_triangular(Lb.T, Z.T, lower=False, check_finite=False).T
    A = Mpost + safe_cholesky(Sigma, "sampled Sigma") @ W
    return ModeDynamics(A, Sigma, mu)


def sample_mniw_prior(hyper: MniwHyper, rng, mu=None) -> ModeDynamics:
    stats = MniwStats(hyper.K, hyper.M @ hyper.K, hyper.M @ hyper.K @ hyper.M.T, 0)
    return sample_mniw_posterior(stats, hyper, rng, mu)


# ---------------------------------------------------------------------------
# Gaussian prior on vec(A): shared by ARD and N-IW-N

def gaussian_A_information(stats: ModeStats, k: int, Sigma, mu=None):
    """Likelihood information ``(theta, Lambda)`` of ``vec(A)`` from mode ``k``.

    With column-stacking ``vec``, ``sum_t Psi_t^T Sigma^-1 Psi_t`` equals
    ``kron(sum psibar psibar^T, Sigma^-1)`` and the information vector is
    ``vec(Sigma^-1 sum (psi - mu) psibar^T)``.
    """
    Sinv = chol_inverse(safe_cholesky(Sigma, f"Sigma of mode {k}"))
    Sab, _ = stats.shifted(k, mu)
    lam = np.kron(stats.Sbb[k], Sinv)
    theta = (Sinv @ Sab).flatten(order="F")
    return theta, lam


def sample_A_from_information(theta, lam, shape, rng) -> np.ndarray:
    v = sample_info_gaussian(theta, symmetrize(lam), rng, "posterior precision of vec(A)")
    return v.reshape(shape, order="F")


def gaussian_A_posterior(stats: ModeStats, k, Sigma, prior_mean, prior_precision, mu=None):
    theta, lam = gaussian_A_information(stats, k, Sigma, mu)
    P = np.asarray(prior_precision, dtype=float)
    if P.ndim == 1:
        P = np.diag(P)
    return theta + P @ np.asarray(prior_mean, dtype=float), lam + P


# ---------------------------------------------------------------------------
# automatic relevance determination

@dataclass(frozen=True)
class ArdState:
    """Per-group precisions for one mode.

    ``group_index[i, j]`` names the group of entry ``A[i, j]``; ``a`` and ``b``
    are per-group Gamma shape and rate.
    """

    alphas: np.ndarray
    a: np.ndarray
    b: np.ndarray
    group_index: np.ndarray

    def __post_init__(self):
        gi = np.asarray(self.group_index, dtype=np.int64)
        alphas = np.asarray(self.alphas, dtype=float).ravel()
        G = alphas.size
        if gi.min() < 0 or gi.max() >= G or np.unique(gi).size != G:
            raise ParameterError("group_index must cover every group exactly")
        if np.any(~(alphas > 0)):
            raise ParameterError("ARD precisions must be positive")
        a = np.broadcast_to(np.asarray(self.a, dtype=float), (G,)).copy()
        b = np.broadcast_to(np.asarray(self.b, dtype=float), (G,)).copy()
        object.__setattr__(self, "group_index", gi)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_index.ravel(), minlength=self.alphas.size)

    def precision_vector(self) -> np.ndarray:
        """Diagonal of the prior precision of ``vec(A)`` (column-stacked)."""
        return self.alphas[self.group_index.flatten(order="F")]

    def with_alphas(self, alphas) -> "ArdState":
        return ArdState(alphas, self.a, self.b, self.group_index)


def column_groups(n: int) -> np.ndarray:
    """Group map for a state-space A: each column is a group."""
    return np.tile(np.arange(n), (n, 1))


def lag_block_groups(d: int, r: int) -> np.ndarray:
    """Group map for a VAR(r) A = [A_1 ... A_r]: each d x d lag block is a group."""
    return np.tile(np.repeat(np.arange(r), d), (d, 1))


def default_ard_state(group_index, rng=None) -> ArdState:
    """Hyperparameters ``a = |S_l|``, ``b = a/1000`` (prior mean 1000).

    Precisions are set to the prior mean, or drawn from the prior when ``rng`` is given.
    """
    gi = np.asarray(group_index, dtype=np.int64)
    sizes = np.bincount(gi.ravel()).astype(float)
    a, b = sizes, sizes / 1000.0
    alphas = a / b if rng is None else sample_gamma(a, b, rng)
    return ArdState(np.maximum(alphas, 1e-300), a, b, gi)


def ard_posterior_information(stats: ModeStats, k, Sigma, ard: ArdState, mu=None):
    theta, lam = gaussian_A_information(stats, k, Sigma, mu)
    lam = lam + np.diag(ard.precision_vector())
    return theta, lam


def sample_ard_dynamic_matrix(reg_or_stats, k: int, Sigma, ard: ArdState, mu, rng) -> np.ndarray:
    """``vec(A) ~ N^-1(sum Psi^T Sigma^-1 psi, Sigma_0^-1 + sum Psi^T Sigma^-1 Psi)``."""
    stats = _as_stats(reg_or_stats, k)
    theta, lam = ard_posterior_information(stats, k, Sigma, ard, mu)
    return sample_A_from_information(theta, lam, ard.group_index.shape, rng)


def sample_ard_precisions(A, ard: ArdState, rng) -> ArdState:
    """``alpha_l ~ Gamma(a + |S_l|/2, b + sum_{S_l} a_ij^2 / 2)``."""
    A = np.asarray(A, dtype=float)
    sq = np.bincount(ard.group_index.ravel(), weights=(A * A).ravel(), minlength=ard.alphas.size)
    alphas = sample_gamma(ard.a + 0.5 * ard.group_sizes, ard.b + 0.5 * sq, rng)
    return ard.with_alphas(np.maximum(alphas, 1e-300))


def sample_sigma_given_A(reg_or_stats, k: int, A, mu, iw: InverseWishartParams, rng) -> np.ndarray:
    """``Sigma ~ IW(n_k + n0, sum resid resid^T + S0)`` with residuals ``psi - A psibar - mu``."""
    stats = _as_stats(reg_or_stats, k)
    S = stats.residual_scatter(k, np.asarray(A, dtype=float), mu)
    return sample_inverse_wishart(InverseWishartParams(stats.n[k] + iw.dof, S + iw.scale), rng)


# ---------------------------------------------------------------------------
# independent normal / inverse-Wishart / normal priors

@dataclass(frozen=True)
class NiwnHyper:
    """``vec(A) ~ N(A_mean, A_cov)``, ``Sigma ~ IW(n0, S0)``, ``mu ~ N(mu_mean, mu_cov)``.

    ``mu_mean``/``mu_cov`` may be None for models without a process mean.
    """

    A_mean: np.ndarray
    A_cov: np.ndarray
    n0: float
    S0: np.ndarray
    mu_mean: np.ndarray | None = None
    mu_cov: np.ndarray | None = None
    A_precision: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        A_cov = np.atleast_2d(np.asarray(self.A_cov, dtype=float))
        object.__setattr__(self, "A_mean", np.asarray(self.A_mean, dtype=float).ravel())
        object.__setattr__(self, "A_cov", A_cov)
        if A_cov.shape != (self.A_mean.size, self.A_mean.size):
            raise ParameterError("A_cov shape does not match A_mean")
        object.__setattr__(self, "A_precision", chol_inverse(safe_cholesky(A_cov, "A prior covariance")))
        iw = InverseWishartParams(self.n0, self.S0)
        object.__setattr__(self, "S0", iw.scale)
        if (self.mu_mean is None) != (self.mu_cov is None):
            raise ParameterError("mu_mean and mu_cov must be given together")
        if self.mu_mean is not None:
            object.__setattr__(self, "mu_mean", np.asarray(self.mu_mean, dtype=float).ravel())
            object.__setattr__(self, "mu_cov", np.atleast_2d(np.asarray(self.mu_cov, dtype=float)))
            safe_cholesky(self.mu_cov, "mu prior covariance")

    @property
    def iw(self) -> InverseWishartParams:
        return InverseWishartParams(self.n0, self.S0)

    @property
    def has_mean(self) -> bool:
        return self.mu_mean is not None


def sample_A_niwn(reg_or_stats, k, Sigma, mu, hyper: NiwnHyper, shape, rng) -> np.ndarray:
    stats = _as_stats(reg_or_stats, k)
    theta, lam = gaussian_A_posterior(stats, k, Sigma, hyper.A_mean, hyper.A_precision, mu)
    return sample_A_from_information(theta, lam, shape, rng)


def sample_shared_A_niwn(stats: ModeStats, dynamics, hyper: NiwnHyper, shape, rng) -> np.ndarray:
    """Shared ``A`` pooled over modes, each contributing with its own ``Sigma_k`` and ``mu_k``.

    Contributions are accumulated per mode in information form, so no
    ``T x dim`` design matrix is ever formed.
    """
    theta = hyper.A_precision @ hyper.A_mean
    lam = hyper.A_precision.copy()
    for k, dyn in enumerate(dynamics):
        if stats.n[k] == 0:
            continue
        th, la = gaussian_A_information(stats, k, dyn.Sigma, dyn.mu)
        theta = theta + th
        lam = lam + la
    return sample_A_from_information(theta, lam, shape, rng)


def sample_process_mean(reg_or_stats, k: int, A, Sigma, mu_mean, mu_cov, rng) -> np.ndarray:
    """``mu ~ N^-1(Sigma0^-1 mu0 + Sigma^-1 sum(psi - A psibar), Sigma0^-1 + n_k Sigma^-1)``."""
    stats = _as_stats(reg_or_stats, k)
    P0 = chol_inverse(safe_cholesky(mu_cov, "mu prior covariance"))
    Sinv = chol_inverse(safe_cholesky(Sigma, f"Sigma of mode {k}"))
    theta = P0 @ np.asarray(mu_mean, dtype=float) + Sinv @ stats.residual_sum(k, np.asarray(A))
    lam = P0 + stats.n[k] * Sinv
    return sample_info_gaussian(theta, lam, rng, "process-mean posterior precision")


# ---------------------------------------------------------------------------
# measurement noise

def sample_measurement_noise(y, x, C, iw: InverseWishartParams, rng) -> np.ndarray:
    """``R ~ IW(T + r0, sum (y - Cx)(y - Cx)^T + R0)``; ``x`` excludes ``x_0``."""
    resid = np.atleast_2d(y) - np.atleast_2d(x) @ np.asarray(C).T
    S = resid.T @ resid
    return sample_inverse_wishart(InverseWishartParams(resid.shape[0] + iw.dof, S + iw.scale), rng)


@dataclass(frozen=True)
class MixtureNoisePrior:
    """Truncated DP mixture of zero-mean Gaussians: ``omega ~ GEM(concentration)``, ``R_l ~ IW``."""

    n_components: int
    concentration: float
    iw: InverseWishartParams

    def __post_init__(self):
        if self.n_components < 1 or self.concentration <= 0:
            raise ParameterError("mixture needs >= 1 component and positive concentration")


@dataclass(frozen=True)
class MixtureNoiseState:
    weights: np.ndarray   # (J,)
    covs: np.ndarray      # (J, d, d)
    labels: np.ndarray    # (T,)

    def per_step_covariance(self) -> np.ndarray:
        return self.covs[self.labels]


def sample_mixture_prior(prior: MixtureNoisePrior, T: int, rng) -> MixtureNoiseState:
    from .hdp_prior import stick_breaking
    J = prior.n_components
    w = stick_breaking(prior.concentration, J, rng)
    covs = np.stack([sample_inverse_wishart(prior.iw, rng) for _ in range(J)])
    labels = _sample_labels_from_log(np.broadcast_to(np.log(np.maximum(w, 1e-300)), (T, J)), rng)
    return MixtureNoiseState(w, covs, labels)


def _sample_labels_from_log(logp, rng):
    g = -np.log(-np.log(rng.random(logp.shape)))
    return np.argmax(logp + g, axis=1)


def mixture_log_likelihood_table(resid, weights, covs) -> np.ndarray:
    from .distributions import gaussian_logpdf_rows
    J = weights.size
    out = np.empty((resid.shape[0], J))
    for j in range(J):
        out[:, j] = (np.log(max(weights[j], 1e-300))
                     + gaussian_logpdf_rows(resid, safe_cholesky(covs[j], "mixture covariance")))
    return out


def sample_mixture_measurement_noise(resid, state: MixtureNoiseState, prior: MixtureNoisePrior,
                                     rng) -> MixtureNoiseState:
    """Labels given weights and covariances, then covariances and weights given labels."""
    resid = np.atleast_2d(resid)
    J = prior.n_components
    labels = _sample_labels_from_log(mixture_log_likelihood_table(resid, state.weights, state.covs), rng)
    counts = np.bincount(labels, minlength=J)
    covs = np.empty_like(state.covs)
    for j in range(J):
        rj = resid[labels == j]
        covs[j] = sample_inverse_wishart(
            InverseWishartParams(prior.iw.dof + rj.shape[0], prior.iw.scale + rj.T @ rj), rng)
    tail = np.concatenate((np.cumsum(counts[::-1])[::-1][1:], [0]))
    v = rng.beta(1.0 + counts, prior.concentration + tail)
    v[-1] = 1.0
    weights = v * np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    return MixtureNoiseState(weights / weights.sum(), covs, labels)


# ---------------------------------------------------------------------------
# hyperparameters set from data

@dataclass(frozen=True)
class DataPriors:
    """Prior hyperparameters derived from an observation sequence."""

    mniw: MniwHyper | None = None
    niwn: NiwnHyper | None = None
    ard_groups: np.ndarray | None = None
    measurement: InverseWishartParams | None = None
    mixture: MixtureNoisePrior | None = None
    sigma_bar: np.ndarray | None = None


def empirical_covariance(y_seqs) -> np.ndarray:
    """``(1/T) sum (y_t - ybar)(y_t - ybar)^T`` pooled over sequences."""
    Y = np.vstack([np.atleast_2d(y) for y in y_seqs])
    if Y.shape[0] < 2:
        raise ParameterError("at least two observations are needed to set priors from data")
    D = Y - Y.mean(axis=0)
    return symmetrize(D.T @ D / Y.shape[0])


def _embed(S, n):
    """Block-diagonal embedding of a d x d matrix into n x n, padding with its mean variance."""
    d = S.shape[0]
    out = np.eye(n) * float(np.trace(S) / d)
    out[:d, :d] = S
    return out


def set_hyperparameters_from_data(y_seqs, family: str, order: int, prior: str = "mniw",
                                  preset: str = "default", *, process_fraction=None,
                                  measurement_fraction=0.075, mixture_components=10,
                                  mixture_concentration=1.0) -> DataPriors:
    """Data-dependent prior settings.

    ``family`` is ``"ar"`` (``order`` = number of lags r) or ``"slds"``
    (``order`` = state dimension n). ``preset`` selects one of

    * ``"default"``: ``M = 0``, ``K = I_m``, ``n0 = m + 2``, ``S0 = 0.75 Sigma_bar``
      for AR and ``0.675 Sigma_bar`` for state-space models, ``R`` prior with
      ``r0 = d + 2`` and ``R0 = 0.075 Sigma_bar``; a process mean, when
      used, gets the prior ``N(0, Sigma_bar)``;
    * ``"supervised"``: ``Sigma_bar`` from first differences, ``n0 = 10`` and a
      process-mean prior ``N(0, 0.75 S0)``;
    * ``"mssv"``: scalar model with ``N(0, 0.75 Sigma_bar)`` priors on ``A`` and
      ``mu``, ``Sigma ~ IW`` with 3 dof and mean ``0.75 Sigma_bar``, and a
      10-component measurement-noise mixture with component mean ``5 pi^2``.
    """
    y_seqs = [np.atleast_2d(np.asarray(y, dtype=float)) for y in y_seqs]
    y_seqs = [y.T if y.shape[0] == 1 and y.shape[1] > 1 else y for y in y_seqs]
    d = y_seqs[0].shape[1]
    if sum(y.shape[0] for y in y_seqs) < 2:
        raise ParameterError("at least two observations are needed to set priors from data")
    if family == "ar":
        l, m = d, d * order
    elif family == "slds":
        if order < d:
            raise ParameterError(f"state dimension {order} smaller than observation dimension {d}")
        l = m = order
    else:
        raise ParameterError(f"unknown model family {family!r}")

    if preset == "supervised":
        sigma_bar = empirical_covariance([np.diff(y, axis=0) for y in y_seqs])
    else:
        sigma_bar = empirical_covariance(y_seqs)

    if family == "ar":
        frac = 0.75 if process_fraction is None else process_fraction
        S0 = frac * sigma_bar
        measurement = None
    else:
        frac = 0.675 if process_fraction is None else process_fraction
        S0 = _embed(frac * sigma_bar, l)
        measurement = InverseWishartParams(d + 2, measurement_fraction * sigma_bar)

    if preset == "default":
        n0 = m + 2
        mu_mean, mu_cov = np.zeros(l), _embed(sigma_bar, l)
    elif preset == "supervised":
        S0 = _embed(0.75 * sigma_bar, l)
        n0 = 10
        mu_mean, mu_cov = np.zeros(l), 0.75 * S0
    elif preset == "mssv":
        if l != 1:
            raise ParameterError("the mssv preset is defined for scalar models")
        mean = 0.75 * sigma_bar
        n0 = 3.0
        S0 = mean * (n0 - l - 1)
        mu_mean, mu_cov = np.zeros(1), mean
        niwn = NiwnHyper(np.zeros(l * m), np.eye(l * m) * float(mean[0, 0]), n0, S0, mu_mean, mu_cov)
        comp = InverseWishartParams(3.0, np.eye(d) * 5.0 * np.pi ** 2 * (3.0 - d - 1))
        mixture = MixtureNoisePrior(mixture_components, mixture_concentration, comp)
        return DataPriors(niwn=niwn, measurement=measurement, mixture=mixture, sigma_bar=sigma_bar)
    else:
        raise ParameterError(f"unknown prior preset {preset!r}")

    mniw = MniwHyper(np.zeros((l, m)), np.eye(m), n0, S0)
    niwn = NiwnHyper(np.zeros(l * m), np.eye(l * m), n0, S0, mu_mean, mu_cov)
    groups = column_groups(l) if family == "slds" else lag_block_groups(d, order)
    return DataPriors(mniw=mniw, niwn=niwn, ard_groups=groups, measurement=measurement,
                      sigma_bar=sigma_bar)


# ---------------------------------------------------------------------------
# sparsity-compatibility predicate

def zero_columns(A, tol: float = 0.0) -> np.ndarray:
    return np.all(np.abs(np.asarray(A)) <= tol, axis=0)


def observed_components_relevant_to_all_modes(A_list, C, tol: float = 0.0) -> bool:
    """True when every state column that is zero in some mode's A is unobserved (zero in C)."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    unused = np.zeros(C.shape[1], dtype=bool)
    for A in A_list:
        unused |= zero_columns(A, tol)
    return bool(np.all(np.abs(C[:, unused]) <= tol))


@dataclass(frozen=True)
class DynamicsStack:
    """Per-mode parameters stacked along a leading mode axis for vectorized kernels."""

    A: np.ndarray        # (L, l, m)
    Sigma: np.ndarray    # (L, l, l)
    mu: np.ndarray       # (L, l)
    Sigma_chol: np.ndarray
    Sigma_inv: np.ndarray

    @classmethod
    def from_modes(cls, dynamics) -> "DynamicsStack":
        A = np.stack([d.A for d in dynamics])
        Sigma = np.stack([d.Sigma for d in dynamics])
        mu = np.stack([d.mean_offset for d in dynamics])
        try:
            chol = np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            chol = np.stack([safe_cholesky(S, f"Sigma of mode {k}") for k, S in enumerate(Sigma)])
        Linv = np.linalg.inv(chol)
        inv = np.swapaxes(Linv, 1, 2) @ Linv
        return cls(A, Sigma, mu, chol, inv)

    @property
    def L(self) -> int:
        return self.A.shape[0]
