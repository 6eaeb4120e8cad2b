"""Sticky HDP-HMM prior under the weak-limit (finite L) truncation.

The global weights ``beta`` have a ``Dirichlet(gamma/L, ..., gamma/L)`` prior,
row ``j`` of the transition matrix is ``Dirichlet(alpha*beta + kappa*e_j)`` and
the first mode of each sequence is drawn from ``beta``. Posterior updates use
the usual auxiliary table counts ``m``, override counts ``w`` and the derived
counts ``mbar = m - diag(w)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import sample_beta, sample_dirichlet, sample_gamma
from .errors import ParameterError


@dataclass(frozen=True)
class HdpHyper:
    alpha: float
    gamma: float
    kappa: float = 0.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.gamma > 0 and self.kappa >= 0):
            raise ParameterError(
                f"need alpha > 0, gamma > 0, kappa >= 0; got {self.alpha}, {self.gamma}, {self.kappa}")

    @property
    def rho(self) -> float:
        return self.kappa / (self.alpha + self.kappa)

    @classmethod
    def from_rho(cls, alpha_plus_kappa: float, rho: float, gamma: float) -> "HdpHyper":
        kappa = rho * alpha_plus_kappa
        return cls(alpha=alpha_plus_kappa - kappa, gamma=gamma, kappa=kappa)


@dataclass(frozen=True)
class HdpPriors:
    """Gamma(shape, rate) priors on alpha+kappa and gamma, Beta(c, d) on rho."""

    a_alpha_kappa: float = 1.0
    b_alpha_kappa: float = 0.01
    a_gamma: float = 1.0
    b_gamma: float = 0.01
    c_rho: float = 10.0
    d_rho: float = 1.0

    def __post_init__(self):
        if min(self.a_alpha_kappa, self.b_alpha_kappa, self.a_gamma, self.b_gamma,
               self.c_rho, self.d_rho) <= 0:
            raise ParameterError("hyperprior parameters must be positive")


@dataclass(frozen=True)
class TransitionSet:
    beta: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        L = beta.size
        if beta.ndim != 1 or pi.shape != (L, L):
            raise ParameterError(f"beta shape {beta.shape} and pi shape {pi.shape} inconsistent")
        if np.any(beta < 0) or np.any(pi < 0):
            raise ParameterError("transition weights must be nonnegative")
        if abs(beta.sum() - 1.0) > 1e-10 or np.any(np.abs(pi.sum(axis=1) - 1.0) > 1e-10):
            raise ParameterError("beta and rows of pi must sum to one")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "pi", pi)

    @property
    def L(self) -> int:
        return self.beta.size


@dataclass(frozen=True)
class AuxCounts:
    """Transition counts and the auxiliary variables of the sticky augmentation.

    ``init`` counts how often each mode starts a sequence; since the initial
    mode is drawn from ``beta`` these are direct top-level counts.
    """

    n: np.ndarray
    m: np.ndarray
    w: np.ndarray
    mbar: np.ndarray
    init: np.ndarray

    @property
    def top_counts(self) -> np.ndarray:
        return self.mbar.sum(axis=0) + self.init


def stick_breaking(gamma: float, L: int, rng: np.random.Generator) -> np.ndarray:
    """Truncated GEM(gamma) weights; the final weight takes the remaining stick."""
    if L < 1:
        raise ParameterError("truncation level must be at least 1")
    if gamma <= 0:
        raise ParameterError("stick-breaking concentration must be positive")
    nu = rng.beta(1.0, gamma, size=L)
    nu[-1] = 1.0
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - nu[:-1])))
    w = nu * remaining
    return w / w.sum()


def transition_counts(z_seqs, L: int) -> tuple[np.ndarray, np.ndarray]:
    """Transition count matrix and initial-mode counts for 0-based sequences."""
    n = np.zeros((L, L), dtype=np.int64)
    init = np.zeros(L, dtype=np.int64)
    for z in z_seqs:
        z = np.asarray(z, dtype=np.int64)
        if z.size == 0:
            continue
        init[z[0]] += 1
        np.add.at(n, (z[:-1], z[1:]), 1)
    return n, init


def sample_transition_row(beta, hyper: HdpHyper, counts_row, j: int, rng) -> np.ndarray:
    conc = hyper.alpha * np.asarray(beta, dtype=float) + np.asarray(counts_row, dtype=float)
    conc[j] += hyper.kappa
    return sample_dirichlet(_floor(conc), rng)


def sample_transition_matrix(beta, hyper: HdpHyper, n, rng) -> np.ndarray:
    """All rows at once: row j ~ Dirichlet(alpha*beta + kappa*e_j + n_j)."""
    L = len(beta)
    conc = hyper.alpha * np.broadcast_to(beta, (L, L)) + n + hyper.kappa * np.eye(L)
    return sample_dirichlet(_floor(conc), rng)


def _floor(conc):
    # beta entries can underflow to exactly 0; keep the Dirichlet well defined
    return np.maximum(conc, 1e-300)


def crf_table_counts(customers, concentration, rng) -> np.ndarray:
    """Number of occupied tables in a Chinese restaurant process.

    Customer ``i`` (1-based) opens a new table with probability
    ``c / (c + i - 1)``; computed for all cells at once.
    """
    customers = np.asarray(customers, dtype=np.int64)
    concentration = np.broadcast_to(np.asarray(concentration, dtype=float), customers.shape)
    flat_n = customers.ravel()
    flat_c = concentration.ravel()
    tables = np.zeros(flat_n.size, dtype=np.int64)
    total = int(flat_n.sum())
    if total == 0:
        return tables.reshape(customers.shape)
    cell = np.repeat(np.arange(flat_n.size), flat_n)
    starts = np.cumsum(flat_n) - flat_n
    i = np.arange(total) - np.repeat(starts, flat_n)  # 0-based position in cell
    c = flat_c[cell]
    new_table = rng.random(total) * (c + i) < c
    np.add.at(tables, cell, new_table.astype(np.int64))
    return tables.reshape(customers.shape)


def sample_aux_counts(n, beta, hyper: HdpHyper, rng, init=None) -> AuxCounts:
    n = np.asarray(n, dtype=np.int64)
    L = n.shape[0]
    beta = np.asarray(beta, dtype=float)
    conc = hyper.alpha * np.broadcast_to(beta, (L, L)) + hyper.kappa * np.eye(L)
    m = crf_table_counts(n, conc, rng)
    w = np.zeros(L, dtype=np.int64)
    if hyper.kappa > 0:
        rho = hyper.rho
        p = rho / (rho + beta * (1.0 - rho))
        w = rng.binomial(np.diag(m), p)
    mbar = m.copy()
    mbar[np.diag_indices(L)] -= w
    if init is None:
        init = np.zeros(L, dtype=np.int64)
    return AuxCounts(n=n, m=m, w=w, mbar=mbar, init=np.asarray(init, dtype=np.int64))


def update_beta(aux: AuxCounts, gamma: float, rng) -> np.ndarray:
    L = aux.n.shape[0]
    return sample_dirichlet(gamma / L + aux.top_counts, rng)


def _concentration_update(conc, a, b, customers_per_group, tables, rng):
    """Auxiliary-variable update of a DP concentration shared by several groups.

    Each group ``j`` with ``n_j`` customers and the given total table count
    contributes ``Gamma(conc)/Gamma(conc + n_j)``; resolved with
    ``r_j ~ Beta(conc + 1, n_j)`` and ``s_j ~ Bernoulli(n_j / (n_j + conc))``.
    """
    nj = np.asarray(customers_per_group, dtype=float)
    nj = nj[nj > 0]
    if nj.size == 0:
        return sample_gamma(a + tables, b, rng)
    r = rng.beta(conc + 1.0, nj)
    s = rng.random(nj.size) < nj / (nj + conc)
    log_r = np.log(np.maximum(r, 1e-300))
    return sample_gamma(a + tables - s.sum(), b - log_r.sum(), rng)


def sample_gamma_concentration(aux: AuxCounts, gamma: float, priors: HdpPriors, rng) -> float:
    """Exact update of gamma for the finite Dirichlet(gamma/L) top level, with beta integrated out."""
    L = aux.n.shape[0]
    top = aux.top_counts
    u = crf_table_counts(top, gamma / L, rng)
    return float(_concentration_update(gamma, priors.a_gamma, priors.b_gamma,
                                       [top.sum()], u.sum(), rng))


def resample_hyperparameters(aux: AuxCounts, hyper: HdpHyper, priors: HdpPriors, rng,
                             sticky: bool = True, update_gamma: bool = True) -> HdpHyper:
    """Resample gamma, alpha+kappa and rho given the auxiliary counts.

    None of these conditionals involve ``beta`` once the counts are fixed, so
    this may run either before or after :func:`update_beta`; gamma is updated
    with ``beta`` integrated out and must therefore precede the beta draw in a
    sweep when ``update_gamma`` is true.
    """
    gamma = hyper.gamma
    if update_gamma:
        gamma = sample_gamma_concentration(aux, gamma, priors, rng)
    row_totals = aux.n.sum(axis=1)
    m_total = int(aux.m.sum())
    ak = float(_concentration_update(hyper.alpha + hyper.kappa, priors.a_alpha_kappa,
                                     priors.b_alpha_kappa, row_totals, m_total, rng))
    if sticky:
        w_total = int(aux.w.sum())
        rho = float(sample_beta(priors.c_rho + w_total, priors.d_rho + m_total - w_total, rng))
        rho = min(rho, 1.0 - 1e-12)
    else:
        rho = 0.0
    ak = max(ak, 1e-300)
    gamma = max(gamma, 1e-300)
    return HdpHyper.from_rho(ak, rho, gamma)


def sample_hyper_prior(priors: HdpPriors, rng, sticky: bool = True) -> HdpHyper:
    ak = float(sample_gamma(priors.a_alpha_kappa, priors.b_alpha_kappa, rng))
    gamma = float(sample_gamma(priors.a_gamma, priors.b_gamma, rng))
    rho = float(sample_beta(priors.c_rho, priors.d_rho, rng)) if sticky else 0.0
    return HdpHyper.from_rho(max(ak, 1e-300), min(rho, 1.0 - 1e-12), max(gamma, 1e-300))


def sample_transitions_prior(hyper: HdpHyper, L: int, rng) -> TransitionSet:
    beta = sample_dirichlet(np.full(L, hyper.gamma / L), rng)
    pi = sample_transition_matrix(beta, hyper, np.zeros((L, L)), rng)
    return TransitionSet(beta, pi)


def sample_transitions_posterior(z_seqs, trans: TransitionSet, hyper: HdpHyper,
                                 priors: HdpPriors | None, rng, sticky: bool = True):
    """One pass of the global-weight/transition/hyperparameter block.

    Order: auxiliary counts, hyperparameters (gamma with beta integrated out),
    beta, transition rows. Passing ``priors=None`` keeps the hyperparameters fixed.
    Returns ``(TransitionSet, HdpHyper, AuxCounts)``.
    """
    L = trans.L
    n, init = transition_counts(z_seqs, L)
    aux = sample_aux_counts(n, trans.beta, hyper, rng, init=init)
    if priors is not None:
        hyper = resample_hyperparameters(aux, hyper, priors, rng, sticky=sticky)
    beta = update_beta(aux, hyper.gamma, rng)
    pi = sample_transition_matrix(beta, hyper, n, rng)
    return TransitionSet(beta, pi), hyper, aux
