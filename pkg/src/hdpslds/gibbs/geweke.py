"""Joint-distribution test of the Gibbs kernel for autoregressive models.

Marginal-conditional draws sample every unknown and the data from the prior.
Successive-conditional draws alternate one Gibbs sweep with a fresh draw of
the data given the current unknowns. A correct kernel leaves the joint
distribution invariant, so summary statistics must agree in distribution.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics_priors import DataPriors, DynamicsStack, MniwHyper
from ..errors import ParameterError
from ..hdp_prior import HdpHyper, HdpPriors
from .config import ModelConfig, Schedule
from .sampler import ChainState, GibbsSampler, SequenceData

STATISTICS = ("occupancy_entropy", "lag1_autocov", "second_moment", "alpha_plus_kappa",
              "trace_sigma_1", "max_beta")


def geweke_config(L: int = 3, order: int = 1, d: int = 1, fixed_hyper: bool = False,
                  skip_beta_update: bool = False) -> ModelConfig:
    """Small AR model with proper, moderately informative priors.

    The inverse-Wishart has ``n0 = 10`` degrees of freedom so that the
    variance of ``tr(Sigma)`` is finite, and the hyperpriors are tight
    enough that every compared statistic has finite variance.
    """
    m = d * order
    mniw = MniwHyper(M=np.zeros((d, m)), K=4.0 * np.eye(m), n0=10.0, S0=0.5 * np.eye(d))
    hyper = HdpHyper.from_rho(6.0, 0.5, 2.0) if fixed_hyper else None
    return ModelConfig(
        family="ar", order=order, prior="mniw", L=L,
        hdp_priors=HdpPriors(a_alpha_kappa=6.0, b_alpha_kappa=1.0, a_gamma=4.0, b_gamma=2.0,
                             c_rho=2.0, d_rho=2.0),
        initial_hyper=hyper, resample_hyper=not fixed_hyper,
        priors=DataPriors(mniw=mniw), schedule=Schedule(n_iters=1, sequential_period=0),
        skip_beta_update=skip_beta_update)


def simulate_ar_observations(state: ChainState, order: int, T: int, d: int, rng) -> np.ndarray:
    """Draw ``y`` given modes and dynamics; ``order`` leading rows of zeros serve as context."""
    stack = DynamicsStack.from_modes(state.dyn)
    z = state.z[0]
    y = np.zeros((T + order, d))
    eps = rng.standard_normal((T, d))
    for t in range(T):
        k = z[t]
        lags = np.concatenate([y[order + t - i - 1] for i in range(order)])
        y[order + t] = stack.A[k] @ lags + stack.mu[k] + stack.Sigma_chol[k] @ eps[t]
    return y


def joint_statistics(state: ChainState, y: np.ndarray, order: int, L: int) -> np.ndarray:
    """Values of :data:`STATISTICS` for one joint draw."""
    z = state.z[0]
    p = np.bincount(z, minlength=L) / z.size
    p = p[p > 0]
    obs = y[order:]
    h = state.hyper
    return np.array([
        -float(np.sum(p * np.log(p))),
        float(np.sum(obs[1:] * obs[:-1]) / (obs.shape[0] - 1)),
        float(np.sum(obs * obs) / obs.shape[0]),
        h.alpha + h.kappa,
        float(np.trace(state.dyn[0].Sigma)),
        float(state.trans.beta.max()),
    ])


def batch_means_se(x: np.ndarray, n_batches: int | None = None) -> np.ndarray:
    """Standard error of the mean of each column of a correlated series by batch means."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N = x.shape[0]
    b = n_batches or max(int(np.sqrt(N)), 2)
    size = N // b
    if size < 1:
        raise ParameterError("too few samples for batch means")
    means = x[:b * size].reshape(b, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(b)


@dataclass(frozen=True)
class GewekeResult:
    names: tuple
    forward_mean: np.ndarray
    gibbs_mean: np.ndarray
    forward_se: np.ndarray
    gibbs_se: np.ndarray
    z: np.ndarray
    n_forward: int
    n_gibbs: int

    @property
    def max_abs_z(self) -> float:
        return float(np.max(np.abs(self.z)))

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.z.tolist()))


def _z_scores(fm, gm, fse, gse):
    se = np.sqrt(fse ** 2 + gse ** 2)
    diff = fm - gm
    out = np.zeros_like(diff)
    nz = se > 0
    out[nz] = diff[nz] / se[nz]
    # identical point masses agree exactly; distinct ones disagree infinitely
    out[~nz & (np.abs(diff) > 1e-12)] = np.inf
    return out


def forward_draws(sampler: GibbsSampler, T: int, n: int, rng) -> np.ndarray:
    cfg = sampler.config
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        state = sampler.initial_state(rng)
        y = simulate_ar_observations(state, cfg.order, T, sampler.d, rng)
        out[i] = joint_statistics(state, y, cfg.order, sampler.L)
    return out


def successive_conditional_draws(sampler: GibbsSampler, T: int, n: int, rng,
                                 callback=None) -> np.ndarray:
    """Alternate Gibbs sweeps with fresh data; the chain starts from an exact prior draw."""
    cfg = sampler.config
    state = sampler.initial_state(rng)
    y = simulate_ar_observations(state, cfg.order, T, sampler.d, rng)
    out = np.empty((n, len(STATISTICS)))
    for i in range(n):
        sampler.replace_observations([y])
        state = sampler.sweep(state, rng, i + 1)
        y = simulate_ar_observations(state, cfg.order, T, sampler.d, rng)
        out[i] = joint_statistics(state, y, cfg.order, sampler.L)
        if callback is not None:
            callback(i)
    return out


def geweke_joint_test(config: ModelConfig, T_small: int, n_sweeps: int, rng,
                      n_forward: int | None = None, forward=None) -> GewekeResult:
    """Standardized differences between prior-predictive and successive-conditional means.

    ``forward`` may hold previously computed prior-predictive statistics (one
    row per draw, columns as in :data:`STATISTICS`), e.g. to test several
    kernels against the same reference sample.
    """
    if config.family != "ar":
        raise ParameterError("the joint-distribution test is implemented for AR models")
    if config.priors is None:
        raise ParameterError("the joint-distribution test needs explicit priors")
    n_forward = n_forward or n_sweeps
    d = config.priors.mniw.S0.shape[0]
    placeholder = SequenceData(np.zeros((T_small + config.order, d)))
    sampler = GibbsSampler(config, placeholder)
    fwd = forward_draws(sampler, T_small, n_forward, rng) if forward is None else np.asarray(forward)
    n_forward = fwd.shape[0]
    gib = successive_conditional_draws(sampler, T_small, n_sweeps, rng)
    fm, gm = fwd.mean(axis=0), gib.mean(axis=0)
    fse = fwd.std(axis=0, ddof=1) / np.sqrt(n_forward)
    gse = batch_means_se(gib)
    return GewekeResult(STATISTICS, fm, gm, fse, gse, _z_scores(fm, gm, fse, gse),
                        n_forward, n_sweeps)
