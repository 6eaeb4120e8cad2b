"""Gibbs sampler for sticky HDP switching autoregressive and state-space models.

One sweep, for state-space models:

1. on scheduled iterations, resample ``z`` one step at a time with ``x``
   integrated out;
2. draw ``x_{0:T}`` jointly given ``z`` and use it as pseudo-observations;
3. block-sample ``z`` given the pseudo-observations;
4. update auxiliary counts, hyperparameters, ``beta`` and the transition rows;
5. update the dynamic parameters of every mode;
6. update the measurement noise.

Autoregressive models skip steps 1, 2 and 6 and use the observations
themselves as pseudo-observations.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .. import distributions as dist
from ..dynamics_priors import (ArdState, DynamicsStack, ModeDynamics, ModeStats,
                               MixtureNoiseState, PseudoObsRegression, default_ard_state,
                               lagged_design, mniw_sufficient_stats, sample_A_niwn,
                               sample_ard_dynamic_matrix, sample_ard_precisions,
                               sample_measurement_noise, sample_mixture_measurement_noise,
                               sample_mixture_prior, sample_mniw_posterior, sample_mniw_prior,
                               sample_process_mean, sample_shared_A_niwn, sample_sigma_given_A)
from ..errors import NumericalError, ParameterError
from ..hdp_prior import (HdpHyper, TransitionSet, resample_hyperparameters, sample_aux_counts,
                         sample_hyper_prior, sample_transition_matrix,
                         sample_transitions_prior, transition_counts, update_beta)
from ..mode_sampler import (block_sample_modes, mode_log_likelihoods,
                            sequential_sample_modes_marginalized)
from ..state_sampler import sample_states
from .config import ModelConfig

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# data and state

@dataclass(frozen=True)
class SequenceData:
    """One or more observation sequences.

    For autoregressive models the first ``r`` rows of each sequence are
    context and receive no mode label. ``supervision`` holds, per sequence,
    0-based labels for the labelled steps and ``-1`` elsewhere.
    """

    y: tuple
    supervision: tuple | None = None

    def __post_init__(self):
        ys = self.y
        if isinstance(ys, np.ndarray):
            ys = (ys,)
        seqs = []
        for y in ys:
            y = np.asarray(y, dtype=float)
            if y.ndim == 1:
                y = y[:, None]
            if y.ndim != 2 or not np.all(np.isfinite(y)):
                raise ParameterError("observations must be finite 2-D arrays")
            seqs.append(y)
        if not seqs or len({y.shape[1] for y in seqs}) != 1:
            raise ParameterError("all sequences need the same observation dimension")
        object.__setattr__(self, "y", tuple(seqs))
        if self.supervision is not None:
            sup = self.supervision
            if isinstance(sup, np.ndarray) and sup.ndim == 1:
                sup = (sup,)
            object.__setattr__(self, "supervision",
                               tuple(np.asarray(s, dtype=np.int64) for s in sup))

    @property
    def d(self) -> int:
        return self.y[0].shape[1]


@dataclass
class ChainState:
    z: list
    trans: TransitionSet
    dyn: list
    hyper: HdpHyper
    x: list | None = None
    R: np.ndarray | None = None
    mixture: MixtureNoiseState | None = None
    ard: list | None = None


@dataclass
class TraceRecord:
    iteration: int
    z: list
    active_modes: int
    log_joint: float
    hyper: dict
    beta: np.ndarray
    pi: np.ndarray
    A: np.ndarray
    Sigma: np.ndarray
    mu: np.ndarray | None = None
    R: np.ndarray | None = None
    ard_precisions: np.ndarray | None = None
    mixture_weights: np.ndarray | None = None
    mixture_covs: np.ndarray | None = None
    chain: int = 0
    extra: dict = field(default_factory=dict)


def active_mode_count(z_seqs, L: int, threshold: float = 0.01) -> int:
    z = np.concatenate([np.asarray(s) for s in z_seqs])
    occ = np.bincount(z, minlength=L) / max(z.size, 1)
    return int(np.sum(occ > threshold))


# ---------------------------------------------------------------------------
# sampler

class GibbsSampler:
    """Holds the model, data and precomputed quantities for one or more chains."""

    def __init__(self, config: ModelConfig, data: SequenceData):
        if not isinstance(data, SequenceData):
            data = SequenceData(data)
        self.data = data
        self.config = config.with_priors_from(data.y)
        cfg = self.config
        self.d = data.d
        self.L = cfg.L
        self.l = cfg.state_dim(self.d)
        self.m = cfg.regressor_dim(self.d)
        priors = cfg.priors
        if cfg.prior == "mniw" and priors.mniw is None:
            raise ParameterError("the chosen preset provides no MNIW hyperparameters")
        if cfg.prior == "ard" and priors.ard_groups is None:
            raise ParameterError("the chosen preset provides no ARD groups")
        if cfg.process_mean and (priors.niwn is None or not priors.niwn.has_mean):
            raise ParameterError("process mean requested but no prior on it is available")
        if cfg.fixed_A is not None and cfg.fixed_A.shape != (self.l, self.m):
            raise ParameterError(f"fixed_A must have shape {(self.l, self.m)}")
        if cfg.is_slds:
            if cfg.order < self.d:
                raise ParameterError("state dimension must be at least the observation dimension")
            self.C = cfg.observation_matrix(self.d)
            self.R_prior = cfg.measurement_prior or priors.measurement
            S0 = priors.niwn.S0 if priors.niwn is not None else priors.mniw.S0
            self.P0 = cfg.initial_state_scale * float(np.trace(S0) / self.l) * np.eye(self.l)
            self.T_seqs = [y.shape[0] for y in data.y]
        else:
            r = cfg.order
            for y in data.y:
                if y.shape[0] <= r:
                    raise ParameterError(f"sequence of length {y.shape[0]} too short for {r} lags")
            self.ar_design = [lagged_design(y, r) for y in data.y]
            self.T_seqs = [p[0].shape[0] for p in self.ar_design]
        self.supervision = data.supervision
        if self.supervision is not None:
            for s, T in zip(self.supervision, self.T_seqs):
                if s.shape != (T,) or s.max(initial=-1) >= self.L:
                    raise ParameterError("supervision labels do not match the sequences or L")

    def replace_observations(self, y_seqs) -> None:
        """Swap in new observation sequences of the same shapes (autoregressive models)."""
        if self.config.is_slds:
            raise ParameterError("observation replacement is only supported for AR models")
        data = SequenceData(tuple(y_seqs), self.supervision)
        design = [lagged_design(y, self.config.order) for y in data.y]
        if [p[0].shape[0] for p in design] != self.T_seqs:
            raise ParameterError("replacement sequences must keep their lengths")
        self.data = data
        self.ar_design = design

    # -- initialization ----------------------------------------------------

    def _sigma_iw(self):
        p = self.config.priors
        return p.niwn.iw if p.niwn is not None else dist.InverseWishartParams(p.mniw.n0, p.mniw.S0)

    def _mu_prior_draw(self, rng):
        niwn = self.config.priors.niwn
        return niwn.mu_mean + dist.safe_cholesky(niwn.mu_cov) @ rng.standard_normal(self.l)

    def _prior_mode(self, rng, ard: ArdState | None, shared_A=None) -> ModeDynamics:
        cfg = self.config
        mu = self._mu_prior_draw(rng) if cfg.process_mean else None
        if cfg.dynamics == "fixed":
            return ModeDynamics(cfg.fixed_A, dist.sample_inverse_wishart(self._sigma_iw(), rng), mu)
        if cfg.dynamics == "shared":
            return ModeDynamics(shared_A, dist.sample_inverse_wishart(self._sigma_iw(), rng), mu)
        if cfg.prior == "mniw":
            return sample_mniw_prior(cfg.priors.mniw, rng, mu)
        Sigma = dist.sample_inverse_wishart(self._sigma_iw(), rng)
        if cfg.prior == "ard":
            sd = 1.0 / np.sqrt(ard.precision_vector())
            A = (sd * rng.standard_normal(sd.size)).reshape((self.l, self.m), order="F")
        else:
            A = self._prior_A_niwn(rng)
        return ModeDynamics(A, Sigma, mu)

    def _prior_A_niwn(self, rng):
        niwn = self.config.priors.niwn
        v = niwn.A_mean + dist.safe_cholesky(niwn.A_cov) @ rng.standard_normal(niwn.A_mean.size)
        return v.reshape((self.l, self.m), order="F")

    def initial_state(self, rng) -> ChainState:
        """Draw every unknown from its prior, then simulate states given modes."""
        cfg = self.config
        L = self.L
        hyper = cfg.initial_hyper or sample_hyper_prior(cfg.hdp_priors, rng, cfg.sticky)
        trans = sample_transitions_prior(hyper, L, rng)
        ard = None
        if cfg.prior == "ard":
            ard = [default_ard_state(cfg.priors.ard_groups, rng) for _ in range(L)]
        shared_A = self._prior_A_niwn(rng) if cfg.dynamics == "shared" else None
        dyn = [self._prior_mode(rng, None if ard is None else ard[k], shared_A) for k in range(L)]
        z = []
        for i, T in enumerate(self.T_seqs):
            zi = self._simulate_modes(trans, T, rng)
            if self.supervision is not None:
                s = self.supervision[i]
                zi = np.where(s >= 0, s, zi)
            z.append(zi)
        state = ChainState(z=z, trans=trans, dyn=dyn, hyper=hyper, ard=ard)
        if cfg.is_slds:
            if cfg.measurement == "dp_mixture":
                state.mixture = sample_mixture_prior(cfg.priors.mixture, sum(self.T_seqs), rng)
            else:
                state.R = dist.sample_inverse_wishart(self.R_prior, rng)
            # a posterior draw given y stays finite even when prior dynamics are explosive
            stack = DynamicsStack.from_modes(dyn)
            state.x = [sample_states(y, zi, stack, self.C, R, self.P0, rng)
                       for y, zi, R in zip(self.data.y, z, self._measurement_cov(state))]
        return state

    @staticmethod
    def _simulate_modes(trans, T, rng):
        z = np.empty(T, dtype=np.int64)
        cb = np.cumsum(trans.beta)
        z[0] = min(np.searchsorted(cb, rng.random() * cb[-1], side="right"), trans.L - 1)
        cp = np.cumsum(trans.pi, axis=1)
        u = rng.random(T)
        for t in range(1, T):
            row = cp[z[t - 1]]
            z[t] = min(np.searchsorted(row, u[t] * row[-1], side="right"), trans.L - 1)
        return z

    # -- sweep ---------------------------------------------------------------

    def _measurement_cov(self, state: ChainState):
        if state.mixture is None:
            return [state.R] * len(self.T_seqs)
        per_t = state.mixture.per_step_covariance()
        return np.split(per_t, np.cumsum(self.T_seqs)[:-1])

    def _regression(self, state: ChainState):
        if self.config.is_slds:
            return [(x[1:], x[:-1]) for x in state.x]
        return self.ar_design

    def sweep(self, state: ChainState, rng, iteration: int = 1) -> ChainState:
        cfg = self.config
        state = replace(state)
        stack = DynamicsStack.from_modes(state.dyn)
        sup = self.supervision or [None] * len(self.T_seqs)

        if cfg.is_slds:
            Rs = self._measurement_cov(state)
            period = cfg.schedule.sequential_period
            if period and iteration % period == 0:
                state.z = [sequential_sample_modes_marginalized(y, z, state.trans, stack, self.C, R,
                                                                self.P0, rng, supervision=s)
                           for y, z, R, s in zip(self.data.y, state.z, Rs, sup)]
            state.x = [sample_states(y, z, stack, self.C, R, self.P0, rng)
                       for y, z, R in zip(self.data.y, state.z, Rs)]

        design = self._regression(state)
        new_z = []
        for (psi, psibar), s in zip(design, sup):
            reg = PseudoObsRegression(psi, psibar, np.zeros(psi.shape[0], dtype=np.int64))
            zi, _ = block_sample_modes(reg, state.trans, stack, rng, supervision=s)
            new_z.append(zi)
        state.z = new_z

        state.trans, state.hyper = self._update_transitions(state, rng)

        reg = PseudoObsRegression(np.vstack([p for p, _ in design]),
                                  np.vstack([b for _, b in design]), np.concatenate(state.z))
        stats = ModeStats.from_regression(reg, self.L)
        state.dyn, state.ard = self._update_dynamics(stats, state, rng)

        if cfg.is_slds:
            self._update_measurement(state, rng)
        return state

    def _update_transitions(self, state: ChainState, rng):
        cfg = self.config
        n, init = transition_counts(state.z, self.L)
        hyper = state.hyper
        aux = sample_aux_counts(n, state.trans.beta, hyper, rng, init=init)
        if cfg.resample_hyper:
            hyper = resample_hyperparameters(aux, hyper, cfg.hdp_priors, rng, sticky=cfg.sticky)
        beta = state.trans.beta if cfg.skip_beta_update else update_beta(aux, hyper.gamma, rng)
        pi = sample_transition_matrix(beta, hyper, n, rng)
        return TransitionSet(beta, pi), hyper

    def _update_dynamics(self, stats: ModeStats, state: ChainState, rng):
        cfg = self.config
        priors = cfg.priors
        inner = cfg.schedule.inner_iters
        shape = (self.l, self.m)
        iw = self._sigma_iw()
        niwn = priors.niwn
        dyn = list(state.dyn)
        ard = None if state.ard is None else list(state.ard)

        if cfg.dynamics == "shared":
            for _ in range(inner):
                A = sample_shared_A_niwn(stats, dyn, niwn, shape, rng)
                for k in range(self.L):
                    if stats.n[k] == 0:
                        dyn[k] = self._prior_mode(rng, None, A)
                        continue
                    mu = dyn[k].mu
                    Sigma = sample_sigma_given_A(stats, k, A, mu, iw, rng)
                    if cfg.process_mean:
                        mu = sample_process_mean(stats, k, A, Sigma, niwn.mu_mean, niwn.mu_cov, rng)
                    dyn[k] = ModeDynamics(A, Sigma, mu)
            return dyn, ard

        for k in range(self.L):
            if stats.n[k] == 0:
                if ard is not None:
                    ard[k] = default_ard_state(priors.ard_groups, rng)
                dyn[k] = self._prior_mode(rng, None if ard is None else ard[k])
                continue
            A, Sigma, mu = dyn[k].A, dyn[k].Sigma, dyn[k].mu
            if cfg.prior == "mniw" and not cfg.process_mean:
                dyn[k] = sample_mniw_posterior(mniw_sufficient_stats(stats, k, priors.mniw),
                                               priors.mniw, rng)
                continue
            for _ in range(inner):
                if cfg.dynamics == "fixed":
                    A = cfg.fixed_A
                    Sigma = sample_sigma_given_A(stats, k, A, mu, iw, rng)
                elif cfg.prior == "mniw":
                    new = sample_mniw_posterior(mniw_sufficient_stats(stats, k, priors.mniw, mu),
                                                priors.mniw, rng)
                    A, Sigma = new.A, new.Sigma
                elif cfg.prior == "ard":
                    A = sample_ard_dynamic_matrix(stats, k, Sigma, ard[k], mu, rng)
                    ard[k] = sample_ard_precisions(A, ard[k], rng)
                    Sigma = sample_sigma_given_A(stats, k, A, mu, iw, rng)
                else:
                    A = sample_A_niwn(stats, k, Sigma, mu, niwn, shape, rng)
                    Sigma = sample_sigma_given_A(stats, k, A, mu, iw, rng)
                if cfg.process_mean:
                    mu = sample_process_mean(stats, k, A, Sigma, niwn.mu_mean, niwn.mu_cov, rng)
            dyn[k] = ModeDynamics(A, Sigma, mu)
        return dyn, ard

    def _update_measurement(self, state: ChainState, rng):
        resid = np.vstack([y - x[1:] @ self.C.T for y, x in zip(self.data.y, state.x)])
        if state.mixture is not None:
            state.mixture = sample_mixture_measurement_noise(resid, state.mixture,
                                                             self.config.priors.mixture, rng)
        else:
            zeros = np.zeros_like(resid)
            state.R = sample_measurement_noise(resid, zeros, np.eye(self.d), self.R_prior, rng)

    # -- diagnostics -------------------------------------------------------

    def log_joint(self, state: ChainState) -> float:
        """Log density of all sampled quantities and the data, priors included."""
        cfg = self.config
        hp = cfg.hdp_priors
        h = state.hyper
        L = self.L
        lp = 0.0
        if cfg.resample_hyper:
            lp += dist.gamma_logpdf(h.alpha + h.kappa, hp.a_alpha_kappa, hp.b_alpha_kappa)
            lp += dist.gamma_logpdf(h.gamma, hp.a_gamma, hp.b_gamma)
            if cfg.sticky:
                lp += dist.beta_logpdf(min(max(h.rho, 1e-300), 1 - 1e-16), hp.c_rho, hp.d_rho)
        beta = state.trans.beta
        lp += dist.dirichlet_logpdf(beta, np.full(L, h.gamma / L))
        conc = np.maximum(h.alpha * np.broadcast_to(beta, (L, L)) + h.kappa * np.eye(L), 1e-300)
        lp += dist.dirichlet_logpdf(state.trans.pi, conc)
        logb = np.log(np.maximum(beta, 1e-300))
        logpi = np.log(np.maximum(state.trans.pi, 1e-300))
        for z in state.z:
            lp += logb[z[0]] + np.sum(logpi[z[:-1], z[1:]])
        lp += self._log_prior_dynamics(state)
        stack = DynamicsStack.from_modes(state.dyn)
        for (psi, psibar), z in zip(self._regression(state), state.z):
            reg = PseudoObsRegression(psi, psibar, z)
            ll = mode_log_likelihoods(reg, stack)
            lp += float(np.sum(ll[np.arange(z.size), z]))
        if cfg.is_slds:
            for x in state.x:
                lp += dist.mvn_logpdf(x[0], np.zeros(self.l), self.P0)
            Rs = self._measurement_cov(state)
            for y, x, R in zip(self.data.y, state.x, Rs):
                resid = y - x[1:] @ self.C.T
                if R.ndim == 2:
                    lp += float(np.sum(dist.gaussian_logpdf_rows(resid, dist.safe_cholesky(R))))
                else:
                    lp += float(sum(dist.gaussian_logpdf_rows(r[None], dist.safe_cholesky(Rt))[0]
                                    for r, Rt in zip(resid, R)))
            if state.mixture is not None:
                mix = state.mixture
                lp += float(np.sum(np.log(np.maximum(mix.weights[mix.labels], 1e-300))))
                lp += sum(dist.invwishart_logpdf(c, cfg.priors.mixture.iw) for c in mix.covs)
            else:
                lp += dist.invwishart_logpdf(state.R, self.R_prior)
        return float(lp)

    def _log_prior_dynamics(self, state: ChainState) -> float:
        cfg = self.config
        priors = cfg.priors
        iw = self._sigma_iw()
        lp = 0.0
        for k, dm in enumerate(state.dyn):
            if cfg.prior == "mniw":
                lp += dist.invwishart_logpdf(dm.Sigma, iw)
                lp += dist.matrix_normal_logpdf(dm.A, priors.mniw.M, priors.mniw.K, dm.Sigma)
            elif cfg.prior == "ard":
                a = state.ard[k]
                prec = a.precision_vector()
                v = dm.A.flatten(order="F")
                lp += float(0.5 * np.sum(np.log(prec)) - 0.5 * np.sum(prec * v * v)
                            - 0.5 * v.size * np.log(2 * np.pi))
                lp += float(np.sum(a.a * np.log(a.b) - special.gammaln(a.a)
                                   + (a.a - 1) * np.log(a.alphas) - a.b * a.alphas))
                lp += dist.invwishart_logpdf(dm.Sigma, iw)
            else:
                lp += dist.invwishart_logpdf(dm.Sigma, iw)
                if cfg.dynamics == "mode":
                    lp += dist.mvn_logpdf(dm.A.flatten(order="F"), priors.niwn.A_mean,
                                          priors.niwn.A_cov)
            if cfg.process_mean:
                lp += dist.mvn_logpdf(dm.mu, priors.niwn.mu_mean, priors.niwn.mu_cov)
        if cfg.dynamics == "shared":
            lp += dist.mvn_logpdf(state.dyn[0].A.flatten(order="F"), priors.niwn.A_mean,
                                  priors.niwn.A_cov)
        return lp

    def record(self, state: ChainState, iteration: int, chain: int = 0,
               with_log_joint: bool = True) -> TraceRecord:
        h = state.hyper
        dyn = state.dyn
        return TraceRecord(
            iteration=iteration, chain=chain,
            z=[z.copy() for z in state.z],
            active_modes=active_mode_count(state.z, self.L),
            log_joint=self.log_joint(state) if with_log_joint else float("nan"),
            hyper={"alpha": h.alpha, "gamma": h.gamma, "kappa": h.kappa},
            beta=state.trans.beta.copy(), pi=state.trans.pi.copy(),
            A=np.stack([d.A for d in dyn]), Sigma=np.stack([d.Sigma for d in dyn]),
            mu=np.stack([d.mu for d in dyn]) if self.config.process_mean else None,
            R=None if state.R is None else state.R.copy(),
            ard_precisions=None if state.ard is None else np.stack([a.alphas for a in state.ard]),
            mixture_weights=None if state.mixture is None else state.mixture.weights.copy(),
            mixture_covs=None if state.mixture is None else state.mixture.covs.copy())

    # -- driving -------------------------------------------------------------

    def run(self, rng, chain: int = 0, callback=None, with_log_joint: bool = True,
            initial_state: ChainState | None = None) -> list:
        """Run one chain; returns the stored trace records (every ``thin``-th iteration)."""
        sched = self.config.schedule
        state = initial_state if initial_state is not None else self.initial_state(rng)
        records = []
        for it in range(1, sched.n_iters + 1):
            try:
                state = self.sweep(state, rng, it)
            except (NumericalError, ParameterError) as exc:
                raise type(exc)(f"chain {chain}, iteration {it}: {exc}") from exc
            if it % sched.thin == 0:
                rec = self.record(state, it, chain, with_log_joint)
                if callback is not None:
                    callback(rec)
                records.append(rec)
        self.final_state = state
        return records


def gibbs_sweep(state: ChainState, config: ModelConfig, data, rng, iteration: int = 1) -> ChainState:
    return GibbsSampler(config, data).sweep(state, rng, iteration)


def chain_generators(seed, n_chains: int):
    """Independent generators for each chain from one seed."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chains)]


def run_chains(config: ModelConfig, data, n_chains: int, seed, workers: int = 1,
               callback=None, with_log_joint: bool = True) -> list:
    """Run independent chains; chain ``c`` uses the ``c``-th spawned seed stream.

    Results are identical whether chains run serially or on ``workers`` threads.
    """
    sampler = GibbsSampler(config, data)
    rngs = chain_generators(seed, n_chains)

    def one(c):
        return GibbsSampler(sampler.config, sampler.data).run(
            rngs[c], chain=c, callback=callback, with_log_joint=with_log_joint)

    if workers <= 1:
        return [one(c) for c in range(n_chains)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(n_chains)))
