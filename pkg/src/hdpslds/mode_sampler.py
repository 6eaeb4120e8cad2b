"""Mode-sequence samplers.

* :func:`block_sample_modes` draws ``z_{1:T}`` jointly given the pseudo-observations
  by backward message passing in the log domain followed by forward sampling.
* :func:`sequential_sample_modes_marginalized` resamples each ``z_t`` of a
  state-space model with the continuous state integrated out, combining
  forward and backward Kalman information filters.

Mode labels are 0-based. The first mode of a sequence is drawn from ``beta``.
Categorical draws use the Gumbel-max construction, so permuting modes together
with the columns of the Gumbel noise permutes the output exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import linalg

from .distributions import gaussian_logpdf_rows, symmetrize
from .dynamics_priors import DynamicsStack, PseudoObsRegression
from .errors import NumericalError
from .hdp_prior import TransitionSet
from .state_sampler import (_as_stack, backward_info_filter, forward_info_filter,
                            observation_information)


@dataclass(frozen=True)
class ModeMessages:
    """``log_m[t, k] = log m_{t+1,t}(k)`` for 0-based ``t``; the last row is zero."""

    log_m: np.ndarray


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def mode_log_likelihoods(reg: PseudoObsRegression, dynamics) -> np.ndarray:
    """``T x L`` table of ``log N(psi_t; A_k psibar_t + mu_k, Sigma_k)``."""
    dyn = _as_stack(dynamics)
    T = reg.psi.shape[0]
    out = np.empty((T, dyn.L))
    for k in range(dyn.L):
        resid = reg.psi - reg.psibar @ dyn.A[k].T - dyn.mu[k]
        out[:, k] = gaussian_logpdf_rows(resid, dyn.Sigma_chol[k])
    if not np.all(np.isfinite(out)):
        t, k = np.argwhere(~np.isfinite(out))[0]
        raise NumericalError(f"non-finite log-likelihood at t={t + 1}, mode {k}")
    return out


def apply_supervision(loglik: np.ndarray, fixed) -> np.ndarray:
    """Mask the table so that steps with a fixed label (>= 0) can only take that label."""
    if fixed is None:
        return loglik
    fixed = np.asarray(fixed, dtype=np.int64)
    rows = np.flatnonzero(fixed >= 0)
    if rows.size == 0:
        return loglik
    out = np.full_like(loglik, -np.inf)
    out[fixed < 0] = loglik[fixed < 0]
    out[rows, fixed[rows]] = loglik[rows, fixed[rows]]
    return out


@numba.njit(cache=True)
def _backward_log_messages(loglik, pi):
    T, L = loglik.shape
    log_m = np.zeros((T, L))
    v = np.empty(L)
    for t in range(T - 1, 0, -1):
        c = -np.inf
        for k in range(L):
            v[k] = loglik[t, k] + log_m[t, k]
            if v[k] > c:
                c = v[k]
        for k in range(L):
            v[k] = np.exp(v[k] - c)
        for j in range(L):
            acc = 0.0
            for k in range(L):
                acc += pi[j, k] * v[k]
            log_m[t - 1, j] = c + np.log(acc) if acc > 0.0 else -np.inf
    return log_m


@numba.njit(cache=True)
def _forward_argmax(first, log_pi, noisy):
    T, L = noisy.shape
    z = np.empty(T, dtype=np.int64)
    best, arg = -np.inf, 0
    for k in range(L):
        s = first[k] + noisy[0, k]
        if s > best:
            best, arg = s, k
    z[0] = arg
    for t in range(1, T):
        prev = z[t - 1]
        best, arg = -np.inf, 0
        for k in range(L):
            s = log_pi[prev, k] + noisy[t, k]
            if s > best:
                best, arg = s, k
        z[t] = arg
    return z


def hmm_backward_messages(loglik: np.ndarray, pi: np.ndarray) -> ModeMessages:
    """Log backward messages ``log m_{t,t-1}(j) = log sum_k pi_jk N_t(k) m_{t+1,t}(k)``.

    Each step subtracts the maximum before exponentiating; the offsets are
    added back so the messages are exact log-quantities.
    """
    loglik = np.ascontiguousarray(loglik, dtype=float)
    log_m = _backward_log_messages(loglik, np.ascontiguousarray(pi, dtype=float))
    bad = ~np.isfinite(log_m).any(axis=1)
    if bad.any():
        t = int(np.flatnonzero(bad).max())
        raise NumericalError(f"backward messages vanished at t={t + 2}")
    return ModeMessages(log_m)


def sample_from_messages(loglik, log_m, pi, beta, gumbel) -> np.ndarray:
    """Forward sampling with pre-drawn standard Gumbel noise of shape ``(T, L)``."""
    T = loglik.shape[0]
    log_pi = _log(pi)
    v = loglik + log_m
    z = _forward_argmax(_log(beta), log_pi, v + gumbel)
    score = np.concatenate(([_log(beta[z[0]])], log_pi[z[:-1], z[1:]])) + v[np.arange(T), z]
    if not np.all(np.isfinite(score)):
        t = int(np.flatnonzero(~np.isfinite(score))[0])
        raise NumericalError(f"no admissible mode at t={t + 1}")
    return z


def block_sample_modes(reg: PseudoObsRegression, trans: TransitionSet, dynamics, rng,
                       supervision=None, loglik=None):
    """Joint draw of ``z_{1:T}``; returns ``(z, n)`` with ``n`` the transition counts.

    ``loglik`` may be passed to reuse a precomputed likelihood table.
    ``supervision`` is an optional integer array with ``-1`` for free steps.
    """
    if loglik is None:
        loglik = mode_log_likelihoods(reg, dynamics)
    loglik = apply_supervision(loglik, supervision)
    msgs = hmm_backward_messages(loglik, trans.pi)
    gumbel = rng.gumbel(size=loglik.shape)
    z = sample_from_messages(loglik, msgs.log_m, trans.pi, trans.beta, gumbel)
    L = trans.L
    n = np.zeros((L, L), dtype=np.int64)
    np.add.at(n, (z[:-1], z[1:]), 1)
    return z, n


# ---------------------------------------------------------------------------
# sequential sampler with the state marginalized

def _batched_predict(theta_f, lam_f, dyn: DynamicsStack):
    """Predicted information of ``x_t`` under every candidate mode (direct form)."""
    SA = dyn.Sigma_inv @ dyn.A                                  # (L, n, n)
    G = lam_f[None] + np.swapaxes(dyn.A, 1, 2) @ SA             # (L, n, n)
    Smu = np.einsum("kij,kj->ki", dyn.Sigma_inv, dyn.mu)
    rhs = np.concatenate([np.swapaxes(SA, 1, 2),
                          (theta_f[None] - np.einsum("kji,kj->ki", SA, dyn.mu))[..., None]], axis=2)
    sol = np.linalg.solve(G, rhs)
    lam = dyn.Sigma_inv - SA @ sol[..., :-1]
    theta = Smu + np.einsum("kij,kj->ki", SA, sol[..., -1])
    return theta, symmetrize(lam)


def candidate_log_likelihoods(theta_k, lam_k, theta_b, lam_b) -> np.ndarray:
    """``log int N^-1(x; theta_k, Lambda_k) exp(-x^T Lb x / 2 + theta_b^T x) dx`` per candidate.

    Equals ``log p(y_{t:T} | y_{1:t-1}, z_t = k, z_{\\t})`` up to a constant
    that does not depend on ``k``.
    """
    ch_k = np.linalg.cholesky(lam_k)
    ch_s = np.linalg.cholesky(lam_k + lam_b[None])
    logdet_k = 2.0 * np.sum(np.log(np.diagonal(ch_k, axis1=1, axis2=2)), axis=1)
    logdet_s = 2.0 * np.sum(np.log(np.diagonal(ch_s, axis1=1, axis2=2)), axis=1)
    s = theta_k + theta_b[None]
    qk = _quad(ch_k, theta_k)
    qs = _quad(ch_s, s)
    return 0.5 * logdet_k - 0.5 * logdet_s - 0.5 * qk + 0.5 * qs


def _quad(chol, v):
    """``v^T (L L^T)^-1 v`` for a batch of Cholesky factors."""
    w = np.linalg.solve(chol, v[..., None])[..., 0]
    return np.sum(w * w, axis=-1)


def sequential_log_weights(t, fwd, theta_b, lam_b, dyn: DynamicsStack) -> np.ndarray:
    """Likelihood part of the conditional of ``z_t`` (1-based ``t``) for all candidates."""
    theta_k, lam_k = _batched_predict(fwd.theta_f[t - 1], fwd.lam_f[t - 1], dyn)
    try:
        return candidate_log_likelihoods(theta_k, lam_k, theta_b, lam_b)
    except np.linalg.LinAlgError:
        raise NumericalError(f"sequential sampler: filter precision not positive definite at t={t}") from None


def sequential_sample_modes_marginalized(y, z, trans: TransitionSet, dynamics, C, R, P0, rng,
                                         supervision=None) -> np.ndarray:
    """Resample ``z_T, z_{T-1}, ..., z_1`` in turn with ``x`` integrated out.

    Forward filters are computed once from the incoming labels (only
    ``z_{1:t-1}`` is needed at step ``t`` and those are not yet updated); the
    backward message is advanced one step after each new label.
    """
    dyn = _as_stack(dynamics)
    z = np.array(z, dtype=np.int64)
    fixed = None if supervision is None else np.asarray(supervision, dtype=np.int64)
    if fixed is not None:
        z = np.where(fixed >= 0, fixed, z)
    T = z.size
    L = dyn.L
    if L == 1:
        return z
    fwd = forward_info_filter(y, z, dyn, C, R, P0)
    obs_theta, obs_lam = observation_information(y, C, R)
    log_pi = _log(trans.pi)
    log_beta = _log(trans.beta)
    theta_b = obs_theta[T - 1].copy()
    lam_b = np.array(obs_lam[T - 1])
    gumbel = rng.gumbel(size=(T, L))
    n = lam_b.shape[0]
    I = np.eye(n)
    for t in range(T, 0, -1):
        if fixed is None or fixed[t - 1] < 0:
            score = sequential_log_weights(t, fwd, theta_b, lam_b, dyn)
            score = score + (log_beta if t == 1 else log_pi[z[t - 2]])
            if t < T:
                score = score + log_pi[:, z[t]]
            if not np.any(np.isfinite(score)):
                raise NumericalError(f"sequential sampler: no admissible mode at t={t}")
            z[t - 1] = np.argmax(score + gumbel[t - 1])
        if t > 1:
            k = z[t - 1]
            A, Sinv, mu = dyn.A[k], dyn.Sigma_inv[k], dyn.mu[k]
            G = symmetrize(lam_b + Sinv)
            J = linalg.cho_solve(linalg.cho_factor(G, lower=True), lam_b, check_finite=False).T
            Lt = I - J
            lam_pred = A.T @ (Lt @ lam_b @ Lt.T + J @ Sinv @ J.T) @ A
            theta_pred = A.T @ (Lt @ (theta_b - lam_b @ mu))
            lam_b = symmetrize(lam_pred) + obs_lam[t - 2]
            theta_b = theta_pred + obs_theta[t - 2]
    return z


def marginal_candidate_log_likelihoods(y, z, t, dynamics, C, R, P0) -> np.ndarray:
    """Per-candidate weights at 1-based ``t`` computed from scratch (for checks and diagnostics)."""
    dyn = _as_stack(dynamics)
    z = np.asarray(z, dtype=np.int64)
    fwd = forward_info_filter(y, z, dyn, C, R, P0)
    bank = backward_info_filter(y, z, dyn, C, R)
    return sequential_log_weights(t, fwd, bank.theta_b[t], bank.lam_b[t], dyn)
