"""Kalman information filters and blocked sampling of the continuous state.

Time indexing: arrays of length ``T + 1`` are indexed by time ``t = 0..T``,
where ``x_0 ~ N(0, P0)`` carries no observation and ``z[t-1]`` is the mode
governing the transition ``x_{t-1} -> x_t``. Observations ``y`` have ``T``
rows (``y[t-1]`` observes ``x_t``) and ``y_t = C x_t + w_t`` with
``w_t ~ N(0, R_t)``; ``R`` may be one matrix or a ``(T, d, d)`` stack.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .distributions import chol_inverse, safe_cholesky, symmetrize
from .dynamics_priors import DynamicsStack
from .errors import NumericalError

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2.0 * np.pi)


def _as_stack(dynamics) -> DynamicsStack:
    return dynamics if isinstance(dynamics, DynamicsStack) else DynamicsStack.from_modes(dynamics)


def observation_information(y, C, R):
    """Per-step ``(C^T R_t^-1 y_t, C^T R_t^-1 C)`` arrays of shapes ``(T, n)`` and ``(T, n, n)``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.asarray(R, dtype=float)
    T = y.shape[0]
    if R.ndim == 2:
        Rinv = chol_inverse(safe_cholesky(R, "measurement covariance R"))
        CtRi = C.T @ Rinv
        return y @ CtRi.T, np.broadcast_to(CtRi @ C, (T,) + (C.shape[1],) * 2)
    Rinv = np.stack([chol_inverse(safe_cholesky(Rt, f"measurement covariance at t={t + 1}"))
                     for t, Rt in enumerate(R)])
    CtRi = np.einsum("ji,tjk->tik", C, Rinv)
    return np.einsum("tik,tk->ti", CtRi, y), CtRi @ C


def default_initial_covariance(n: int, scale: float = 1.0, factor: float = 10.0) -> np.ndarray:
    return factor * scale * np.eye(n)


@dataclass(frozen=True)
class BackwardFilterBank:
    """Backward information messages indexed by time ``t = 0..T``.

    ``theta_pred[t], lam_pred[t]`` parameterize ``p(y_{t+1:T} | x_t)`` (zero at
    ``t = T``); ``theta_b[t], lam_b[t]`` additionally include ``y_t`` (equal to
    the predicted message at ``t = 0``).
    """

    theta_b: np.ndarray
    lam_b: np.ndarray
    theta_pred: np.ndarray
    lam_pred: np.ndarray


def backward_info_filter(y, z, dynamics, C, R, method: str = "stable") -> BackwardFilterBank:
    """Backward information filter over a fixed mode sequence.

    ``method="stable"`` uses the Joseph-like form
    ``J = Lb (Lb + Sigma^-1)^-1``, ``Lpred = A^T((I-J) Lb (I-J)^T + J Sigma^-1 J^T) A``,
    ``theta_pred = A^T (I-J)(theta_b - Lb mu)``; ``"direct"`` uses the
    textbook Schur-complement form. Both give the same messages.
    """
    dyn = _as_stack(dynamics)
    z = np.asarray(z, dtype=np.int64)
    obs_theta, obs_lam = observation_information(y, C, R)
    T, n = obs_theta.shape
    theta_b = np.zeros((T + 1, n))
    lam_b = np.zeros((T + 1, n, n))
    theta_pred = np.zeros((T + 1, n))
    lam_pred = np.zeros((T + 1, n, n))
    theta_b[T] = obs_theta[T - 1]
    lam_b[T] = obs_lam[T - 1]
    I = np.eye(n)
    for t in range(T - 1, -1, -1):
        k = z[t]
        A, Sinv, mu = dyn.A[k], dyn.Sigma_inv[k], dyn.mu[k]
        Lb, tb = lam_b[t + 1], theta_b[t + 1]
        G = symmetrize(Lb + Sinv)
        try:
            Gc = linalg.cho_factor(G, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NumericalError(f"backward filter: Lambda_b + Sigma^-1 not positive definite at t={t + 1}",
                                 condition=float(np.linalg.cond(G))) from None
        if method == "stable":
            J = linalg.cho_solve(Gc, Lb, check_finite=False).T
            Lt = I - J
            inner = Lt @ Lb @ Lt.T + J @ Sinv @ J.T
            lp = A.T @ inner @ A
            tp = A.T @ (Lt @ (tb - Lb @ mu))
        elif method == "direct":
            SA = Sinv @ A
            lp = A.T @ SA - SA.T @ linalg.cho_solve(Gc, SA, check_finite=False)
            tp = -SA.T @ mu + SA.T @ linalg.cho_solve(Gc, Sinv @ mu + tb, check_finite=False)
        else:
            raise ValueError(f"unknown backward filter method {method!r}")
        lam_pred[t] = symmetrize(lp)
        theta_pred[t] = tp
        if t >= 1:
            lam_b[t] = lam_pred[t] + obs_lam[t - 1]
            theta_b[t] = tp + obs_theta[t - 1]
        else:
            lam_b[0] = lam_pred[0]
            theta_b[0] = tp
    return BackwardFilterBank(theta_b, lam_b, theta_pred, lam_pred)


def forward_sample_states(bank: BackwardFilterBank, z, dynamics, P0, rng) -> np.ndarray:
    """Exact joint draw of ``x_{0:T}`` given the mode sequence and observations.

    ``x_0`` is drawn from its posterior ``N^-1(theta_pred[0], P0^-1 + lam_pred[0])``
    and each later state from
    ``N^-1(Sigma^-1 (A x_{t-1} + mu) + theta_b[t], Sigma^-1 + lam_b[t])``.
    Returns an array of shape ``(T + 1, n)``.
    """
    dyn = _as_stack(dynamics)
    z = np.asarray(z, dtype=np.int64)
    T = z.size
    n = bank.theta_b.shape[1]
    x = np.empty((T + 1, n))
    P0inv = chol_inverse(safe_cholesky(P0, "initial state covariance"))
    noise = rng.standard_normal((T + 1, n))
    x[0] = _info_draw(bank.theta_pred[0], P0inv + bank.lam_pred[0], noise[0], 0)
    for t in range(1, T + 1):
        k = z[t - 1]
        Sinv = dyn.Sigma_inv[k]
        theta = Sinv @ (dyn.A[k] @ x[t - 1] + dyn.mu[k]) + bank.theta_b[t]
        x[t] = _info_draw(theta, Sinv + bank.lam_b[t], noise[t], t)
    return x


def _info_draw(theta, lam, eps, t):
    try:
        L = np.linalg.cholesky(symmetrize(lam))
    except np.linalg.LinAlgError:
        L = safe_cholesky(lam, f"state conditional precision at t={t}")
    mean = linalg.cho_solve((L, True), theta, check_finite=False)
    return mean + linalg.solve_triangular(L.T, eps, lower=False, check_finite=False)


def sample_states(y, z, dynamics, C, R, P0, rng) -> np.ndarray:
    dyn = _as_stack(dynamics)
    bank = backward_info_filter(y, z, dyn, C, R)
    return forward_sample_states(bank, z, dyn, P0, rng)


@dataclass(frozen=True)
class ForwardFilterBank:
    """Filtered information parameters ``theta_f[t], lam_f[t]`` of ``p(x_t | y_{1:t})``, ``t = 0..T``."""

    theta_f: np.ndarray
    lam_f: np.ndarray


def predict_information(theta_f, lam_f, A, Sigma, Sinv, mu, method: str = "auto"):
    """Information parameters of ``x_t`` given filtered ``x_{t-1}`` and one transition.

    Returns ``(theta_pred, lam_pred, method_used)``.
    """
    n = lam_f.shape[0]
    method = _choose_forward_method(A, method)
    if method == "stable":
        Ainv = np.linalg.inv(A)
        M = symmetrize(Ainv.T @ lam_f @ Ainv)
        G = symmetrize(M + Sinv)
        J = linalg.cho_solve(linalg.cho_factor(G, lower=True), M, check_finite=False).T
        Lt = np.eye(n) - J
        lp = Lt @ M @ Lt.T + J @ Sinv @ J.T
        tp = Lt @ (Ainv.T @ (theta_f + lam_f @ (Ainv @ mu)))
    elif method == "direct":
        SA = Sinv @ A
        G = symmetrize(lam_f + A.T @ SA)
        try:
            Gc = linalg.cho_factor(G, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NumericalError("forward filter: Lambda_f + A^T Sigma^-1 A not positive definite",
                                 condition=float(np.linalg.cond(G))) from None
        lp = Sinv - SA @ linalg.cho_solve(Gc, SA.T, check_finite=False)
        tp = Sinv @ mu + SA @ linalg.cho_solve(Gc, theta_f - SA.T @ mu, check_finite=False)
    else:
        raise ValueError(f"unknown forward filter method {method!r}")
    return tp, symmetrize(lp), method


def forward_info_filter(y, z, dynamics, C, R, P0, method: str = "auto") -> ForwardFilterBank:
    """Forward information filter with ``x_0 ~ N(0, P0)``.

    ``method="auto"`` uses the stable recursion when ``A`` is invertible with
    condition number below 1e8 and falls back to the direct form otherwise.
    """
    dyn = _as_stack(dynamics)
    z = np.asarray(z, dtype=np.int64)
    obs_theta, obs_lam = observation_information(y, C, R)
    T, n = obs_theta.shape
    theta_f = np.zeros((T + 1, n))
    lam_f = np.zeros((T + 1, n, n))
    lam_f[0] = chol_inverse(safe_cholesky(P0, "initial state covariance"))
    mode_method = {}
    for k in np.unique(z):
        mode_method[k] = _choose_forward_method(dyn.A[k], method)
    for t in range(1, T + 1):
        k = z[t - 1]
        tp, lp, _ = predict_information(theta_f[t - 1], lam_f[t - 1], dyn.A[k], dyn.Sigma[k],
                                        dyn.Sigma_inv[k], dyn.mu[k], mode_method[k])
        theta_f[t] = tp + obs_theta[t - 1]
        lam_f[t] = lp + obs_lam[t - 1]
    return ForwardFilterBank(theta_f, lam_f)


def _choose_forward_method(A, method):
    if method != "auto":
        return method
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        cond = np.inf
    if cond < 1e8:
        return "stable"
    log.info("forward filter: dynamic matrix ill-conditioned (cond %.3g); using direct recursion", cond)
    return "direct"


def kalman_log_likelihood(y, z, dynamics, C, R, P0, m0=None) -> float:
    """``log p(y_{1:T} | z, theta)`` by a moment-form Kalman filter with ``x_0 ~ N(m0, P0)``."""
    dyn = _as_stack(dynamics)
    y = np.atleast_2d(np.asarray(y, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    R = np.asarray(R, dtype=float)
    z = np.asarray(z, dtype=np.int64)
    n = C.shape[1]
    m = np.zeros(n) if m0 is None else np.asarray(m0, dtype=float)
    P = np.asarray(P0, dtype=float)
    total = 0.0
    for t in range(y.shape[0]):
        k = z[t]
        m = dyn.A[k] @ m + dyn.mu[k]
        P = symmetrize(dyn.A[k] @ P @ dyn.A[k].T + dyn.Sigma[k])
        Rt = R if R.ndim == 2 else R[t]
        S = symmetrize(C @ P @ C.T + Rt)
        Sc = safe_cholesky(S, f"innovation covariance at t={t + 1}")
        v = y[t] - C @ m
        w = linalg.solve_triangular(Sc, v, lower=True, check_finite=False)
        total += -0.5 * (w @ w) - np.sum(np.log(np.diag(Sc))) - 0.5 * v.size * _LOG_2PI
        K = linalg.cho_solve((Sc, True), C @ P, check_finite=False).T
        m = m + K @ v
        P = symmetrize(P - K @ S @ K.T)
    return float(total)
