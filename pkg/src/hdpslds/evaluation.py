"""Evaluation of fitted switching models.

* Hamming distance after the overlap-maximizing injective relabeling.
* Held-out predictive log-likelihood per posterior sample with the
  shortest interval holding a given fraction of the values.
* Windowed change-point ROC curves.
* Histograms of the number of active modes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dynamics_priors import DynamicsStack, ModeDynamics, PseudoObsRegression, lagged_design
from .errors import ParameterError
from .mode_sampler import mode_log_likelihoods
from .state_sampler import kalman_log_likelihood

# ---------------------------------------------------------------------------
# Hamming distance under the optimal label mapping


@dataclass(frozen=True)
class LabelMapping:
    """Injective map from estimated to true labels; unmatched labels map to ``None``."""

    mapping: dict
    overlap: int

    def apply(self, z_est, unmatched: int = -1) -> np.ndarray:
        lookup = {k: (unmatched if v is None else v) for k, v in self.mapping.items()}
        return np.array([lookup.get(int(k), unmatched) for k in np.asarray(z_est)], dtype=np.int64)


def _check_pair(z_est, z_true):
    z_est = np.asarray(z_est).ravel()
    z_true = np.asarray(z_true).ravel()
    if z_est.shape != z_true.shape:
        raise ParameterError(f"label sequences differ in length: {z_est.size} vs {z_true.size}")
    if z_est.size == 0:
        raise ParameterError("label sequences are empty")
    return z_est, z_true


def confusion_matrix(z_est, z_true):
    """Counts ``N[i, j]`` of steps with estimated label ``est[i]`` and true label ``true[j]``."""
    z_est, z_true = _check_pair(z_est, z_true)
    est, ei = np.unique(z_est, return_inverse=True)
    true, ti = np.unique(z_true, return_inverse=True)
    N = np.zeros((est.size, true.size), dtype=np.int64)
    np.add.at(N, (ei, ti), 1)
    return N, est, true


def _padded(N):
    # zero padding lets every estimated label stay unmatched
    n = max(N.shape)
    P = np.zeros((n, n), dtype=np.int64)
    P[:N.shape[0], :N.shape[1]] = N
    return P


def max_overlap(z_est, z_true) -> int:
    N, _, _ = confusion_matrix(z_est, z_true)
    P = _padded(N)
    r, c = linear_sum_assignment(P, maximize=True)
    return int(P[r, c].sum())


def hamming_distance(z_est, z_true) -> float:
    """``1 - max_overlap / T`` over all injective relabelings of ``z_est``."""
    z_est, z_true = _check_pair(z_est, z_true)
    return 1.0 - max_overlap(z_est, z_true) / z_est.size


def optimal_label_mapping(z_est, z_true) -> LabelMapping:
    """Overlap-maximizing injective mapping; ties go to the lexicographically smallest map.

    The map is compared as the tuple of images of the sorted estimated
    labels, with "unmatched" ordered after every true label.
    """
    N, est, true = confusion_matrix(z_est, z_true)
    best = max_overlap(z_est, z_true)
    free_rows = list(range(est.size))
    free_cols = list(range(true.size))
    fixed = 0
    mapping = {}
    for i in range(est.size):
        free_rows.remove(i)
        chosen = None
        for j in free_cols:
            rest = N[np.ix_(free_rows, [c for c in free_cols if c != j])]
            if fixed + N[i, j] + _assignment_value(rest) == best:
                chosen = j
                break
        if chosen is None:
            mapping[int(est[i])] = None
            continue
        mapping[int(est[i])] = int(true[chosen])
        fixed += int(N[i, chosen])
        free_cols.remove(chosen)
    return LabelMapping(mapping, best)


def _assignment_value(N) -> int:
    if N.size == 0:
        return 0
    P = _padded(N)
    r, c = linear_sum_assignment(P, maximize=True)
    return int(P[r, c].sum())


def align_to_truth(z_est, z_true, unmatched: int = -1) -> np.ndarray:
    """Relabel ``z_est`` by its optimal mapping onto ``z_true``."""
    return optimal_label_mapping(z_est, z_true).apply(z_est, unmatched)


def truth_for_estimate(z_true, n_estimated: int) -> np.ndarray:
    """True labels matching an estimate of length ``n_estimated``.

    Autoregressive fits carry no label for their leading context rows, so
    the truth is right-aligned with the estimate.
    """
    z_true = np.asarray(z_true).ravel()
    if n_estimated > z_true.size:
        raise ParameterError("estimated sequence is longer than the truth")
    return z_true[z_true.size - n_estimated:]


def hamming_trace(z_samples, z_true) -> np.ndarray:
    """Hamming distance of every sample in a trace against the same truth."""
    return np.array([hamming_distance(z, truth_for_estimate(z_true, np.size(z))) for z in z_samples])


def hamming_quantiles(distances, quantiles=(0.1, 0.5, 0.9)) -> np.ndarray:
    """Quantiles across chains of per-iteration distances; input ``(n_chains, n_iters)``."""
    d = np.atleast_2d(np.asarray(distances, dtype=float))
    if d.size == 0:
        raise ParameterError("no distances to summarize")
    return np.quantile(d, quantiles, axis=0)


# ---------------------------------------------------------------------------
# held-out likelihood


def shortest_interval(values, mass: float = 0.95) -> tuple[float, float]:
    """Shortest interval of sorted values holding ``ceil(mass * n)`` of them (lowest start on ties)."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if v.size == 0:
        raise ParameterError("no values")
    if not 0 < mass <= 1:
        raise ParameterError("mass must lie in (0, 1]")
    k = max(int(math.ceil(mass * v.size - 1e-9)), 1)
    widths = v[k - 1:] - v[:v.size - k + 1]
    i = int(np.argmin(widths))
    return float(v[i]), float(v[i + k - 1])


def hmm_log_likelihood(loglik: np.ndarray, pi: np.ndarray, init: np.ndarray) -> float:
    """Exact ``log sum_z p(z) prod_t p(y_t | z_t)`` by the scaled forward recursion."""
    loglik = np.atleast_2d(loglik)
    with np.errstate(divide="ignore"):
        log_alpha = np.log(init) + loglik[0]
    total = 0.0
    for t in range(1, loglik.shape[0] + 1):
        c = np.max(log_alpha)
        if not np.isfinite(c):
            return -np.inf
        a = np.exp(log_alpha - c)
        s = a.sum()
        total += c + np.log(s)
        if t == loglik.shape[0]:
            break
        with np.errstate(divide="ignore"):
            log_alpha = np.log((a / s) @ pi) + loglik[t]
    return float(total)


def _record_dynamics(rec) -> DynamicsStack:
    L = rec.A.shape[0]
    mus = [None] * L if rec.mu is None else list(rec.mu)
    return DynamicsStack.from_modes([ModeDynamics(rec.A[k], rec.Sigma[k], mus[k]) for k in range(L)])


def ar_heldout_log_likelihood(rec, y, order: int) -> float:
    """Exact predictive likelihood of ``y`` (first ``order`` rows as context); initial modes from ``beta``."""
    y = np.asarray(y, dtype=float)
    psi, psibar = lagged_design(y[:, None] if y.ndim == 1 else y, order)
    reg = PseudoObsRegression(psi, psibar, np.zeros(psi.shape[0], dtype=np.int64))
    return hmm_log_likelihood(mode_log_likelihoods(reg, _record_dynamics(rec)), rec.pi, rec.beta)


def _simulate_modes(pi, init, T, rng):
    z = np.empty(T, dtype=np.int64)
    z[0] = rng.choice(init.size, p=init)
    for t in range(1, T):
        z[t] = rng.choice(pi.shape[1], p=pi[z[t - 1]])
    return z


def slds_heldout_log_likelihood(rec, y, C, P0, rng) -> float:
    """``log p(y | z, theta)`` with ``z`` drawn from the sampled transition model.

    The state is integrated out exactly by a Kalman filter. With mixture
    measurement noise the per-step component is drawn from the sampled weights.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    T = y.shape[0]
    z = _simulate_modes(rec.pi, rec.beta, T, rng)
    if rec.mixture_weights is not None:
        labels = rng.choice(rec.mixture_weights.size, size=T, p=rec.mixture_weights)
        R = rec.mixture_covs[labels]
    else:
        R = rec.R
    return kalman_log_likelihood(y, z, _record_dynamics(rec), C, R, P0)


@dataclass(frozen=True)
class HeldoutResult:
    values: np.ndarray
    interval: tuple
    method: str
    mass: float = 0.95


def heldout_log_likelihood(records, y_heldout, family: str, order: int = 1, C=None, P0=None,
                           rng=None, mass: float = 0.95) -> HeldoutResult:
    """Held-out log-likelihood for each posterior sample and their shortest ``mass`` interval.

    Autoregressive models use the exact forward sum over mode sequences.
    State-space models use one mode sequence drawn from each sample's
    transition model with the state marginalized.
    """
    records = list(records)
    if not records:
        raise ParameterError("no posterior samples")
    if family == "ar":
        values = np.array([ar_heldout_log_likelihood(r, y_heldout, order) for r in records])
        method = "exact-forward-sum"
    elif family == "slds":
        if C is None or P0 is None or rng is None:
            raise ParameterError("state-space held-out likelihood needs C, P0 and rng")
        values = np.array([slds_heldout_log_likelihood(r, y_heldout, C, P0, rng) for r in records])
        method = "sampled-modes-kalman"
    else:
        raise ParameterError(f"unknown family {family!r}")
    return HeldoutResult(values, shortest_interval(values, mass), method, mass)


# ---------------------------------------------------------------------------
# change-point ROC


def changepoint_probabilities(z_samples) -> np.ndarray:
    """Fraction of samples with ``z_t != z_{t-1}``; zero at the first step."""
    Z = np.atleast_2d(np.asarray(z_samples))
    if Z.size == 0:
        raise ParameterError("no samples")
    p = np.zeros(Z.shape[1])
    p[1:] = np.mean(Z[:, 1:] != Z[:, :-1], axis=0)
    return p


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray   # decreasing; the first is +inf
    tpr: np.ndarray
    fpr: np.ndarray
    auc: float


def window_scores(prob, event_times, window: int):
    """Max probability and event indicator per consecutive window of ``window`` steps."""
    prob = np.asarray(prob, dtype=float).ravel()
    T = prob.size
    if window < 1 or window > T:
        raise ParameterError(f"window {window} must lie in [1, {T}]")
    events = np.asarray(event_times, dtype=np.int64).ravel()
    if events.size and (events.min() < 0 or events.max() >= T):
        raise ParameterError("event times outside the series")
    starts = np.arange(0, T, window)
    scores = np.maximum.reduceat(prob, starts)
    positive = np.zeros(starts.size, dtype=bool)
    positive[events // window] = True
    return scores, positive


def roc_from_scores(scores, positive) -> RocCurve:
    scores = np.asarray(scores, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise ParameterError("ROC needs both event and event-free windows")
    thr = np.concatenate(([np.inf], np.unique(scores)[::-1]))
    hits = scores[None, :] >= thr[:, None]
    tpr = (hits & positive).sum(axis=1) / n_pos
    fpr = (hits & ~positive).sum(axis=1) / n_neg
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocCurve(thr, tpr, fpr, auc)


def changepoint_roc(z_samples, event_times, window: int) -> RocCurve:
    """ROC of windowed change-point detection from sampled mode sequences.

    ``event_times`` are the 0-based steps at which the true mode changes.
    """
    return roc_from_scores(*window_scores(changepoint_probabilities(z_samples), event_times, window))


# ---------------------------------------------------------------------------
# mode counts


@dataclass(frozen=True)
class ModeCountSummary:
    counts: np.ndarray
    histogram: dict

    @property
    def most_common(self) -> int:
        return max(self.histogram, key=lambda k: (self.histogram[k], -k))


def mode_count_summary(trace) -> ModeCountSummary:
    """Distribution of active-mode counts over a trace of records or integers."""
    counts = np.array([getattr(r, "active_modes", r) for r in trace], dtype=np.int64)
    if counts.size == 0:
        raise ParameterError("empty trace")
    values, freq = np.unique(counts, return_counts=True)
    return ModeCountSummary(counts, {int(v): float(f) / counts.size for v, f in zip(values, freq)})
