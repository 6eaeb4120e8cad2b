import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import logsumexp

from hdpslds import evaluation as ev
from hdpslds.dynamics_priors import ModeDynamics
from hdpslds.errors import ParameterError
from hdpslds.gibbs import TraceRecord
from hdpslds.state_sampler import kalman_log_likelihood
from oracles import ar_loglik_table, dense_log_marginal, exhaustive_overlap

def label_pair(n_labels=6, max_len=12):
    lab = st.integers(0, n_labels - 1)
    return st.integers(1, max_len).flatmap(
        lambda T: st.tuples(st.lists(lab, min_size=T, max_size=T), st.lists(lab, min_size=T, max_size=T)))


def brute_force_mapping(z_est, z_true):
    """Lexicographically smallest overlap-maximizing map, with unmatched after every true label."""
    est, tru = sorted(set(z_est)), sorted(set(z_true))
    best_key, best_val = None, -1
    for perm in itertools.permutations(list(range(len(tru))) + [None] * len(est), len(est)):
        used = [p for p in perm if p is not None]
        if len(set(used)) != len(used):
            continue
        m = dict(zip(est, perm))
        val = sum(m[a] is not None and tru[m[a]] == b for a, b in zip(z_est, z_true))
        key = tuple(len(tru) if p is None else p for p in perm)
        if val > best_val or (val == best_val and key < best_key):
            best_val, best_key = val, key
    return {e: (None if k == len(tru) else tru[k]) for e, k in zip(est, best_key)}, best_val


def record(A, Sigma, pi, beta, mu=None, R=None):
    L = len(A)
    return TraceRecord(iteration=0, z=[], active_modes=L, log_joint=0.0, hyper={},
                       beta=np.asarray(beta, float), pi=np.asarray(pi, float),
                       A=np.array(A, float), Sigma=np.array(Sigma, float),
                       mu=None if mu is None else np.array(mu, float), R=R)


# --- Hamming distance -----------------------------------------------------------

def test_hamming_worked_example():
    # 4 -> 1 covers two steps; 5 can cover only one of its steps
    z_true = [1, 1, 2, 2, 3]
    z_est = [4, 4, 4, 5, 5]
    assert ev.max_overlap(z_est, z_true) == 3
    assert ev.hamming_distance(z_est, z_true) == pytest.approx(0.4, abs=1e-15)
    m = ev.optimal_label_mapping(z_est, z_true)
    assert m.mapping == {4: 1, 5: 2}
    assert list(m.apply(z_est)) == [1, 1, 1, 2, 2]


def test_hamming_identical_and_relabelled_sequences():
    z = [0, 0, 1, 2, 2, 1]
    assert ev.hamming_distance(z, z) == 0.0
    assert ev.hamming_distance([7, 7, 3, 9, 9, 3], z) == 0.0


def test_more_estimated_than_true_labels_leaves_some_unmatched():
    m = ev.optimal_label_mapping([0, 1, 2, 2], [5, 5, 5, 5])
    assert m.mapping == {0: None, 1: None, 2: 5} and m.overlap == 2
    assert list(m.apply([0, 1, 2, 2], unmatched=-9)) == [-9, -9, 5, 5]


def test_length_mismatch_rejected():
    with pytest.raises(ParameterError):
        ev.hamming_distance([0, 1], [0, 1, 1])
    with pytest.raises(ParameterError):
        ev.hamming_distance([], [])


@settings(max_examples=40, deadline=None)
@given(label_pair())
def test_property_overlap_matches_exhaustive_search(pair):
    z_est, z_true = pair
    assert ev.max_overlap(z_est, z_true) == exhaustive_overlap(z_est, z_true)


@settings(max_examples=150, deadline=None)
@given(label_pair(n_labels=4))
def test_property_tie_break_is_lexicographic(pair):
    z_est, z_true = pair
    m = ev.optimal_label_mapping(z_est, z_true)
    ref, val = brute_force_mapping(z_est, z_true)
    assert m.mapping == ref and m.overlap == val


@settings(max_examples=100, deadline=None)
@given(label_pair(), st.integers(0, 2**31 - 1))
def test_property_relabelling_invariance_and_range(pair, seed):
    z_est, z_true = map(np.array, pair)
    r = np.random.default_rng(seed)
    relabel = r.permutation(20)
    d = ev.hamming_distance(z_est, z_true)
    assert 0.0 <= d < 1.0
    assert ev.hamming_distance(relabel[z_est], z_true) == d
    assert ev.hamming_distance(z_est, relabel[z_true]) == d
    assert ev.hamming_distance(z_true, z_est) == d


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10).flatmap(lambda T: st.lists(
    st.lists(st.integers(0, 3), min_size=T, max_size=T), min_size=3, max_size=3)))
def test_property_triangle_inequality(seqs):
    a, b, c = seqs
    assert ev.hamming_distance(a, c) <= ev.hamming_distance(a, b) + ev.hamming_distance(b, c) + 1e-12


def test_hamming_trace_right_aligns_truth():
    z_true = np.array([9, 0, 0, 1, 1])
    trace = ev.hamming_trace([np.array([3, 3, 4, 4]), np.array([3, 3, 3, 3])], z_true)
    assert np.allclose(trace, [0.0, 0.5])
    with pytest.raises(ParameterError):
        ev.truth_for_estimate(z_true, 6)


def test_hamming_quantiles_across_chains():
    d = np.array([[0.1, 0.5], [0.2, 0.4], [0.3, 0.3]])
    q = ev.hamming_quantiles(d, (0.0, 0.5, 1.0))
    assert np.allclose(q, [[0.1, 0.3], [0.2, 0.4], [0.3, 0.5]])


# --- held-out likelihood ----------------------------------------------------------

def test_forward_sum_single_mode_is_the_direct_likelihood(rng):
    y = rng.standard_normal((40, 2))
    A = 0.4 * rng.standard_normal((1, 2, 4))
    Sigma = np.array([np.eye(2) * 0.7])
    rec = record(A, Sigma, [[1.0]], [1.0])
    direct = ar_loglik_table(y, 2, list(A), list(Sigma)).sum()
    assert abs(ev.ar_heldout_log_likelihood(rec, y, 2) - direct) < 1e-10


def test_forward_sum_matches_enumeration(rng):
    T, L = 6, 2
    y = rng.standard_normal((T + 1, 1))
    A = np.array([[[0.5]], [[-0.6]]])
    Sigma = np.array([[[0.4]], [[1.5]]])
    pi = np.array([[0.9, 0.1], [0.3, 0.7]])
    beta = np.array([0.35, 0.65])
    table = ar_loglik_table(y, 1, list(A), list(Sigma))
    terms = []
    for s in itertools.product(range(L), repeat=T):
        lp = np.log(beta[s[0]]) + sum(np.log(pi[a, b]) for a, b in zip(s[:-1], s[1:]))
        terms.append(lp + sum(table[t, k] for t, k in enumerate(s)))
    got = ev.ar_heldout_log_likelihood(record(A, Sigma, pi, beta), y, 1)
    assert abs(got - logsumexp(terms)) < 1e-9


def test_forward_sum_handles_impossible_modes():
    loglik = np.zeros((3, 2))
    assert ev.hmm_log_likelihood(loglik, np.eye(2), np.array([1.0, 0.0])) == pytest.approx(0.0)
    loglik[1, 0] = -np.inf
    assert ev.hmm_log_likelihood(loglik, np.eye(2), np.array([1.0, 0.0])) == -np.inf


def test_state_space_heldout_with_one_mode_is_the_kalman_likelihood(rng):
    n, T = 2, 12
    A = np.array([[[0.8, 0.1], [0.0, 0.5]]])
    Sigma = np.array([np.eye(n) * 0.3])
    C = np.array([[1.0, 0.0]])
    R = np.array([[0.5]])
    P0 = np.eye(n)
    y = rng.standard_normal((T, 1))
    rec = record(A, Sigma, [[1.0]], [1.0], R=R)
    got = ev.slds_heldout_log_likelihood(rec, y, C, P0, rng)
    ref = dense_log_marginal(y, np.zeros(T, int), list(A), list(Sigma), [np.zeros(n)], C, R, P0)
    assert abs(got - ref) < 1e-8
    dyn = [ModeDynamics(A[0], Sigma[0])]
    assert abs(got - kalman_log_likelihood(y, np.zeros(T, int), dyn, C, R, P0)) < 1e-10


def test_heldout_result_and_errors(rng):
    y = rng.standard_normal((20, 1))
    recs = [record([[[a]]], [[[1.0]]], [[1.0]], [1.0]) for a in np.linspace(-0.5, 0.5, 21)]
    res = ev.heldout_log_likelihood(recs, y, "ar", order=1)
    assert res.method == "exact-forward-sum" and res.values.shape == (21,)
    lo, hi = res.interval
    assert lo <= hi and np.sum((res.values >= lo) & (res.values <= hi)) >= 20
    with pytest.raises(ParameterError):
        ev.heldout_log_likelihood([], y, "ar")
    with pytest.raises(ParameterError):
        ev.heldout_log_likelihood(recs, y, "slds")
    with pytest.raises(ParameterError):
        ev.heldout_log_likelihood(recs, y, "hmm")


def test_shortest_interval_of_uniform_grid():
    assert ev.shortest_interval(np.arange(1, 101)) == (1.0, 95.0)


def test_shortest_interval_picks_dense_region():
    v = np.concatenate([np.linspace(0, 1, 95), [50, 60, 70, 80, 90]])
    assert ev.shortest_interval(v) == (0.0, 1.0)
    with pytest.raises(ParameterError):
        ev.shortest_interval([])
    with pytest.raises(ParameterError):
        ev.shortest_interval([1.0], mass=0.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.floats(0.05, 1.0))
def test_property_shortest_interval_is_shortest(values, mass):
    lo, hi = ev.shortest_interval(values, mass)
    v = np.sort(values)
    k = max(int(np.ceil(mass * v.size - 1e-9)), 1)
    assert np.sum((v >= lo) & (v <= hi)) >= k
    assert hi - lo <= min(v[i + k - 1] - v[i] for i in range(v.size - k + 1)) + 1e-12


# --- change-point ROC ----------------------------------------------------------------

def test_changepoint_probabilities():
    Z = np.array([[0, 0, 1, 1], [0, 1, 1, 1]])
    assert np.allclose(ev.changepoint_probabilities(Z), [0.0, 0.5, 0.5, 0.0])


def test_window_scores():
    prob = np.array([0.0, 0.1, 0.2, 0.9, 0.3, 0.0, 0.0, 0.4, 0.0, 0.5])
    scores, positive = ev.window_scores(prob, [4], 3)
    assert np.allclose(scores, [0.2, 0.9, 0.4, 0.5])
    assert list(positive) == [False, True, False, False]
    with pytest.raises(ParameterError):
        ev.window_scores(prob, [4], 0)
    with pytest.raises(ParameterError):
        ev.window_scores(prob, [4], 11)
    with pytest.raises(ParameterError):
        ev.window_scores(prob, [10], 2)


def test_hand_built_roc():
    roc = ev.roc_from_scores([0.9, 0.1, 0.8, 0.3], [True, False, False, True])
    assert np.allclose(roc.tpr, [0, 0.5, 0.5, 1, 1]) and np.allclose(roc.fpr, [0, 0, 0.5, 0.5, 1])
    assert roc.auc == pytest.approx(0.75) and roc.thresholds[0] == np.inf


def test_perfect_and_constant_detectors():
    T, w = 100, 5
    events = [12, 47, 83]
    z = np.zeros(T, int)
    for e in events:
        z[e:] += 1
    perfect = ev.changepoint_roc(np.array([z]), events, w)
    assert perfect.auc == 1.0
    flat = ev.roc_from_scores(np.full(20, 0.3), np.arange(20) < 4)
    assert np.allclose(flat.tpr, flat.fpr) and flat.auc == 0.5
    with pytest.raises(ParameterError):
        ev.roc_from_scores([0.1, 0.2], [True, True])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]), st.booleans()), min_size=2, max_size=40))
def test_property_auc_is_the_rank_statistic(items):
    scores = np.array([s for s, _ in items])
    positive = np.array([p for _, p in items])
    if positive.all() or not positive.any():
        return
    roc = ev.roc_from_scores(scores, positive)
    assert np.all(np.diff(roc.fpr) >= 0) and np.all(np.diff(roc.tpr) >= 0)
    assert roc.fpr[-1] == 1.0 and roc.tpr[-1] == 1.0
    u = stats.mannwhitneyu(scores[positive], scores[~positive]).statistic
    assert roc.auc == pytest.approx(u / (positive.sum() * (~positive).sum()), abs=1e-12)


# --- mode counts ------------------------------------------------------------------------

def test_mode_count_summary():
    s = ev.mode_count_summary([3, 3, 4, 2, 3, 4])
    assert s.histogram == {2: 1 / 6, 3: 0.5, 4: 1 / 3} and s.most_common == 3
    assert ev.mode_count_summary([1, 1, 1]).histogram == {1: 1.0}
    # ties go to the smaller count
    assert ev.mode_count_summary([2, 5]).most_common == 2
    with pytest.raises(ParameterError):
        ev.mode_count_summary([])
