import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from hdpslds import hdp_prior as hp
from hdpslds.errors import ParameterError


def test_stick_breaking_single_atom(rng):
    for g in (0.1, 1.0, 50.0):
        assert np.array_equal(hp.stick_breaking(g, 1, rng), [1.0])


def test_stick_breaking_first_weight_mean(rng):
    b1 = np.array([hp.stick_breaking(3.0, 50, rng)[0] for _ in range(100_000)])
    assert abs(b1.mean() - 0.25) < 0.005


def test_stick_breaking_rejects_bad_parameters(rng):
    with pytest.raises(ParameterError):
        hp.stick_breaking(1.0, 0, rng)
    with pytest.raises(ParameterError):
        hp.stick_breaking(0.0, 3, rng)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 100.0), st.integers(1, 60), st.integers(0, 2**31 - 1))
def test_property_stick_breaking_simplex(gamma, L, seed):
    w = hp.stick_breaking(gamma, L, np.random.default_rng(seed))
    assert w.shape == (L,) and np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


def test_hyper_validation():
    with pytest.raises(ParameterError):
        hp.HdpHyper(alpha=0.0, gamma=1.0)
    with pytest.raises(ParameterError):
        hp.HdpHyper(alpha=1.0, gamma=1.0, kappa=-1.0)
    h = hp.HdpHyper.from_rho(10.0, 0.3, 2.0)
    assert np.isclose(h.alpha + h.kappa, 10.0) and np.isclose(h.rho, 0.3)


def test_transition_set_validation():
    with pytest.raises(ParameterError):
        hp.TransitionSet(np.array([0.5, 0.6]), np.eye(2))
    with pytest.raises(ParameterError):
        hp.TransitionSet(np.array([0.5, 0.5]), np.eye(3))


def test_row_mean_without_stickiness(rng):
    beta = np.array([0.5, 0.3, 0.2])
    h = hp.HdpHyper(alpha=2.0, gamma=1.0, kappa=0.0)
    rows = np.array([hp.sample_transition_row(beta, h, np.zeros(3), 1, rng) for _ in range(100_000)])
    assert np.all(np.abs(rows.mean(axis=0) - beta) < 0.005)


def test_row_mean_with_stickiness(rng):
    beta = np.array([0.5, 0.3, 0.2])
    h = hp.HdpHyper(alpha=2.0, gamma=1.0, kappa=3.0)
    rows = np.array([hp.sample_transition_row(beta, h, np.zeros(3), 1, rng) for _ in range(100_000)])
    expected = (h.alpha * beta + h.kappa * np.eye(3)[1]) / (h.alpha + h.kappa)
    assert np.all(np.abs(rows.mean(axis=0) - expected) < 0.005)


def test_matrix_sampler_agrees_with_row_sampler(rng):
    beta = np.array([0.4, 0.4, 0.2])
    h = hp.HdpHyper(alpha=2.0, gamma=1.0, kappa=1.5)
    counts = np.array([[3, 0, 1], [0, 5, 2], [1, 1, 0]])
    n = 40_000
    mats = np.array([hp.sample_transition_matrix(beta, h, counts, rng) for _ in range(n)])
    conc = h.alpha * beta + counts + h.kappa * np.eye(3)
    expected = conc / conc.sum(axis=1, keepdims=True)
    assert np.all(np.abs(mats.mean(axis=0) - expected) < 0.005)


def test_sticky_limit(rng):
    beta = np.full(4, 0.25)
    h = hp.HdpHyper(alpha=1.0, gamma=1.0, kappa=1e6)
    hits = [hp.sample_transition_row(beta, h, np.zeros(4), 2, rng)[2] > 0.999 for _ in range(2000)]
    assert np.mean(hits) > 0.99


def test_zero_kappa_matches_plain_dirichlet(rng):
    beta = np.array([0.6, 0.25, 0.15])
    h = hp.HdpHyper(alpha=3.0, gamma=1.0, kappa=0.0)
    sticky = np.array([hp.sample_transition_row(beta, h, np.zeros(3), 0, rng)[0] for _ in range(10_000)])
    plain = rng.dirichlet(3.0 * beta, size=10_000)[:, 0]
    assert stats.ks_2samp(sticky, plain).pvalue > 1e-3


def test_transition_counts():
    n, init = hp.transition_counts([np.array([0, 0, 1, 2, 1]), np.array([2, 2])], 3)
    assert n[0, 0] == 1 and n[0, 1] == 1 and n[1, 2] == 1 and n[2, 1] == 1 and n[2, 2] == 1
    assert n.sum() == 5 and list(init) == [1, 0, 1]


def test_aux_counts_empty(rng):
    beta = np.full(4, 0.25)
    aux = hp.sample_aux_counts(np.zeros((4, 4), dtype=int), beta, hp.HdpHyper(1.0, 1.0, 2.0), rng)
    assert np.all(aux.mbar == 0) and np.all(aux.m == 0) and np.all(aux.w == 0)


def test_aux_counts_single_transition(rng):
    n = np.array([[0, 1], [0, 0]])
    for _ in range(200):
        aux = hp.sample_aux_counts(n, np.array([0.3, 0.7]), hp.HdpHyper(1.0, 1.0, 0.0), rng)
        assert aux.mbar[0, 1] == 1 and aux.mbar.sum() == 1


def test_crf_table_counts_match_exact_distribution(rng):
    # P(tables = k) for n customers is |s(n,k)| c^k / rising(c, n); n=3 enumerated by hand
    c = 1.7
    draws = hp.crf_table_counts(np.full(200_000, 3), c, rng)
    denom = c * (c + 1) * (c + 2)
    exact = np.array([2 * c, 3 * c ** 2, c ** 3]) / denom
    emp = np.bincount(draws, minlength=4)[1:] / draws.size
    assert np.all(np.abs(emp - exact) < 0.005)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.floats(0.0, 20.0), st.integers(0, 2**31 - 1))
def test_property_aux_count_ranges(L, kappa, seed):
    r = np.random.default_rng(seed)
    n = r.integers(0, 8, size=(L, L))
    beta = r.dirichlet(np.ones(L))
    aux = hp.sample_aux_counts(n, beta, hp.HdpHyper(1.5, 1.0, kappa), r)
    assert np.all(aux.m <= n) and np.all((aux.m > 0) == (n > 0))
    assert np.all(aux.w >= 0) and np.all(aux.w <= np.diag(aux.m)) and np.all(aux.mbar >= 0)


def test_beta_prior_recovery_without_data(rng):
    L, gamma = 4, 2.0
    aux = hp.sample_aux_counts(np.zeros((L, L), dtype=int), np.full(L, 0.25), hp.HdpHyper(1.0, gamma), rng)
    draws = np.array([hp.update_beta(aux, gamma, rng)[0] for _ in range(20_000)])
    ref = rng.dirichlet(np.full(L, gamma / L), size=20_000)[:, 0]
    assert stats.ks_2samp(draws, ref).pvalue > 1e-3


def test_hyperparameter_chain_without_data_keeps_prior_mean(rng):
    priors = hp.HdpPriors()
    L = 5
    h = hp.sample_hyper_prior(priors, rng)
    beta = np.full(L, 1 / L)
    zeros = np.zeros((L, L), dtype=int)
    ak = np.empty(100_000)
    for i in range(ak.size):
        aux = hp.sample_aux_counts(zeros, beta, h, rng)
        h = hp.resample_hyperparameters(aux, h, priors, rng)
        ak[i] = h.alpha + h.kappa
    assert abs(ak.mean() / 100.0 - 1.0) < 0.05


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_property_hyper_ranges(L, seed):
    r = np.random.default_rng(seed)
    n = r.integers(0, 30, size=(L, L))
    beta = r.dirichlet(np.ones(L))
    h = hp.HdpHyper(2.0, 1.0, 5.0)
    aux = hp.sample_aux_counts(n, beta, h, r)
    new = hp.resample_hyperparameters(aux, h, hp.HdpPriors(), r)
    assert 0.0 <= new.rho < 1.0 and new.kappa >= 0 and new.alpha > 0 and new.gamma > 0
    plain = hp.resample_hyperparameters(aux, h, hp.HdpPriors(), r, sticky=False)
    assert plain.kappa == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_property_posterior_block_keeps_simplex(L, seed):
    r = np.random.default_rng(seed)
    h = hp.HdpHyper(1.0, 1.0, 1.0)
    trans = hp.sample_transitions_prior(h, L, r)
    z = [r.integers(0, L, size=30)]
    new, h2, aux = hp.sample_transitions_posterior(z, trans, h, hp.HdpPriors(), r)
    assert abs(new.beta.sum() - 1) < 1e-10 and np.allclose(new.pi.sum(axis=1), 1, atol=1e-10)
    assert aux.n.sum() == 29
