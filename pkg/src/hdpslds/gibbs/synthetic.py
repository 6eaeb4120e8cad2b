"""Synthetic switching-dynamics data sets."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError

SCENARIOS = ("var1-5mode", "ar2-3mode", "slds-3mode", "sparse-slds-2mode", "mssv", "regime3")


@dataclass(frozen=True)
class ScenarioSpec:
    """Ground-truth switching model.

    ``A[k]`` has shape ``(l, l * r)`` for an AR(r) process (``C is None``) or
    ``(n, n)`` for a state-space model observed through ``C`` with noise ``R``.
    ``change_points`` (0-based step indices) with ``segment_modes`` replace the
    Markov mode sequence by a deterministic one.
    """

    A: tuple
    Sigma: tuple
    T: int
    self_transition: float = 0.98
    mu: tuple | None = None
    C: np.ndarray | None = None
    R: np.ndarray | None = None
    change_points: tuple | None = None
    segment_modes: tuple | None = None
    name: str = "custom"

    @property
    def n_modes(self) -> int:
        return len(self.A)

    @property
    def is_slds(self) -> bool:
        return self.C is not None

    def transition_matrix(self) -> np.ndarray:
        K = self.n_modes
        if K == 1:
            return np.ones((1, 1))
        P = np.full((K, K), (1.0 - self.self_transition) / (K - 1))
        np.fill_diagonal(P, self.self_transition)
        return P


@dataclass(frozen=True)
class SyntheticData:
    y: np.ndarray
    z: np.ndarray          # 0-based, one label per row of y
    spec: ScenarioSpec
    x: np.ndarray | None = None


def companion_radius(A: np.ndarray) -> float:
    l, m = A.shape
    r = m // l
    comp = np.zeros((m, m))
    comp[:l] = A
    if r > 1:
        comp[l:, :-l] = np.eye(m - l)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


def generate_synthetic(spec: ScenarioSpec, rng) -> SyntheticData:
    for k, A in enumerate(spec.A):
        rad = companion_radius(np.atleast_2d(A))
        if rad > 1.0:
            warnings.warn(f"mode {k} dynamics are unstable (spectral radius {rad:.3f})",
                          RuntimeWarning, stacklevel=2)
    z = _mode_sequence(spec, rng)
    if spec.is_slds:
        x, y = _simulate_slds(spec, z, rng)
        return SyntheticData(y, z, spec, x)
    return SyntheticData(_simulate_ar(spec, z, rng), z, spec)


def _mode_sequence(spec, rng):
    T = spec.T
    if spec.change_points is not None:
        bounds = [0, *spec.change_points, T]
        z = np.empty(T, dtype=np.int64)
        for s, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
            z[a:b] = spec.segment_modes[s]
        return z
    P = np.cumsum(spec.transition_matrix(), axis=1)
    K = spec.n_modes
    z = np.empty(T, dtype=np.int64)
    z[0] = rng.integers(K)
    u = rng.random(T)
    for t in range(1, T):
        z[t] = min(np.searchsorted(P[z[t - 1]], u[t] * P[z[t - 1], -1], side="right"), K - 1)
    return z


def _mean(spec, k, dim):
    return np.zeros(dim) if spec.mu is None else np.asarray(spec.mu[k], dtype=float)


def _simulate_ar(spec, z, rng):
    A0 = np.atleast_2d(spec.A[0])
    d = A0.shape[0]
    r = A0.shape[1] // d
    chol = [np.linalg.cholesky(np.atleast_2d(S)) for S in spec.Sigma]
    y = np.zeros((spec.T + r, d))
    eps = rng.standard_normal((spec.T, d))
    for t in range(spec.T):
        k = z[t]
        lag = y[t:t + r][::-1].ravel()
        y[t + r] = np.atleast_2d(spec.A[k]) @ lag + _mean(spec, k, d) + chol[k] @ eps[t]
    return y[r:]


def _simulate_slds(spec, z, rng):
    n = np.atleast_2d(spec.A[0]).shape[0]
    C = np.atleast_2d(spec.C)
    d = C.shape[0]
    chol = [np.linalg.cholesky(np.atleast_2d(S)) for S in spec.Sigma]
    Rc = np.linalg.cholesky(np.atleast_2d(spec.R))
    x = np.zeros((spec.T + 1, n))
    eps = rng.standard_normal((spec.T, n))
    for t in range(spec.T):
        k = z[t]
        x[t + 1] = np.atleast_2d(spec.A[k]) @ x[t] + _mean(spec, k, n) + chol[k] @ eps[t]
    y = x[1:] @ C.T + rng.standard_normal((spec.T, d)) @ Rc.T
    return x, y


# ---------------------------------------------------------------------------
# named scenarios

def _random_rotation(rng, n):
    Q, Rm = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(Rm))


def scenario_spec(name: str, T: int = 1000) -> ScenarioSpec:
    """Named benchmark scenarios; dynamics are fixed (independent of the data seed)."""
    if name == "var1-5mode":
        g = np.random.default_rng(5)
        radii = (0.99, 0.95, 0.9, 0.85, 0.8)
        A = tuple(r * _random_rotation(g, 3) for r in radii)
        return ScenarioSpec(A=A, Sigma=(np.eye(3),) * 5, T=T, name=name)
    if name == "ar2-3mode":
        A = (np.array([[1.6, -0.8]]), np.array([[-0.6, 0.3]]), np.array([[0.2, 0.6]]))
        return ScenarioSpec(A=A, Sigma=(np.eye(1),) * 3, T=T, name=name)
    if name == "slds-3mode":
        g = np.random.default_rng(3)
        A = tuple(r * _random_rotation(g, 3) for r in (0.98, 0.9, 0.8))
        return ScenarioSpec(A=A, Sigma=(np.eye(3),) * 3, T=T, C=np.eye(3), R=0.5 * np.eye(3),
                            name=name)
    if name == "sparse-slds-2mode":
        A1 = np.array([[0.8, -0.2, 0.0], [-0.2, 0.8, 0.0], [0.0, 0.0, 0.0]])
        A2 = np.array([[-0.2, 0.0, 0.8], [0.8, 0.0, -0.2], [0.0, 0.0, 0.0]])
        C = np.hstack([np.eye(2), np.zeros((2, 1))])
        return ScenarioSpec(A=(A1, A2), Sigma=(np.eye(3),) * 2, T=T, C=C, R=np.eye(2), name=name)
    if name == "mssv":
        # log-volatility with a switching mean; observations on the log-squared-return
        # scale with Gaussian noise of the log chi-square(1) variance
        A = (np.array([[0.9]]),) * 2
        mu = (np.array([-0.1]), np.array([0.25]))
        return ScenarioSpec(A=A, Sigma=(np.array([[0.05]]),) * 2, mu=mu, T=T,
                            C=np.eye(1), R=np.array([[np.pi ** 2 / 2]]), name=name)
    if name == "regime3":
        A = (np.array([[0.5]]), np.array([[-0.3]]), np.array([[0.9]]))
        Sigma = (np.array([[1.0]]), np.array([[9.0]]), np.array([[0.25]]))
        cps = tuple(int(round(T * f)) for f in (0.25, 0.5, 0.75))
        return ScenarioSpec(A=A, Sigma=Sigma, T=T, change_points=cps, segment_modes=(0, 1, 2, 1),
                            name=name)
    raise ParameterError(f"unknown scenario {name!r}; choose from {SCENARIOS}")
