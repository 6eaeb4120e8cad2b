"""Model and sampler configuration."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..distributions import InverseWishartParams
from ..dynamics_priors import DataPriors, set_hyperparameters_from_data
from ..errors import ParameterError
from ..hdp_prior import HdpHyper, HdpPriors

FAMILIES = ("ar", "slds")
DYNAMICS = ("mode", "shared", "fixed")
PRIORS = ("mniw", "ard", "niwn")
MEASUREMENTS = ("iw", "dp_mixture")


@dataclass(frozen=True)
class Schedule:
    n_iters: int = 1000
    burn_in: int | None = None          # default: half of n_iters
    thin: int = 1
    sequential_period: int = 10         # 0 disables the marginalized mode step
    inner_iters: int = 5

    def __post_init__(self):
        if self.n_iters < 1 or self.thin < 1 or self.inner_iters < 1 or self.sequential_period < 0:
            raise ParameterError("schedule counts must be positive")
        if self.burn_in is not None and not 0 <= self.burn_in <= self.n_iters:
            raise ParameterError("burn_in must lie in [0, n_iters]")

    @property
    def burn_in_iters(self) -> int:
        return self.n_iters // 2 if self.burn_in is None else self.burn_in


@dataclass(frozen=True)
class ModelConfig:
    """Everything that defines a model and how it is sampled.

    ``family`` is ``"ar"`` (``order`` = number of lags) or ``"slds"``
    (``order`` = state dimension, observed through ``C = [I_d 0]``).
    ``dynamics`` is ``"mode"`` (per-mode A), ``"shared"`` (one A for all modes)
    or ``"fixed"`` (A given by ``fixed_A``); the last two require the
    independent ``"niwn"`` prior. ``process_mean`` adds a per-mode mean to the
    process noise.
    """

    family: str = "ar"
    order: int = 1
    dynamics: str = "mode"
    prior: str = "mniw"
    measurement: str = "iw"
    process_mean: bool = False
    fixed_A: np.ndarray | None = None
    L: int = 20
    sticky: bool = True
    resample_hyper: bool = True
    hdp_priors: HdpPriors = field(default_factory=HdpPriors)
    initial_hyper: HdpHyper | None = None
    preset: str = "default"
    priors: DataPriors | None = None
    measurement_prior: InverseWishartParams | None = None
    mixture_components: int = 10
    mixture_concentration: float = 1.0
    initial_state_scale: float = 10.0
    schedule: Schedule = field(default_factory=Schedule)
    skip_beta_update: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"family must be one of {FAMILIES}")
        if self.dynamics not in DYNAMICS:
            raise ParameterError(f"dynamics must be one of {DYNAMICS}")
        if self.prior not in PRIORS:
            raise ParameterError(f"prior must be one of {PRIORS}")
        if self.measurement not in MEASUREMENTS:
            raise ParameterError(f"measurement must be one of {MEASUREMENTS}")
        if self.order < 1 or self.L < 1:
            raise ParameterError("order and L must be at least 1")
        if self.dynamics != "mode" and self.prior != "niwn":
            raise ParameterError(
                "shared or fixed dynamic matrices require the independent (niwn) prior")
        if self.dynamics == "fixed" and self.fixed_A is None:
            raise ParameterError("fixed dynamics need fixed_A")
        if self.measurement == "dp_mixture" and self.family != "slds":
            raise ParameterError("mixture measurement noise applies to state-space models only")
        if self.fixed_A is not None:
            object.__setattr__(self, "fixed_A", np.atleast_2d(np.asarray(self.fixed_A, dtype=float)))
        if not self.sticky and self.initial_hyper is not None and self.initial_hyper.kappa != 0:
            raise ParameterError("a non-sticky model needs kappa = 0")

    @property
    def is_slds(self) -> bool:
        return self.family == "slds"

    def state_dim(self, d: int) -> int:
        return self.order if self.is_slds else d

    def regressor_dim(self, d: int) -> int:
        return self.order if self.is_slds else d * self.order

    def with_priors_from(self, y_seqs) -> "ModelConfig":
        """Fill in data-dependent prior hyperparameters that were not given explicitly."""
        if self.priors is not None:
            return self
        priors = set_hyperparameters_from_data(
            y_seqs, self.family, self.order, self.prior, self.preset,
            mixture_components=self.mixture_components,
            mixture_concentration=self.mixture_concentration)
        return replace(self, priors=priors)

    def observation_matrix(self, d: int) -> np.ndarray:
        n = self.order
        C = np.zeros((d, n))
        C[:, :d] = np.eye(d)
        return C
