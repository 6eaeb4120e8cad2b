"""File-backed run configuration, validated before any computation."""
from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import ParameterError
from ..gibbs.config import ModelConfig, Schedule
from ..hdp_prior import HdpHyper, HdpPriors
from .preprocess import STEPS


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScheduleConfig(_Strict):
    n_iters: int = Field(1000, ge=1)
    burn_in: int | None = Field(None, ge=0)
    thin: int = Field(1, ge=1)
    sequential_period: int = Field(10, ge=0)
    inner_iters: int = Field(5, ge=1)


class HyperPriorConfig(_Strict):
    a_alpha_kappa: float = Field(1.0, gt=0)
    b_alpha_kappa: float = Field(0.01, gt=0)
    a_gamma: float = Field(1.0, gt=0)
    b_gamma: float = Field(0.01, gt=0)
    c_rho: float = Field(10.0, gt=0)
    d_rho: float = Field(1.0, gt=0)


class InitialHyperConfig(_Strict):
    alpha: float = Field(gt=0)
    gamma: float = Field(gt=0)
    kappa: float = Field(0.0, ge=0)


class RunConfig(_Strict):
    """Model, sampler and I/O settings for ``fit``.

    Relative paths are resolved against the directory of the config file.
    """

    data: list[str] = Field(min_length=1)
    supervision: list[str] | None = None
    output: str = "run"
    seed: int = 0
    chains: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    preprocess: list[Literal[STEPS]] = Field(default_factory=list)

    family: Literal["ar", "slds"] = "ar"
    order: int = Field(1, ge=1)
    dynamics: Literal["mode", "shared", "fixed"] = "mode"
    prior: Literal["mniw", "ard", "niwn"] = "mniw"
    measurement: Literal["iw", "dp_mixture"] = "iw"
    process_mean: bool = False
    fixed_A: list[list[float]] | None = None
    L: int = Field(20, ge=1)
    sticky: bool = True
    resample_hyper: bool = True
    hyperpriors: HyperPriorConfig = Field(default_factory=HyperPriorConfig)
    initial_hyper: InitialHyperConfig | None = None
    preset: Literal["default", "supervised", "mssv"] = "default"
    mixture_components: int = Field(10, ge=1)
    mixture_concentration: float = Field(1.0, gt=0)
    initial_state_scale: float = Field(10.0, gt=0)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    record_log_joint: bool = True
    trace_parameters: bool = True

    @model_validator(mode="after")
    def _compatible(self):
        if self.supervision is not None and len(self.supervision) != len(self.data):
            raise ValueError("give one supervision file per data file")
        if self.schedule.burn_in is not None and self.schedule.burn_in > self.schedule.n_iters:
            raise ValueError("burn_in exceeds n_iters")
        # reuse the model-level checks so errors surface before any data is read
        try:
            self.model_config_object()
        except ParameterError as exc:
            raise ValueError(str(exc)) from None
        return self

    def model_config_object(self) -> ModelConfig:
        h = self.initial_hyper
        return ModelConfig(
            family=self.family, order=self.order, dynamics=self.dynamics, prior=self.prior,
            measurement=self.measurement, process_mean=self.process_mean,
            fixed_A=None if self.fixed_A is None else np.asarray(self.fixed_A, dtype=float),
            L=self.L, sticky=self.sticky, resample_hyper=self.resample_hyper,
            hdp_priors=HdpPriors(**self.hyperpriors.model_dump()),
            initial_hyper=None if h is None else HdpHyper(h.alpha, h.gamma, h.kappa),
            preset=self.preset, mixture_components=self.mixture_components,
            mixture_concentration=self.mixture_concentration,
            initial_state_scale=self.initial_state_scale,
            schedule=Schedule(**self.schedule.model_dump()))
