"""Bayesian nonparametric switching linear dynamical systems.

Sticky HDP-HMM priors over mode sequences combined with switching vector
autoregressions or switching linear-Gaussian state-space models, fit by
blocked Gibbs sampling.
"""
from .errors import NumericalError, ParameterError

__version__ = "0.1.0"

__all__ = ["NumericalError", "ParameterError", "__version__"]
