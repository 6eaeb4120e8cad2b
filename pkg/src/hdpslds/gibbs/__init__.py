"""Full Gibbs samplers, chain management, joint-distribution tests and synthetic data."""
from .config import ModelConfig, Schedule
from .geweke import GewekeResult, geweke_config, geweke_joint_test
from .sampler import (ChainState, GibbsSampler, SequenceData, TraceRecord, active_mode_count,
                      chain_generators, gibbs_sweep, run_chains)
from .synthetic import ScenarioSpec, SyntheticData, generate_synthetic, scenario_spec

__all__ = [
    "ChainState", "GewekeResult", "GibbsSampler", "ModelConfig", "Schedule", "ScenarioSpec", "SequenceData",
    "SyntheticData", "TraceRecord", "active_mode_count", "chain_generators",
    "generate_synthetic", "geweke_config", "geweke_joint_test", "gibbs_sweep", "run_chains", "scenario_spec",
]
