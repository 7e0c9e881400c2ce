"""Cooperative multi-armed bandits with heterogeneous agents.

Simulates CO-UCB and CO-AAE (plus the non-cooperative IND-UCB / IND-AAE
baselines) over a delayed broadcast network and evaluates the closed-form
regret and communication bounds.
"""
from .analysis import GapProfile, TrialTrace, compute_gaps, empirical_regret, kl_bernoulli
from .env import GenerationSpec, Instance, generate_instance
from .harness.config import ExperimentConfig, preset
from .harness.experiment import emit_results, run_experiment, run_trial

__all__ = [
    "ExperimentConfig",
    "GapProfile",
    "GenerationSpec",
    "Instance",
    "TrialTrace",
    "compute_gaps",
    "emit_results",
    "empirical_regret",
    "generate_instance",
    "kl_bernoulli",
    "preset",
    "run_experiment",
    "run_trial",
]
