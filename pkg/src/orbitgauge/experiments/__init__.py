"""Registered experiments, their runner and the acceptance suite."""

from .config import ExperimentConfig, RunReport
from .registry import EXPERIMENT_NAMES, get_entry, list_experiments
from .runners import run_experiment
from .verify import CriterionResult, run_criterion, verify

__all__ = [
    "CriterionResult",
    "EXPERIMENT_NAMES",
    "ExperimentConfig",
    "RunReport",
    "get_entry",
    "list_experiments",
    "run_criterion",
    "run_experiment",
    "verify",
]
