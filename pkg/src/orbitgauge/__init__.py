"""Numerical laboratory for symmetry-induced gauge corrections to
stochastic learning dynamics: orbit Gram / Faddeev-Popov machinery,
a catalog of symmetric models, Langevin and mini-batch SGD simulation,
closed-form reductions, and density diagnostics."""

from . import dynamics, kernels, models, reductions, stats, symmetry
from .dynamics import DynamicsConfig, Trajectory, langevin_step, sgd_step, simulate
from .errors import ConfigError, DivergenceError, OrbitDegenerateError, OrbitGaugeError
from .models import MODEL_KINDS, build_model, eval_invariants, make_dataset
from .symmetry import (
    GaugeMap,
    GeneratorSet,
    check_drift_orthogonality,
    check_invariance,
    constraint_gram,
    fp_matrix,
    gauge_correction,
    orbit_gram,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DynamicsConfig",
    "GaugeMap",
    "GeneratorSet",
    "MODEL_KINDS",
    "OrbitDegenerateError",
    "OrbitGaugeError",
    "Trajectory",
    "build_model",
    "check_drift_orthogonality",
    "check_invariance",
    "constraint_gram",
    "dynamics",
    "eval_invariants",
    "fp_matrix",
    "gauge_correction",
    "kernels",
    "langevin_step",
    "make_dataset",
    "models",
    "orbit_gram",
    "reductions",
    "sgd_step",
    "simulate",
    "stats",
    "symmetry",
]
