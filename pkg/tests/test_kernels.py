"""Compiled and python step loops must integrate the same process."""

import numpy as np
import pytest

from orbitgauge import kernels
from orbitgauge.dynamics import DynamicsConfig, simulate
from orbitgauge.errors import ConfigError
from orbitgauge.models import build_model

needs_compiled = pytest.mark.skipif(
    not kernels.compiled_available(), reason="compiled extension not built")


KERNEL_CASES = [
    ("radial", {"d": 6}, dict(eta=1e-3, total_steps=3000, beta=10.0,
                              burn_in_fraction=0.1, thinning=100)),
    ("l1_hadamard", None, dict(eta=0.02, total_steps=3000,
                               noise_mode="minibatch", batch_size=8,
                               burn_in_fraction=0.0, thinning=500)),
    ("fourier_sparse", None, dict(eta=0.01, total_steps=2000,
                                  noise_mode="minibatch", batch_size=5,
                                  burn_in_fraction=0.0, thinning=500)),
    ("block_group", None, dict(eta=0.01, total_steps=2000,
                               noise_mode="minibatch", batch_size=10,
                               burn_in_fraction=0.0, thinning=500)),
    ("rank2_completion", None, dict(eta=0.02, total_steps=3000,
                                    noise_mode="minibatch", batch_size=16,
                                    burn_in_fraction=0.0, thinning=500)),
]


@needs_compiled
@pytest.mark.parametrize("kind,params,cfg", KERNEL_CASES,
                         ids=[c[0] for c in KERNEL_CASES])
def test_backends_agree(kind, params, cfg):
    # same seed feeds identical batch/noise chunks to both drivers, so the
    # trajectories differ only by floating-point evaluation order
    model, _ = build_model(kind, params=params, seed=2)
    with kernels.use_backend("python"):
        a = simulate(model, DynamicsConfig(seed=5, **cfg))
    with kernels.use_backend("compiled"):
        b = simulate(model, DynamicsConfig(seed=5, **cfg))
    assert a.snapshots.shape == b.snapshots.shape
    assert np.allclose(a.snapshots, b.snapshots, rtol=1e-9, atol=1e-12)
    assert np.array_equal(a.step_indices, b.step_indices)


@needs_compiled
def test_compiled_deterministic():
    model, _ = build_model("radial", params={"d": 5}, seed=0)
    cfg = dict(eta=1e-3, total_steps=2000, beta=10.0, burn_in_fraction=0.0,
               thinning=200)
    with kernels.use_backend("compiled"):
        a = simulate(model, DynamicsConfig(seed=3, **cfg))
        b = simulate(model, DynamicsConfig(seed=3, **cfg))
    assert np.array_equal(a.snapshots, b.snapshots)


def test_python_backend_always_available():
    with kernels.use_backend("python"):
        assert kernels.active_backend() == "python"
        model, _ = build_model("radial", params={"d": 4}, seed=0)
        cfg = DynamicsConfig(eta=1e-3, total_steps=100, burn_in_fraction=0.0,
                             thinning=50, seed=0)
        traj = simulate(model, cfg)
        assert len(traj) == 2


def test_use_backend_restores_previous():
    before = kernels.active_backend()
    with kernels.use_backend("python"):
        assert kernels.active_backend() == "python"
    assert kernels.active_backend() == before


def test_unknown_backend_rejected():
    with pytest.raises(ConfigError, match="unknown backend"):
        with kernels.use_backend("gpu"):
            pass


def test_uncovered_model_falls_back():
    # attention has no registered kernel; compiled_chunk_fn must decline
    model, _ = build_model("attention_ts", seed=0)
    cfg = DynamicsConfig(eta=0.1, total_steps=10, noise_mode="minibatch",
                         batch_size=4, burn_in_fraction=0.0, thinning=5)
    snap = np.empty((2, model.param_dim))
    fn = kernels.compiled_chunk_fn(model, cfg, 0, 5, snap, True, False)
    assert fn is None


@needs_compiled
def test_uncovered_noise_mode_falls_back():
    # the radial kernel integrates the langevin loop only; minibatch-style
    # runs on a data-free model are rejected upstream, so check that a
    # linear-family kernel declines when langevin noise is requested
    model, _ = build_model("l1_hadamard", seed=0)
    cfg = DynamicsConfig(eta=0.01, total_steps=10,
                         noise_mode="minibatch_plus_langevin", batch_size=4,
                         beta=1e6, burn_in_fraction=0.0, thinning=5)
    snap = np.empty((2, model.param_dim))
    fn = kernels.compiled_chunk_fn(model, cfg, 0, 5, snap, True, True)
    assert fn is None
