"""Simulation loop checks: step algebra, noise statistics, determinism,
recording schedule and divergence reporting."""

import math

import numpy as np
import pytest

from orbitgauge.dynamics import (
    DynamicsConfig,
    Trajectory,
    langevin_step,
    sgd_step,
    simulate,
)
from orbitgauge.errors import ConfigError, DivergenceError
from orbitgauge.models import build_model


def quadratic_model():
    """Isotropic well in d=3 with no symmetry structure used."""
    model, _ = build_model("radial", params={"d": 3}, seed=0)
    return model


class TestConfigValidation:
    def test_field_bounds(self):
        good = dict(eta=0.1, total_steps=10)
        DynamicsConfig(**good)
        for bad in (
            dict(good, eta=0.0),
            dict(good, beta=-1.0),
            dict(good, noise_scale=-0.5),
            dict(good, total_steps=0),
            dict(good, burn_in_fraction=1.0),
            dict(good, thinning=0),
            dict(good, noise_mode="anneal"),
            dict(good, batch_size=0),
        ):
            with pytest.raises(ConfigError):
                DynamicsConfig(**bad)

    def test_noise_coefficient(self):
        cfg = DynamicsConfig(eta=0.02, total_steps=1, beta=8.0, noise_scale=3.0)
        assert cfg.noise_coefficient == pytest.approx(3.0 * math.sqrt(2.0 * 0.02 / 8.0))

    def test_burn_in_steps_floor(self):
        cfg = DynamicsConfig(eta=0.1, total_steps=1001, burn_in_fraction=0.1)
        assert cfg.burn_in_steps == 100


class TestStepAlgebra:
    def test_noiseless_step_is_plain_descent(self):
        cfg = DynamicsConfig(eta=0.25, total_steps=1, noise_scale=0.0)
        rng = np.random.default_rng(0)
        theta = np.array([1.0, -2.0])
        grad = np.array([0.5, 0.5])
        out = langevin_step(theta, grad, cfg, rng)
        assert np.allclose(out, theta - 0.25 * grad)

    def test_shape_mismatch_rejected(self):
        cfg = DynamicsConfig(eta=0.1, total_steps=1)
        with pytest.raises(ConfigError, match="shape"):
            langevin_step(np.zeros(3), np.zeros(4), cfg, np.random.default_rng(0))

    def test_nonfinite_gradient_raises(self):
        cfg = DynamicsConfig(eta=0.1, total_steps=1)
        with pytest.raises(DivergenceError):
            langevin_step(np.zeros(2), np.array([np.nan, 0.0]), cfg,
                          np.random.default_rng(0), step_index=17)

    def test_sgd_step_empty_batch(self):
        model, _ = build_model("l1_hadamard", seed=0)
        cfg = DynamicsConfig(eta=0.1, total_steps=1, noise_mode="minibatch")
        with pytest.raises(ConfigError, match="empty batch"):
            sgd_step(model.init, model, np.array([], dtype=int), cfg,
                     np.random.default_rng(0))

    def test_sgd_plain_mode_adds_no_noise(self):
        model, _ = build_model("l1_hadamard", seed=0)
        batch = np.arange(4)
        cfg = DynamicsConfig(eta=0.05, total_steps=1, noise_mode="minibatch",
                             noise_scale=1.0)
        out = sgd_step(model.init, model, batch, cfg, np.random.default_rng(0))
        expected = model.init - 0.05 * model.grad(model.init, batch)
        assert np.array_equal(out, expected)

    def test_scalar_hand_values(self):
        cfg = DynamicsConfig(eta=0.1, total_steps=1, noise_scale=0.0)
        rng = np.random.default_rng(0)
        out = langevin_step(np.array([1.0]), np.array([2.0]), cfg, rng)
        assert out[0] == pytest.approx(0.8)
        out = langevin_step(np.array([1.0]), np.array([0.0]), cfg, rng)
        assert out[0] == 1.0

    def test_single_sample_squared_loss(self):
        # one step of SGD on l(theta) = (y - theta.x)^2 / 2 from theta = 0
        import types
        x = np.array([0.5, -1.0, 2.0])
        y = 3.0
        stub = types.SimpleNamespace(
            grad=lambda theta, batch=None: -(y - theta @ x) * x)
        cfg = DynamicsConfig(eta=0.1, total_steps=1, noise_mode="minibatch",
                             noise_scale=0.0)
        out = sgd_step(np.zeros(3), stub, np.array([0]), cfg,
                       np.random.default_rng(0))
        assert np.allclose(out, 0.1 * y * x)

    def test_full_batch_matches_plain_gradient_step(self):
        model, _ = build_model("l1_hadamard", seed=0)
        cfg = DynamicsConfig(eta=0.02, total_steps=1, noise_mode="minibatch",
                             noise_scale=0.0)
        rng = np.random.default_rng(0)
        via_batch = sgd_step(model.init, model, np.arange(model.n_data), cfg, rng)
        via_full = langevin_step(model.init, model.grad(model.init),
                                 DynamicsConfig(eta=0.02, total_steps=1,
                                                noise_scale=0.0), rng)
        assert np.allclose(via_batch, via_full, atol=1e-14)

    def test_minibatch_noise_zero_mean_monte_carlo(self):
        # random half-batches average to the full gradient within 3 SE
        model, _ = build_model("l1_hadamard", seed=4)
        theta = model.init + 0.1
        full = model.grad(theta)
        rng = np.random.default_rng(21)
        half = model.n_data // 2
        draws = np.array([
            model.grad(theta, rng.choice(model.n_data, half, replace=False))
            for _ in range(10_000)
        ])
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        err = np.abs(mean - full)
        assert np.all(err <= 3.0 * se + 1e-12)


class TestOrnsteinUhlenbeck:
    def test_stationary_variance_quadratic_well(self):
        # L = theta^2 / 2 per coordinate; langevin_step acts elementwise, so
        # 512 independent chains give >10^6 stationary samples cheaply.
        eta, beta = 0.01, 4.0
        cfg = DynamicsConfig(eta=eta, total_steps=1, beta=beta, noise_scale=1.0)
        rng = np.random.default_rng(6)
        theta = np.zeros(512)
        kept = []
        for step in range(5000):
            theta = langevin_step(theta, theta, cfg, rng)
            if step >= 1000:
                kept.append(theta.copy())
        var = float(np.var(np.concatenate(kept)))
        assert var == pytest.approx(1.0 / beta, rel=0.05)

    def test_zero_noise_monotone_descent(self):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.05, total_steps=300, noise_scale=0.0,
                             burn_in_fraction=0.0, thinning=10, seed=0)
        traj = simulate(model, cfg)
        losses = traj.observables["loss"]
        assert np.all(np.diff(losses) <= 1e-15)
        assert losses[-1] < 1e-10

    def test_zero_noise_monotone_on_hadamard(self):
        model, _ = build_model("l1_hadamard", seed=0)
        cfg = DynamicsConfig(eta=1e-3, total_steps=400, noise_scale=0.0,
                             burn_in_fraction=0.0, thinning=20, seed=0)
        losses = simulate(model, cfg).observables["loss"]
        assert np.all(np.diff(losses) <= 1e-15)


class TestSimulate:
    def test_snapshot_schedule(self):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.01, total_steps=1000, burn_in_fraction=0.1,
                             thinning=50, seed=1)
        traj = simulate(model, cfg)
        assert len(traj) == (1000 - 100) // 50
        assert traj.step_indices[0] == 150
        assert traj.step_indices[-1] == 1000
        assert np.all(np.diff(traj.step_indices) == 50)

    def test_deterministic_per_seed(self):
        model, _ = build_model("l1_hadamard", seed=2)
        cfg = dict(eta=0.02, total_steps=500, noise_mode="minibatch_plus_langevin",
                   batch_size=8, beta=1e6, burn_in_fraction=0.0, thinning=100)
        a = simulate(model, DynamicsConfig(seed=9, **cfg))
        b = simulate(model, DynamicsConfig(seed=9, **cfg))
        c = simulate(model, DynamicsConfig(seed=10, **cfg))
        assert np.array_equal(a.snapshots, b.snapshots)
        assert not np.array_equal(a.snapshots, c.snapshots)

    def test_recorded_observables(self):
        model, _ = build_model("rank2_completion", seed=3)
        cfg = DynamicsConfig(eta=0.02, total_steps=200, noise_mode="minibatch",
                             batch_size=16, burn_in_fraction=0.0, thinning=40,
                             seed=0)
        traj = simulate(model, cfg, observables=["energy_1"])
        assert set(traj.observables) == {"loss", "energy_1"}
        assert traj.observables["loss"].shape == (5,)

    def test_unknown_observable_rejected(self):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.01, total_steps=10)
        with pytest.raises(ConfigError, match="not registered"):
            simulate(model, cfg, observables=["top_eigenvalue"])

    def test_minibatch_without_data_rejected(self):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.01, total_steps=10, noise_mode="minibatch",
                             batch_size=4)
        with pytest.raises(ConfigError, match="no batchable data"):
            simulate(model, cfg)

    def test_all_steps_burned_gives_empty_trajectory(self):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.01, total_steps=100, burn_in_fraction=0.99,
                             thinning=10, seed=0)
        traj = simulate(model, cfg)
        assert len(traj) == 0
        assert traj.observables["loss"].shape == (0,)

    def test_divergence_reports_step(self):
        model, _ = build_model("rank2_completion", seed=0)
        cfg = DynamicsConfig(eta=50.0, total_steps=5000, noise_mode="minibatch",
                             batch_size=8, burn_in_fraction=0.0, thinning=1000,
                             seed=0)
        with pytest.raises(DivergenceError) as exc:
            simulate(model, cfg)
        assert exc.value.step is not None
        assert 0 < exc.value.step <= 5000

    def test_trajectory_csv(self, tmp_path):
        model = quadratic_model()
        cfg = DynamicsConfig(eta=0.01, total_steps=100, burn_in_fraction=0.0,
                             thinning=20, seed=2)
        traj = simulate(model, cfg, observables=["radius"])
        path = tmp_path / "series.csv"
        traj.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "step_index,loss,radius"
        assert len(rows) == 1 + len(traj)
        first = rows[1].split(",")
        assert int(first[0]) == 20
        assert float(first[1]) == pytest.approx(traj.observables["loss"][0])


class TestBatchStatistics:
    def test_batches_drawn_from_data_range(self):
        # run enough minibatch steps that every record index appears
        model, _ = build_model("l1_hadamard", seed=1)
        cfg = DynamicsConfig(eta=1e-4, total_steps=400, noise_mode="minibatch",
                             batch_size=16, burn_in_fraction=0.0, thinning=400,
                             seed=7)
        traj = simulate(model, cfg)
        assert len(traj) == 1
