"""Euler-Maruyama simulation of Langevin dynamics and mini-batch SGD.

One step is ``theta' = theta - eta * g + noise_scale * sqrt(2 eta / beta) * xi``
with ``g`` either the full-batch gradient or a mini-batch gradient and
``xi`` a standard normal draw.  Trajectories are advanced in fixed-size
chunks: each chunk first draws its batch indices, then its noise matrix,
so a trajectory is a pure function of (model, config) no matter how the
work is scheduled or which backend executes the inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from . import kernels
from .errors import ConfigError, DivergenceError
from .models.base import ModelSpec

CHUNK = 4096
DIVERGENCE_LIMIT = 1.0e12
NOISE_MODES = ("langevin", "minibatch", "minibatch_plus_langevin")


@dataclass
class DynamicsConfig:
    """Step size, temperature, noise source and recording schedule."""

    eta: float
    total_steps: int
    beta: float = 10.0
    noise_scale: float = 1.0
    burn_in_fraction: float = 0.1
    thinning: int = 1
    seed: int = 0
    noise_mode: str = "langevin"
    batch_size: int | None = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ConfigError(f"eta must be positive, got {self.eta}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.noise_scale < 0:
            raise ConfigError(f"noise_scale must be nonnegative, got {self.noise_scale}")
        if int(self.total_steps) < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if not 0 <= self.burn_in_fraction < 1:
            raise ConfigError(f"burn_in_fraction must lie in [0, 1), got {self.burn_in_fraction}")
        if int(self.thinning) < 1:
            raise ConfigError(f"thinning must be >= 1, got {self.thinning}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}, got {self.noise_mode!r}")
        if self.batch_size is not None and int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1 or None, got {self.batch_size}")
        self.total_steps = int(self.total_steps)
        self.thinning = int(self.thinning)
        self.seed = int(self.seed)

    @property
    def burn_in_steps(self) -> int:
        return int(self.burn_in_fraction * self.total_steps)

    @property
    def noise_coefficient(self) -> float:
        return self.noise_scale * sqrt(2.0 * self.eta / self.beta)


@dataclass
class Trajectory:
    """Thinned post-burn-in snapshots with recorded observable series."""

    snapshots: np.ndarray
    step_indices: np.ndarray
    observables: dict = field(default_factory=dict)

    def __len__(self):
        return self.snapshots.shape[0]

    def to_csv(self, path, include_parameters: bool = False):
        names = list(self.observables)
        header = ["step_index"] + names
        if include_parameters:
            header += [f"theta_{j}" for j in range(self.snapshots.shape[1])]
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for i, step in enumerate(self.step_indices):
                row = [str(int(step))]
                row += [repr(float(self.observables[k][i])) for k in names]
                if include_parameters:
                    row += [repr(float(x)) for x in self.snapshots[i]]
                fh.write(",".join(row) + "\n")


def langevin_step(theta, grad, config: DynamicsConfig, rng, step_index=None):
    """One Euler-Maruyama step from an externally supplied gradient."""
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != theta.shape:
        raise ConfigError(f"gradient shape {grad.shape} does not match theta shape {theta.shape}")
    if not np.all(np.isfinite(grad)):
        where = "" if step_index is None else f" at step {step_index}"
        raise DivergenceError(f"non-finite gradient entries{where}", step=step_index)
    out = theta - config.eta * grad
    if config.noise_scale > 0:
        out = out + config.noise_coefficient * rng.standard_normal(theta.shape)
    return out


def sgd_step(theta, model: ModelSpec, batch, config: DynamicsConfig, rng, step_index=None):
    """One SGD step on a batch; adds Langevin noise only in the combined mode."""
    theta = np.asarray(theta, dtype=float)
    if batch is not None:
        batch = np.asarray(batch)
        if batch.size == 0:
            raise ConfigError("empty batch")
    g = model.grad(theta, batch)
    if not np.all(np.isfinite(g)):
        where = "" if step_index is None else f" at step {step_index}"
        raise DivergenceError(f"non-finite gradient entries{where}", step=step_index)
    out = theta - config.eta * g
    if config.noise_mode == "minibatch_plus_langevin" and config.noise_scale > 0:
        out = out + config.noise_coefficient * rng.standard_normal(theta.shape)
    return out


def _resolve_sources(model: ModelSpec, config: DynamicsConfig):
    """Decide which random streams a run consumes."""
    uses_batches = config.noise_mode in ("minibatch", "minibatch_plus_langevin")
    if uses_batches and model.n_data == 0:
        raise ConfigError(f"model kind {model.kind!r} has no batchable data; use noise_mode='langevin'")
    needs_batch = uses_batches and config.batch_size is not None
    needs_noise = config.noise_mode in ("langevin", "minibatch_plus_langevin") and config.noise_scale > 0
    return needs_batch, needs_noise


def _python_chunk(model, config, burn, thin, snap, needs_batch, needs_noise):
    """Generic per-chunk driver; also serves as the python backend."""
    eta = config.eta
    coef = config.noise_coefficient

    def chunk_fn(theta, idx, noise, done, cursor, K):
        for k in range(K):
            step = done + k + 1
            g = model.grad(theta, idx[k] if needs_batch else None)
            theta -= eta * g
            if needs_noise:
                theta += coef * noise[k]
            if not np.all(np.isfinite(theta)):
                return cursor, step
            if step > burn and (step - burn) % thin == 0:
                snap[cursor] = theta
                cursor += 1
        return cursor, -1

    return chunk_fn


def simulate(model: ModelSpec, config: DynamicsConfig, observables=None) -> Trajectory:
    """Run the configured number of steps and return the thinned trajectory."""
    obs_names = list(observables or [])
    for name in obs_names:
        if name not in model.observables:
            raise ConfigError(
                f"observable {name!r} not registered by model kind {model.kind!r}; "
                f"available: {', '.join(sorted(model.observables)) or '(none)'}"
            )
    needs_batch, needs_noise = _resolve_sources(model, config)

    n = model.param_dim
    total = config.total_steps
    burn = config.burn_in_steps
    thin = config.thinning
    n_snap = max((total - burn) // thin, 0)
    snap = np.empty((n_snap, n), dtype=float)
    step_indices = burn + thin * np.arange(1, n_snap + 1, dtype=np.int64)

    theta = np.array(model.init, dtype=float)
    if theta.shape != (n,):
        raise ConfigError(f"model init has shape {theta.shape}, expected ({n},)")

    chunk_fn = kernels.compiled_chunk_fn(model, config, burn, thin, snap, needs_batch, needs_noise)
    if chunk_fn is None:
        chunk_fn = _python_chunk(model, config, burn, thin, snap, needs_batch, needs_noise)

    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    B = int(config.batch_size) if needs_batch else 0
    done = 0
    cursor = 0
    while done < total:
        K = min(CHUNK, total - done)
        idx = rng.integers(0, model.n_data, size=(K, B), dtype=np.int64) if needs_batch else None
        noise = rng.standard_normal((K, n)) if needs_noise else None
        cursor, fail = chunk_fn(theta, idx, noise, done, cursor, K)
        if fail >= 0:
            raise DivergenceError(f"non-finite parameters at step {fail}", step=int(fail))
        done += K
        L = model.loss(theta, None)
        if not np.isfinite(L) or abs(L) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"loss diverged (loss={L!r}) by step {done}", step=done)

    series = {"loss": np.array([model.loss(s, None) for s in snap])}
    for name in obs_names:
        fn = model.observables[name]
        series[name] = np.array([float(fn(s)) for s in snap])
    bad = ~np.isfinite(series["loss"])
    if bad.any():
        first = int(step_indices[np.argmax(bad)])
        raise DivergenceError(f"non-finite recorded loss at step {first}", step=first)
    return Trajectory(snapshots=snap, step_indices=step_indices, observables=series)
