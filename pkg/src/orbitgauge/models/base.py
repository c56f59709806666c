"""Shared model/dataset containers and helpers for the architecture catalog.

A built model is a bundle of plain callables over a flat parameter vector:
full-batch or minibatch loss and gradient, exact symmetry generators with
their group action, an optional explicit gauge map, invariant quantities,
and named scalar observables.  Everything is deterministic given the
(kind, params, seed) triple used to build it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import ConfigError
from ..symmetry import GaugeMap, GeneratorSet


@dataclass
class DatasetSpec:
    """A named bundle of arrays plus the recipe that generated them."""

    kind: str
    seed: int
    params: dict
    arrays: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def n(self) -> int:
        """Number of records usable for minibatching (0 if data-free)."""
        return int(self.params.get("n_batchable", 0))


@dataclass
class ModelSpec:
    """A built model: loss/grad callables plus symmetry structure.

    ``loss(theta, batch=None)`` and ``grad(theta, batch=None)`` interpret
    ``batch`` as an index array into the dataset records; ``None`` means the
    full dataset.  ``unpack(theta)`` names the parameter blocks.
    """

    kind: str
    variant: str
    param_dim: int
    init: np.ndarray
    loss: Callable
    grad: Callable
    generators: GeneratorSet
    gauge: GaugeMap | None
    invariants: Callable
    observables: dict[str, Callable]
    dataset: DatasetSpec | None
    n_data: int
    unpack: Callable
    layout: dict = field(default_factory=dict)
    balance_metrics: Callable | None = None
    general_action: Callable | None = None
    fast_kernel: dict | None = None

    def describe(self) -> str:
        tag = self.kind if not self.variant else f"{self.kind}[{self.variant}]"
        return f"{tag}: {self.param_dim} parameters, group {self.generators.group_label}"


def merge_params(defaults: dict, params: dict | None, kind: str) -> dict:
    """Overlay user params on defaults, rejecting unknown keys."""
    out = dict(defaults)
    if params:
        unknown = set(params) - set(defaults)
        if unknown:
            raise ConfigError(
                f"unknown parameter(s) for model kind {kind!r}: {sorted(unknown)}"
            )
        out.update(params)
    return out


def kaiming_like_init(
    shape: tuple[int, ...],
    fan_in: int,
    rng: np.random.Generator,
    variance_scale: float = 1.0,
) -> np.ndarray:
    """Gaussian init with variance ``variance_scale * 2 / fan_in``."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    if variance_scale <= 0:
        raise ValueError("variance_scale must be positive")
    std = float(np.sqrt(variance_scale * 2.0 / fan_in))
    return std * rng.standard_normal(shape)


def model_rngs(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (data, init) generators derived from one seed."""
    data_ss, init_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(data_ss), np.random.default_rng(init_ss)


def export_dataset(ds: DatasetSpec, prefix) -> None:
    """Write a dataset as ``<prefix>.csv`` plus ``<prefix>.json`` metadata.

    The CSV holds (array, flat index, value) rows at full precision; the
    sidecar records kind/seed/params and array shapes, so the pair
    round-trips exactly through :func:`import_dataset`.
    """
    prefix = str(prefix)
    meta = {
        "kind": ds.kind,
        "seed": ds.seed,
        "params": ds.params,
        "shapes": {k: list(v.shape) for k, v in ds.arrays.items()},
    }
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    with open(prefix + ".csv", "w", encoding="utf-8") as fh:
        fh.write("array,index,value\n")
        for name in sorted(ds.arrays):
            flat = np.asarray(ds.arrays[name]).ravel()
            for i, v in enumerate(flat):
                fh.write(f"{name},{i},{float(v)!r}\n")


def import_dataset(prefix) -> DatasetSpec:
    """Read back a dataset written by :func:`export_dataset`."""
    prefix = str(prefix)
    with open(prefix + ".json", "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    values: dict[str, list[float]] = {name: [] for name in meta["shapes"]}
    with open(prefix + ".csv", "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "array,index,value":
            raise ConfigError(f"unexpected dataset CSV header {header!r}")
        for line in fh:
            name, idx, val = line.rstrip("\n").split(",")
            values[name].append(float(val))
    arrays = {}
    for name, shape in meta["shapes"].items():
        arr = np.array(values[name], dtype=float).reshape(shape)
        arrays[name] = arr
    return DatasetSpec(
        kind=meta["kind"], seed=meta["seed"], params=meta["params"], arrays=arrays
    )


def scaling_generator_set(
    pairs: Callable,
    m: int,
    group_label: str,
    action: Callable,
) -> GeneratorSet:
    """Generator set for commuting one-parameter scaling symmetries.

    ``pairs(theta, a)`` must return the tangent vector of generator ``a``;
    ``action(theta, a, t)`` its exact finite flow.
    """
    xi = [lambda theta, a=a: pairs(theta, a) for a in range(m)]
    return GeneratorSet(m=m, xi=xi, group_label=group_label, action=action)
