"""Experiment configuration and run reports.

Configs round-trip through JSON with unknown keys rejected, so a config
file is always an exact description of what ran.  Reports are written
with sorted keys and are byte-identical across repeated runs except for
the timestamp and wall-clock fields.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from ..dynamics import DynamicsConfig
from ..errors import ConfigError

_DYNAMICS_KEYS = {f.name for f in dataclasses.fields(DynamicsConfig)}


@dataclass
class ExperimentConfig:
    """Everything a run depends on besides the code itself.

    ``seed`` left unset falls back to the experiment's registered default.
    """

    experiment: str
    seed: int | None = None
    dynamics: dict = field(default_factory=dict)
    model_params: dict = field(default_factory=dict)
    output_dir: str | None = None
    emit_samples: bool = False

    def __post_init__(self):
        unknown = set(self.dynamics) - _DYNAMICS_KEYS
        if unknown:
            raise ConfigError(
                f"unknown dynamics override keys {sorted(unknown)}; valid: {sorted(_DYNAMICS_KEYS)}"
            )
        if not isinstance(self.model_params, dict):
            raise ConfigError("model_params must be a mapping")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; valid: {sorted(allowed)}")
        if "experiment" not in data:
            raise ConfigError("config requires an 'experiment' name")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_json(self, path) -> None:
        _atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


@dataclass
class RunReport:
    """Outcome of one experiment run.

    ``comparisons`` is a list of dicts with keys ``metric``, ``kind``
    (one of <, <=, >, >=, ==, within_rel), ``target``, ``passed`` and
    ``provenance`` (an oracle name or a baseline metric).  Every compared
    metric must be present in ``metrics``.
    """

    experiment: str
    config: dict
    metrics: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    comparisons: list = field(default_factory=list)
    reference_values: dict = field(default_factory=dict)
    artifacts: list = field(default_factory=list)
    status: str = "ok"
    error: str | None = None
    wall_clock_seconds: float = 0.0
    timestamp: str = ""

    def __post_init__(self):
        for comp in self.comparisons:
            if comp["metric"] not in self.metrics:
                raise ConfigError(
                    f"comparison references metric {comp['metric']!r} missing from the report"
                )

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(c["passed"] for c in self.comparisons)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["passed"] = self.passed
        return out

    def to_json(self, path) -> None:
        _atomic_write(path, json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path) -> "RunReport":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        data.pop("passed", None)
        return cls(**data)


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def compare(metrics: dict, metric: str, kind: str, target: float, provenance: str, rel_tol: float = 0.0) -> dict:
    """Build one comparison record against a numeric target."""
    value = metrics[metric]
    if kind == "<":
        passed = value < target
    elif kind == "<=":
        passed = value <= target
    elif kind == ">":
        passed = value > target
    elif kind == ">=":
        passed = value >= target
    elif kind == "==":
        passed = value == target
    elif kind == "within_rel":
        passed = abs(value - target) <= rel_tol * abs(target)
    else:
        raise ConfigError(f"unknown comparison kind {kind!r}")
    out = {
        "metric": metric,
        "kind": kind,
        "target": target,
        "passed": bool(passed),
        "provenance": provenance,
    }
    if kind == "within_rel":
        out["rel_tol"] = rel_tol
    return out
