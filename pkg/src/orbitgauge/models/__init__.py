"""Model catalog: every kind ships its loss, gradient, exact symmetry
generators and seeded synthetic dataset behind one constructor."""

from __future__ import annotations

from ..errors import ConfigError
from . import attention, circulant, completion, linear, multichannel, pca, radial, relu, tensors
from .base import (
    DatasetSpec,
    ModelSpec,
    export_dataset,
    import_dataset,
    kaiming_like_init,
    model_rngs,
)

_BUILDERS = {
    "radial": radial.build,
    "fourier_sparse": linear.build_fourier,
    "tv_recon": linear.build_tv,
    "l1_hadamard": linear.build_l1,
    "block_group": linear.build_block,
    "multichannel": multichannel.build,
    "rank2_completion": completion.build,
    "attention_ts": attention.build,
    "relu2": relu.build,
    "circulant2": circulant.build_circulant2,
    "circulant_deep": circulant.build_circulant_deep,
    "cp_rank1": tensors.build_cp_rank1,
    "tt3": tensors.build_tt3,
    "pca": pca.build,
}

MODEL_KINDS = tuple(sorted(_BUILDERS))


def build_model(kind: str, params: dict | None = None, seed: int = 0):
    """Construct a model and its dataset. Returns (ModelSpec, DatasetSpec)."""
    try:
        builder = _BUILDERS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}; known kinds: {', '.join(MODEL_KINDS)}") from None
    spec = builder(params, seed)
    return spec, spec.dataset


def make_dataset(kind: str, params: dict | None = None, seed: int = 0) -> DatasetSpec:
    return build_model(kind, params, seed)[1]


def eval_invariants(model: ModelSpec, theta):
    """Evaluate the model's orbit-invariant coordinates at theta."""
    return model.invariants(theta)


__all__ = [
    "DatasetSpec",
    "ModelSpec",
    "MODEL_KINDS",
    "build_model",
    "make_dataset",
    "eval_invariants",
    "export_dataset",
    "import_dataset",
    "kaiming_like_init",
    "model_rngs",
]
