"""Subspace fitting with an orthogonally-degenerate projector loss.

The reconstruction loss depends on ``W`` only through the projector
``P = W W^T``, so right multiplication by any rotation of the r columns
leaves it unchanged.  Generators are the images of a skew-symmetric
basis; because the group is compact, no gauge is attached.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

DEFAULTS = {
    "d": 6,
    "r": 3,
    "n_samples": 300,
    "evals": (2.5, 1.8, 1.2, 0.7, 0.4, 0.2),
    "init_scale": 0.4,
}


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "pca")
    d, r = int(p["d"]), int(p["r"])
    evals = np.asarray(p["evals"], dtype=float)
    if evals.shape != (d,):
        raise ValueError(f"evals must have length d={d}, got shape {evals.shape}")
    data_rng, init_rng = model_rngs(seed)

    X = data_rng.standard_normal((int(p["n_samples"]), d)) * np.sqrt(evals)[None, :]
    S = X.T @ X
    init = p["init_scale"] * init_rng.standard_normal(d * r)

    def unpack(theta):
        return {"W": np.asarray(theta, dtype=float).reshape(d, r)}

    def loss(theta, batch=None):
        W = unpack(theta)["W"]
        P = W @ W.T
        return float(np.trace(S) - 2.0 * np.sum(S * P) + np.sum((S @ P) * P))

    def grad(theta, batch=None):
        W = unpack(theta)["W"]
        P = W @ W.T
        return (-4.0 * (S @ W) + 2.0 * (S @ P + P @ S) @ W).ravel()

    pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]

    def xi_factory(i, j):
        def xi(theta):
            W = unpack(theta)["W"]
            out = np.zeros((d, r))
            out[:, i] = -W[:, j] / np.sqrt(2.0)
            out[:, j] = W[:, i] / np.sqrt(2.0)
            return out.ravel()

        return xi

    def action(theta, a, t):
        i, j = pairs[a]
        W = unpack(theta)["W"].copy()
        phi = t / np.sqrt(2.0)
        ci, cj = W[:, i].copy(), W[:, j].copy()
        W[:, i] = np.cos(phi) * ci - np.sin(phi) * cj
        W[:, j] = np.sin(phi) * ci + np.cos(phi) * cj
        return W.ravel()

    gens = GeneratorSet(
        m=len(pairs),
        xi=[xi_factory(i, j) for i, j in pairs],
        group_label=f"SO({r}) column rotations",
        action=action,
    )

    evecs = np.linalg.eigh(S)[1][:, ::-1][:, :r]
    P_top = evecs @ evecs.T

    def subspace_error(theta):
        W = unpack(theta)["W"]
        return float(np.linalg.norm(W @ W.T - P_top))

    dataset = DatasetSpec(
        kind="pca",
        seed=seed,
        params={**p, "evals": [float(x) for x in evals], "n_batchable": 0},
        arrays={"X": X},
    )
    return ModelSpec(
        kind="pca",
        variant="",
        param_dim=d * r,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=None,
        invariants=lambda theta: {"projector": (unpack(theta)["W"] @ unpack(theta)["W"].T).ravel()},
        observables={
            "subspace_error": subspace_error,
            "column_gram_offdiag": lambda theta: float(
                np.linalg.norm(
                    (lambda G: G - np.diag(np.diag(G)))(
                        unpack(theta)["W"].T @ unpack(theta)["W"]
                    )
                )
            ),
        },
        dataset=dataset,
        n_data=0,
        unpack=unpack,
        layout={"d": d, "r": r},
        balance_metrics=None,
        general_action=None,
        fast_kernel=None,
    )
