"""Two-layer ReLU network trained with logistic loss on two Gaussian blobs.

Each hidden neuron carries its own positive rescaling symmetry
``(w_j, v_j) -> (c w_j, v_j / c)``; the products ``v_j w_j`` are the
invariant coordinates.  Separable data makes the logistic loss grow the
norms of active neurons without bound, while gradient flow conserves
``|w_j|^2 - v_j^2``, so the ratio ``|w_j| / |v_j|`` of every active
neuron is driven toward one.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GeneratorSet
from .base import DatasetSpec, ModelSpec, kaiming_like_init, merge_params, model_rngs

DEFAULTS = {
    "width": 32,
    "n_train": 256,
    "d_in": 2,
    "cluster_mean": 2.0,
    "cluster_std": 0.7,
    "init_scale": 0.1,
    "active_fraction": 0.1,
}


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "relu2")
    width, n, d = int(p["width"]), int(p["n_train"]), int(p["d_in"])
    data_rng, init_rng = model_rngs(seed)

    half = n // 2
    mu = float(p["cluster_mean"]) * np.ones(d)
    X = np.concatenate([
        mu + p["cluster_std"] * data_rng.standard_normal((half, d)),
        -mu + p["cluster_std"] * data_rng.standard_normal((n - half, d)),
    ])
    y = np.concatenate([np.ones(half), np.zeros(n - half)])

    # init std set by init_scale directly, not by fan-in, so the conserved
    # gaps |w_j|^2 - v_j^2 start small compared to the trained norms
    W0 = p["init_scale"] * init_rng.standard_normal((width, d))
    v0 = p["init_scale"] * init_rng.standard_normal(width)
    init = np.concatenate([W0.ravel(), v0])

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        return {"W": theta[: width * d].reshape(width, d), "v": theta[width * d :]}

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def _logits(b, Xb):
        pre = Xb @ b["W"].T
        return np.maximum(pre, 0.0) @ b["v"], pre

    def loss(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        z, _ = _logits(b, X[idx])
        return float(np.mean(np.logaddexp(0.0, z) - y[idx] * z))

    def grad(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        Xb, yb = X[idx], y[idx]
        z, pre = _logits(b, Xb)
        act = np.maximum(pre, 0.0)
        r = (1.0 / (1.0 + np.exp(-z)) - yb) / Xb.shape[0]
        gv = act.T @ r
        gW = ((pre > 0) * b["v"][None, :] * r[:, None]).T @ Xb
        return np.concatenate([gW.ravel(), gv])

    def xi_factory(j):
        def xi(theta):
            b = unpack(theta)
            out = np.zeros_like(theta)
            out[j * d : (j + 1) * d] = b["W"][j]
            out[width * d + j] = -b["v"][j]
            return out

        return xi

    def action(theta, j, t):
        out = np.array(theta, dtype=float)
        out[j * d : (j + 1) * d] *= np.exp(t)
        out[width * d + j] *= np.exp(-t)
        return out

    gens = GeneratorSet(
        m=width,
        xi=[xi_factory(j) for j in range(width)],
        group_label="per-neuron positive rescaling",
        action=action,
    )

    active_fraction = float(p["active_fraction"])

    def balance(theta):
        b = unpack(theta)
        wn = np.linalg.norm(b["W"], axis=1)
        vn = np.abs(b["v"])
        included = vn >= 1e-8
        pre = X @ b["W"].T
        active = ((pre > 0).mean(axis=0) >= active_fraction) & included
        ratios = np.full(width, np.nan)
        ratios[included] = wn[included] / vn[included]
        return {
            "w_norms": wn,
            "v_abs": vn,
            "ratios": ratios,
            "excluded_count": int((~included).sum()),
            "active": active,
            "active_count": int(active.sum()),
            "median_active_ratio": float(np.median(ratios[active])) if active.any() else float("nan"),
        }

    def accuracy(theta):
        b = unpack(theta)
        z, _ = _logits(b, X)
        return float(np.mean((z > 0) == (y > 0.5)))

    dataset = DatasetSpec(
        kind="relu2",
        seed=seed,
        params={**p, "n_batchable": n},
        arrays={"X": X, "y": y},
    )
    return ModelSpec(
        kind="relu2",
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=None,
        invariants=lambda theta: {
            "neuron_products": unpack(theta)["v"][:, None] * unpack(theta)["W"],
        },
        observables={
            "median_active_ratio": lambda theta: balance(theta)["median_active_ratio"],
            "accuracy": accuracy,
        },
        dataset=dataset,
        n_data=n,
        unpack=unpack,
        layout={"width": width, "d_in": d},
        balance_metrics=balance,
        general_action=None,
        fast_kernel=None,
    )
