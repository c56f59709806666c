"""Low-rank matrix completion via a two-factor model ``M = U V^T``.

The target is an exactly rank-r matrix with prescribed singular values,
observed on a fixed random subset of entries.  The model shares the GL(r)
symmetry ``(U, V) -> (U A, V A^{-T})``; its diagonal subalgebra is the
generator basis, and the per-mode gauge energies ``log(a_i + b_i)`` are the
quantities whose stationary values the completion experiment measures.
"""

from __future__ import annotations

import numpy as np

from ..stats import gauge_energy_modes
from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

DEFAULTS = {
    "n": 20,
    "m": 20,
    "rank": 2,
    "mask_frac": 0.4,
    "sigma_star": (3.0, 1.0),
    # factor norms conserved up to noise: a small init keeps the frozen
    # norm gap well below the balanced energies 2 sigma_i, a large one
    # pins the mode energies away from them
    "init_scale": 0.05,
    "init_imbalance": 2.0,
}


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "rank2_completion")
    n, m, r = int(p["n"]), int(p["m"]), int(p["rank"])
    sigma_star = np.asarray(p["sigma_star"], dtype=float)
    if sigma_star.size != r:
        raise ValueError(f"sigma_star must have {r} entries, got {sigma_star.size}")
    data_rng, init_rng = model_rngs(seed)
    Qo, _ = np.linalg.qr(data_rng.standard_normal((n, r)))
    Po, _ = np.linalg.qr(data_rng.standard_normal((m, r)))
    M_true = (Qo * sigma_star) @ Po.T
    n_obs = int(round(p["mask_frac"] * n * m))
    flat = data_rng.choice(n * m, size=n_obs, replace=False)
    rows, cols = np.unravel_index(np.sort(flat), (n, m))
    vals = M_true[rows, cols]

    alpha = float(p["init_imbalance"])
    scale = float(p["init_scale"])
    U0 = scale * alpha * init_rng.standard_normal((n, r))
    V0 = scale / alpha * init_rng.standard_normal((m, r))
    init = np.concatenate([U0.ravel(), V0.ravel()])

    nr = n * r

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        U = theta[:nr].reshape(n, r)
        V = theta[nr:].reshape(m, r)
        return {"U": U, "V": V, "M": U @ V.T}

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def loss(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        resid = np.einsum("er,er->e", b["U"][rows[idx]], b["V"][cols[idx]]) - vals[idx]
        return float(resid @ resid) / (2.0 * resid.size)

    def grad(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        rb, cb = rows[idx], cols[idx]
        resid = np.einsum("er,er->e", b["U"][rb], b["V"][cb]) - vals[idx]
        B = resid.size
        gU = np.zeros((n, r))
        gV = np.zeros((m, r))
        np.add.at(gU, rb, resid[:, None] * b["V"][cb] / B)
        np.add.at(gV, cb, resid[:, None] * b["U"][rb] / B)
        return np.concatenate([gU.ravel(), gV.ravel()])

    def xi_factory(i):
        def xi(theta):
            b = unpack(theta)
            out = np.zeros_like(theta)
            outU = out[:nr].reshape(n, r)
            outV = out[nr:].reshape(m, r)
            outU[:, i] = b["U"][:, i]
            outV[:, i] = -b["V"][:, i]
            return out

        return xi

    def action(theta, i, t):
        out = np.array(theta, dtype=float)
        out[:nr].reshape(n, r)[:, i] *= np.exp(t)
        out[nr:].reshape(m, r)[:, i] *= np.exp(-t)
        return out

    def general_action(theta, A):
        b = unpack(theta)
        return np.concatenate(
            [(b["U"] @ A).ravel(), np.linalg.solve(A, b["V"].T).T.ravel()]
        )

    gens = GeneratorSet(
        m=r,
        xi=[xi_factory(i) for i in range(r)],
        group_label=f"GL({r}) diagonal",
        action=action,
    )

    def chi(theta):
        b = unpack(theta)
        return 0.5 * (np.sum(b["U"] ** 2, axis=0) - np.sum(b["V"] ** 2, axis=0))

    def grad_chi(theta):
        b = unpack(theta)
        out = np.zeros((r, theta.size))
        for i in range(r):
            gU = np.zeros((n, r))
            gU[:, i] = b["U"][:, i]
            gV = np.zeros((m, r))
            gV[:, i] = -b["V"][:, i]
            out[i] = np.concatenate([gU.ravel(), gV.ravel()])
        return out

    gauge = GaugeMap(m=r, chi=chi, grad_chi=grad_chi, mode="explicit")

    def mode_energy(theta, i):
        b = unpack(theta)
        modes = gauge_energy_modes(b["U"], b["V"])
        return float(modes.energies[i])

    observables = {
        f"energy_{i + 1}": (lambda theta, i=i: mode_energy(theta, i)) for i in range(r)
    }

    def imbalance(theta):
        b = unpack(theta)
        modes = gauge_energy_modes(b["U"], b["V"])
        with np.errstate(divide="ignore"):
            return float(np.max(np.abs(np.log(modes.a) - np.log(modes.b))))

    observables["imbalance"] = imbalance

    dataset = DatasetSpec(
        kind="rank2_completion",
        seed=seed,
        params={**{k: (list(v) if isinstance(v, tuple) else v) for k, v in p.items()},
                "n_batchable": n_obs},
        arrays={"M_true": M_true, "rows": rows.astype(float),
                "cols": cols.astype(float), "vals": vals,
                "sigma_star": sigma_star},
    )
    kernel = {
        "family": "masked_mf",
        "rows": rows.astype(np.int64),
        "cols": cols.astype(np.int64),
        "vals": vals,
        "n": n,
        "m": m,
        "r": r,
    }
    return ModelSpec(
        kind="rank2_completion",
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=lambda theta: {"M": unpack(theta)["M"]},
        observables=observables,
        dataset=dataset,
        n_data=n_obs,
        unpack=unpack,
        layout={"n": n, "m": m, "r": r},
        general_action=general_action,
        fast_kernel=kernel,
    )
