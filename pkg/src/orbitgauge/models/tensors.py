"""Rank-1 CP and order-3 tensor-train factorizations.

Both carry continuous rescaling symmetries along their internal
contractions: the CP factors admit a two-parameter group
``(u, v, w) -> (a u, b v, w / (a b))`` and the TT cores admit independent
GL factors on each bond, realized here through their diagonal
one-parameter subgroups.  Gauges are the metric duals of the generators,
so the constraint gradients coincide with the tangent frame exactly.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

CP_DEFAULTS = {
    "dims": (6, 5, 4),
    "teacher_scale": 2.0,
    "init_scale": 0.3,
}

TT_DEFAULTS = {
    "dims": (4, 5, 6),
    "ranks": (2, 2),
    "init_scale": 0.3,
}


def build_cp_rank1(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(CP_DEFAULTS, params, "cp_rank1")
    d1, d2, d3 = (int(x) for x in p["dims"])
    data_rng, init_rng = model_rngs(seed)

    def _unit(k):
        x = data_rng.standard_normal(k)
        return x / np.linalg.norm(x)

    T_star = float(p["teacher_scale"]) * np.einsum("i,j,k->ijk", _unit(d1), _unit(d2), _unit(d3))
    init = p["init_scale"] * init_rng.standard_normal(d1 + d2 + d3)

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        return {"u": theta[:d1], "v": theta[d1 : d1 + d2], "w": theta[d1 + d2 :]}

    def _tensor(b):
        return np.einsum("i,j,k->ijk", b["u"], b["v"], b["w"])

    def loss(theta, batch=None):
        R = _tensor(unpack(theta)) - T_star
        return 0.5 * float(np.sum(R * R))

    def grad(theta, batch=None):
        b = unpack(theta)
        R = _tensor(b) - T_star
        gu = np.einsum("ijk,j,k->i", R, b["v"], b["w"])
        gv = np.einsum("ijk,i,k->j", R, b["u"], b["w"])
        gw = np.einsum("ijk,i,j->k", R, b["u"], b["v"])
        return np.concatenate([gu, gv, gw])

    def xi_factory(a):
        def xi(theta):
            b = unpack(theta)
            out = np.zeros_like(theta)
            if a == 0:
                out[:d1] = b["u"]
            else:
                out[d1 : d1 + d2] = b["v"]
            out[d1 + d2 :] = -b["w"]
            return out

        return xi

    def action(theta, a, t):
        out = np.array(theta, dtype=float)
        if a == 0:
            out[:d1] *= np.exp(t)
        else:
            out[d1 : d1 + d2] *= np.exp(t)
        out[d1 + d2 :] *= np.exp(-t)
        return out

    gens = GeneratorSet(
        m=2,
        xi=[xi_factory(0), xi_factory(1)],
        group_label="CP factor rescaling",
        action=action,
    )

    def chi(theta):
        b = unpack(theta)
        nw = b["w"] @ b["w"]
        return 0.5 * np.array([b["u"] @ b["u"] - nw, b["v"] @ b["v"] - nw])

    def grad_chi(theta):
        return np.vstack([xi_factory(0)(theta), xi_factory(1)(theta)])

    gauge = GaugeMap(m=2, chi=chi, grad_chi=grad_chi, mode="explicit")

    def balance(theta):
        b = unpack(theta)
        norms = np.array([np.linalg.norm(b["u"]), np.linalg.norm(b["v"]), np.linalg.norm(b["w"])])
        energy = float(np.prod(norms))
        target = energy ** (1.0 / 3.0) if energy > 0 else float("nan")
        return {
            "factor_norms": norms,
            "energy": energy,
            "S": float(np.prod(norms**2)),
            "max_deviation": float(np.max(np.abs(norms / target - 1.0))) if energy > 0 else float("nan"),
        }

    dataset = DatasetSpec(
        kind="cp_rank1",
        seed=seed,
        params={**p, "dims": [d1, d2, d3], "n_batchable": 0},
        arrays={"T_star": T_star},
    )
    return ModelSpec(
        kind="cp_rank1",
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=lambda theta: {"tensor": _tensor(unpack(theta)).ravel()},
        observables={
            "energy": lambda theta: balance(theta)["energy"],
            "S": lambda theta: balance(theta)["S"],
            "balance_deviation": lambda theta: balance(theta)["max_deviation"],
        },
        dataset=dataset,
        n_data=0,
        unpack=unpack,
        layout={"dims": (d1, d2, d3)},
        balance_metrics=balance,
        general_action=None,
        fast_kernel=None,
    )


def build_tt3(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(TT_DEFAULTS, params, "tt3")
    n1, n2, n3 = (int(x) for x in p["dims"])
    r1, r2 = (int(x) for x in p["ranks"])
    data_rng, init_rng = model_rngs(seed)

    G1s = data_rng.standard_normal((n1, r1))
    G2s = data_rng.standard_normal((r1, n2, r2))
    G3s = data_rng.standard_normal((r2, n3))
    T_star = np.einsum("ia,ajb,bk->ijk", G1s, G2s, G3s)

    sizes = (n1 * r1, r1 * n2 * r2, r2 * n3)
    init = p["init_scale"] * init_rng.standard_normal(sum(sizes))

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        return {
            "G1": theta[: sizes[0]].reshape(n1, r1),
            "G2": theta[sizes[0] : sizes[0] + sizes[1]].reshape(r1, n2, r2),
            "G3": theta[sizes[0] + sizes[1] :].reshape(r2, n3),
        }

    def _tensor(b):
        return np.einsum("ia,ajb,bk->ijk", b["G1"], b["G2"], b["G3"])

    def loss(theta, batch=None):
        R = _tensor(unpack(theta)) - T_star
        return 0.5 * float(np.sum(R * R))

    def grad(theta, batch=None):
        b = unpack(theta)
        R = _tensor(b) - T_star
        g1 = np.einsum("ijk,ajb,bk->ia", R, b["G2"], b["G3"])
        g2 = np.einsum("ijk,ia,bk->ajb", R, b["G1"], b["G3"])
        g3 = np.einsum("ijk,ia,ajb->bk", R, b["G1"], b["G2"])
        return np.concatenate([g1.ravel(), g2.ravel(), g3.ravel()])

    def xi_factory(a):
        def xi(theta):
            b = unpack(theta)
            d1 = np.zeros((n1, r1))
            d2 = np.zeros((r1, n2, r2))
            d3 = np.zeros((r2, n3))
            if a < r1:
                d1[:, a] = b["G1"][:, a]
                d2[a] = -b["G2"][a]
            else:
                j = a - r1
                d2[:, :, j] = b["G2"][:, :, j]
                d3[j] = -b["G3"][j]
            return np.concatenate([d1.ravel(), d2.ravel(), d3.ravel()])

        return xi

    def action(theta, a, t):
        b = unpack(theta)
        G1, G2, G3 = b["G1"].copy(), b["G2"].copy(), b["G3"].copy()
        if a < r1:
            G1[:, a] *= np.exp(t)
            G2[a] *= np.exp(-t)
        else:
            j = a - r1
            G2[:, :, j] *= np.exp(t)
            G3[j] *= np.exp(-t)
        return np.concatenate([G1.ravel(), G2.ravel(), G3.ravel()])

    gens = GeneratorSet(
        m=r1 + r2,
        xi=[xi_factory(a) for a in range(r1 + r2)],
        group_label="per-bond diagonal rescaling",
        action=action,
    )

    def chi(theta):
        b = unpack(theta)
        out = np.empty(r1 + r2)
        for a in range(r1):
            out[a] = 0.5 * (b["G1"][:, a] @ b["G1"][:, a] - np.sum(b["G2"][a] ** 2))
        for j in range(r2):
            out[r1 + j] = 0.5 * (np.sum(b["G2"][:, :, j] ** 2) - b["G3"][j] @ b["G3"][j])
        return out

    def grad_chi(theta):
        return np.vstack([xi_factory(a)(theta) for a in range(r1 + r2)])

    gauge = GaugeMap(m=r1 + r2, chi=chi, grad_chi=grad_chi, mode="explicit")

    def general_action(theta, A):
        b = unpack(theta)
        G1 = b["G1"] @ A
        G2 = np.tensordot(np.linalg.inv(A), b["G2"], axes=1)
        return np.concatenate([G1.ravel(), G2.ravel(), b["G3"].ravel()])

    def balance(theta):
        b = unpack(theta)
        gram1 = b["G1"].T @ b["G1"]
        mat2 = b["G2"].reshape(r1, n2 * r2)
        gram2 = mat2 @ mat2.T
        return {
            "bond1_gram_left": gram1,
            "bond1_gram_right": gram2,
            "bond1_residual": float(np.linalg.norm(gram1 - gram2)),
        }

    dataset = DatasetSpec(
        kind="tt3",
        seed=seed,
        params={**p, "dims": [n1, n2, n3], "ranks": [r1, r2], "n_batchable": 0},
        arrays={"T_star": T_star, "G1_star": G1s, "G2_star": G2s.reshape(r1, n2 * r2), "G3_star": G3s},
    )
    return ModelSpec(
        kind="tt3",
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=lambda theta: {"tensor": _tensor(unpack(theta)).ravel()},
        observables={
            "bond1_residual": lambda theta: balance(theta)["bond1_residual"],
        },
        dataset=dataset,
        n_data=0,
        unpack=unpack,
        layout={"dims": (n1, n2, n3), "ranks": (r1, r2)},
        balance_metrics=balance,
        general_action=general_action,
        fast_kernel=None,
    )
