"""Single-head softmax attention in a teacher-student setup.

The predictor ``x -> softmax(x W_Q (x W_K)^T / sqrt(d_head)) (x W_V) W_O``
depends on the query/key matrices only through ``W_Q W_K^T``, so
``(W_Q, W_K) -> (W_Q A, W_K A^{-T})`` is an exact GL(d_head) symmetry.
The teacher is drawn at half the standard init variance, the student at
full variance: the student therefore reaches the zero-loss orbit at an
unbalanced representative, and the balance of query/key column norms is
the observable of interest.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, kaiming_like_init, merge_params, model_rngs

DEFAULTS = {
    "seq_len": 8,
    "d_model": 16,
    "d_head": 8,
    "n_train": 512,
    "teacher_variance_scale": 0.5,
    "student_variance_scale": 1.0,
}


def _forward(X, WQ, WK, WV, WO, h):
    Q = X @ WQ
    K = X @ WK
    V = X @ WV
    S = Q @ K.swapaxes(-1, -2) / np.sqrt(h)
    S = S - S.max(axis=-1, keepdims=True)
    E = np.exp(S)
    A = E / E.sum(axis=-1, keepdims=True)
    Z = A @ V
    return (Z @ WO), (Q, K, V, A, Z)


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "attention_ts")
    L, d, h = int(p["seq_len"]), int(p["d_model"]), int(p["d_head"])
    n = int(p["n_train"])
    data_rng, init_rng = model_rngs(seed)

    teacher = {
        "WQ": kaiming_like_init((d, h), d, data_rng, p["teacher_variance_scale"]),
        "WK": kaiming_like_init((d, h), d, data_rng, p["teacher_variance_scale"]),
        "WV": kaiming_like_init((d, h), d, data_rng, p["teacher_variance_scale"]),
        "WO": kaiming_like_init((h, d), h, data_rng, p["teacher_variance_scale"]),
    }
    X = data_rng.standard_normal((n, L, d))
    Y, _ = _forward(X, teacher["WQ"], teacher["WK"], teacher["WV"], teacher["WO"], h)

    init = np.concatenate([
        kaiming_like_init((d, h), d, init_rng, p["student_variance_scale"]).ravel(),
        kaiming_like_init((d, h), d, init_rng, p["student_variance_scale"]).ravel(),
        kaiming_like_init((d, h), d, init_rng, p["student_variance_scale"]).ravel(),
        kaiming_like_init((h, d), h, init_rng, p["student_variance_scale"]).ravel(),
    ])

    dh = d * h

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        return {
            "WQ": theta[:dh].reshape(d, h),
            "WK": theta[dh : 2 * dh].reshape(d, h),
            "WV": theta[2 * dh : 3 * dh].reshape(d, h),
            "WO": theta[3 * dh :].reshape(h, d),
        }

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def loss(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        out, _ = _forward(X[idx], b["WQ"], b["WK"], b["WV"], b["WO"], h)
        diff = out - Y[idx]
        return float(np.sum(diff * diff)) / (2.0 * diff.shape[0] * L * d)

    def grad(theta, batch=None):
        b = unpack(theta)
        idx = _idx(batch)
        Xb, Yb = X[idx], Y[idx]
        out, (Q, K, V, A, Z) = _forward(Xb, b["WQ"], b["WK"], b["WV"], b["WO"], h)
        G = (out - Yb) / (out.shape[0] * L * d)
        dWO = np.einsum("blh,bld->hd", Z, G)
        dZ = G @ b["WO"].T
        dA = np.einsum("blh,bmh->blm", dZ, V)
        dV = np.einsum("blm,blh->bmh", A, dZ)
        dWV = np.einsum("bld,blh->dh", Xb, dV)
        dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) / np.sqrt(h)
        dQ = np.einsum("blm,bmh->blh", dS, K)
        dK = np.einsum("blm,blh->bmh", dS, Q)
        dWQ = np.einsum("bld,blh->dh", Xb, dQ)
        dWK = np.einsum("bld,blh->dh", Xb, dK)
        return np.concatenate([dWQ.ravel(), dWK.ravel(), dWV.ravel(), dWO.ravel()])

    def xi_factory(i):
        def xi(theta):
            b = unpack(theta)
            out = np.zeros_like(theta)
            gQ = out[:dh].reshape(d, h)
            gK = out[dh : 2 * dh].reshape(d, h)
            gQ[:, i] = b["WQ"][:, i]
            gK[:, i] = -b["WK"][:, i]
            return out

        return xi

    def action(theta, i, t):
        out = np.array(theta, dtype=float)
        out[:dh].reshape(d, h)[:, i] *= np.exp(t)
        out[dh : 2 * dh].reshape(d, h)[:, i] *= np.exp(-t)
        return out

    def general_action(theta, A):
        b = unpack(theta)
        WQ = b["WQ"] @ A
        WK = b["WK"] @ np.linalg.inv(A).T
        return np.concatenate([WQ.ravel(), WK.ravel(), b["WV"].ravel(), b["WO"].ravel()])

    gens = GeneratorSet(
        m=h,
        xi=[xi_factory(i) for i in range(h)],
        group_label=f"GL({h}) diagonal on (W_Q, W_K)",
        action=action,
    )

    def chi(theta):
        b = unpack(theta)
        return 0.5 * (np.sum(b["WQ"] ** 2, axis=0) - np.sum(b["WK"] ** 2, axis=0))

    def grad_chi(theta):
        b = unpack(theta)
        out = np.zeros((h, theta.size))
        for i in range(h):
            gQ = np.zeros((d, h))
            gQ[:, i] = b["WQ"][:, i]
            gK = np.zeros((d, h))
            gK[:, i] = -b["WK"][:, i]
            out[i, : 2 * dh] = np.concatenate([gQ.ravel(), gK.ravel()])
        return out

    gauge = GaugeMap(m=h, chi=chi, grad_chi=grad_chi, mode="explicit")

    def balance(theta):
        b = unpack(theta)
        qn = np.linalg.norm(b["WQ"], axis=0)
        kn = np.linalg.norm(b["WK"], axis=0)
        gaps = np.abs(qn - kn)
        return {
            "q_norms": qn,
            "k_norms": kn,
            "gaps": gaps,
            "max_gap": float(gaps.max()),
            "gap_ratio": float(gaps.max() / qn.mean()),
        }

    observables = {
        "gap_ratio": lambda theta: balance(theta)["gap_ratio"],
        "max_gap": lambda theta: balance(theta)["max_gap"],
    }

    dataset = DatasetSpec(
        kind="attention_ts",
        seed=seed,
        params={**p, "n_batchable": n},
        arrays={"X": X.reshape(n, L * d), "Y": Y.reshape(n, L * d),
                "teacher_WQ": teacher["WQ"], "teacher_WK": teacher["WK"],
                "teacher_WV": teacher["WV"], "teacher_WO": teacher["WO"]},
    )
    return ModelSpec(
        kind="attention_ts",
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=lambda theta: {
            "qk_product": unpack(theta)["WQ"] @ unpack(theta)["WK"].T,
            "WV": unpack(theta)["WV"],
            "WO": unpack(theta)["WO"],
        },
        observables=observables,
        dataset=dataset,
        n_data=n,
        unpack=unpack,
        layout={"L": L, "d_model": d, "d_head": h},
        balance_metrics=balance,
        general_action=general_action,
        fast_kernel=None,
    )
