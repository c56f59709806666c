"""Multi-output linear regression with three weight parameterizations.

The teacher map is a D x C matrix with exactly rank r and a strong spectral
gap.  The ``naive`` variant learns W directly, ``scalar`` factorizes it
elementwise as ``W = P * Q`` (elementwise-sparsity bias), and ``matrix``
factorizes it as ``W = P Q`` with full inner dimension (low-rank bias).
The matrix variant carries the GL symmetry ``(P, Q) -> (P A, A^{-1} Q)``;
its diagonal subalgebra is exposed as the generator basis.
"""

from __future__ import annotations

import numpy as np

from ..stats import norms_and_spectra
from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

DEFAULTS = {
    "d_in": 30,
    "d_out": 20,
    "rank": 2,
    "n_train": 200,
    "n_test": 1000,
    "noise_var": 0.04,
    "sigma1": 2.0,
    "sigma2": 0.2,
    "init_scale": 0.05,
    "variant": "matrix",
}


def _teacher(D, C, r, sigma1, sigma2, rng):
    """Exact rank-r teacher with prescribed leading singular values."""
    svals = np.geomspace(sigma1, sigma2, r) if r > 1 else np.array([sigma1])
    U0, _ = np.linalg.qr(rng.standard_normal((D, r)))
    V0, _ = np.linalg.qr(rng.standard_normal((C, r)))
    return (U0 * svals) @ V0.T, svals


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "multichannel")
    D, C, r = int(p["d_in"]), int(p["d_out"]), int(p["rank"])
    n = int(p["n_train"])
    data_rng, init_rng = model_rngs(seed)
    W_true, svals = _teacher(D, C, r, p["sigma1"], p["sigma2"], data_rng)
    X = data_rng.standard_normal((n, D))
    Y = X @ W_true + np.sqrt(p["noise_var"]) * data_rng.standard_normal((n, C))
    X_test = data_rng.standard_normal((int(p["n_test"]), D))
    Y_test = X_test @ W_true

    variant = p["variant"]
    k = min(D, C)
    if variant == "naive":
        init = np.zeros(D * C)
    elif variant == "scalar":
        init = p["init_scale"] * init_rng.standard_normal(2 * D * C)
    elif variant == "matrix":
        init = p["init_scale"] * init_rng.standard_normal(D * k + k * C)
    else:
        raise ValueError(
            f"multichannel variant must be 'naive', 'scalar' or 'matrix', got {variant!r}"
        )

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        if variant == "naive":
            W = theta.reshape(D, C)
            return {"W": W}
        if variant == "scalar":
            P = theta[: D * C].reshape(D, C)
            Q = theta[D * C :].reshape(D, C)
            return {"P": P, "Q": Q, "W": P * Q}
        P = theta[: D * k].reshape(D, k)
        Q = theta[D * k :].reshape(k, C)
        return {"P": P, "Q": Q, "W": P @ Q}

    def W_of(theta):
        return unpack(theta)["W"]

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def loss(theta, batch=None):
        idx = _idx(batch)
        R = X[idx] @ W_of(theta) - Y[idx]
        return float(np.sum(R * R)) / (2.0 * R.shape[0] * C)

    def grad(theta, batch=None):
        theta = np.asarray(theta, dtype=float)
        idx = _idx(batch)
        blocks = unpack(theta)
        R = X[idx] @ blocks["W"] - Y[idx]
        gW = X[idx].T @ R / (R.shape[0] * C)
        if variant == "naive":
            return gW.ravel()
        if variant == "scalar":
            return np.concatenate([(gW * blocks["Q"]).ravel(), (gW * blocks["P"]).ravel()])
        return np.concatenate(
            [(gW @ blocks["Q"].T).ravel(), (blocks["P"].T @ gW).ravel()]
        )

    gens, gauge, general_action = _structure(variant, D, C, k)

    def invariants(theta):
        return {"W": W_of(theta)}

    observables = {
        "effective_rank": lambda theta: float(
            norms_and_spectra(W_of(theta))["effective_rank"]
        ),
        "test_mse": lambda theta: float(
            np.mean((X_test @ W_of(theta) - Y_test) ** 2)
        ),
        "nuclear": lambda theta: float(norms_and_spectra(W_of(theta))["nuclear"]),
    }

    dataset = DatasetSpec(
        kind="multichannel",
        seed=seed,
        params={**p, "n_batchable": n},
        arrays={"X": X, "Y": Y, "W_true": W_true, "sigma_true": svals,
                "X_test": X_test, "Y_test": Y_test},
    )
    kernel = {
        "family": "multi",
        "layout": variant,
        "D": D,
        "C": C,
        "k": k,
        "X": X,
        "Y": Y,
    }
    return ModelSpec(
        kind="multichannel",
        variant=variant,
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=invariants,
        observables=observables,
        dataset=dataset,
        n_data=n,
        unpack=unpack,
        layout={"D": D, "C": C, "k": k, "variant": variant, "W": W_of},
        general_action=general_action,
        fast_kernel=kernel,
    )


def _structure(variant, D, C, k):
    """Generators plus metric-dual gauge for the factorized variants."""
    if variant == "naive":
        gens = GeneratorSet(m=0, xi=[], group_label="trivial",
                            action=lambda theta, a, t: np.array(theta, dtype=float))
        return gens, None, None

    if variant == "scalar":
        DC = D * C

        def xi_factory(a):
            def xi(theta):
                out = np.zeros_like(theta)
                out[a] = theta[a]
                out[DC + a] = -theta[DC + a]
                return out

            return xi

        def action(theta, a, t):
            out = np.array(theta, dtype=float)
            out[a] *= np.exp(t)
            out[DC + a] *= np.exp(-t)
            return out

        def chi(theta):
            return 0.5 * (theta[:DC] ** 2 - theta[DC:] ** 2)

        def grad_chi(theta):
            out = np.zeros((DC, 2 * DC))
            rows = np.arange(DC)
            out[rows, rows] = theta[:DC]
            out[rows, DC + rows] = -theta[DC:]
            return out

        gens = GeneratorSet(m=DC, xi=[xi_factory(a) for a in range(DC)],
                            group_label=f"R_+^{DC} elementwise rescaling",
                            action=action)
        return gens, GaugeMap(m=DC, chi=chi, grad_chi=grad_chi, mode="explicit"), None

    # matrix variant: diagonal subalgebra of GL(k) acting on columns of P
    # and rows of Q.
    Dk = D * k

    def xi_factory_m(i):
        def xi(theta):
            P = theta[:Dk].reshape(D, k)
            Q = theta[Dk:].reshape(k, C)
            out = np.zeros_like(theta)
            outP = out[:Dk].reshape(D, k)
            outQ = out[Dk:].reshape(k, C)
            outP[:, i] = P[:, i]
            outQ[i, :] = -Q[i, :]
            return out

        return xi

    def action_m(theta, i, t):
        out = np.array(theta, dtype=float)
        P = out[:Dk].reshape(D, k)
        Q = out[Dk:].reshape(k, C)
        P[:, i] *= np.exp(t)
        Q[i, :] *= np.exp(-t)
        return out

    def chi_m(theta):
        P = theta[:Dk].reshape(D, k)
        Q = theta[Dk:].reshape(k, C)
        return 0.5 * (np.sum(P * P, axis=0) - np.sum(Q * Q, axis=1))

    def grad_chi_m(theta):
        P = theta[:Dk].reshape(D, k)
        Q = theta[Dk:].reshape(k, C)
        out = np.zeros((k, theta.size))
        for i in range(k):
            rowP = np.zeros((D, k))
            rowP[:, i] = P[:, i]
            rowQ = np.zeros((k, C))
            rowQ[i, :] = -Q[i, :]
            out[i] = np.concatenate([rowP.ravel(), rowQ.ravel()])
        return out

    def general_action(theta, A):
        """Full GL(k) action (P, Q) -> (P A, A^{-1} Q)."""
        P = theta[:Dk].reshape(D, k)
        Q = theta[Dk:].reshape(k, C)
        return np.concatenate([(P @ A).ravel(), np.linalg.solve(A, Q).ravel()])

    gens = GeneratorSet(m=k, xi=[xi_factory_m(i) for i in range(k)],
                        group_label=f"GL({k}) diagonal", action=action_m)
    gauge = GaugeMap(m=k, chi=chi_m, grad_chi=grad_chi_m, mode="explicit")
    return gens, gauge, general_action
