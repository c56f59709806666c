"""Single-output linear regressions with factorized reparameterizations.

Four catalog kinds share this machinery, differing in design matrix and
weight layout:

* ``fourier_sparse`` -- cosine-feature regression; the ``pq`` variant
  factorizes the spectrum elementwise, biasing toward spectral sparsity.
* ``tv_recon`` -- compressed-sensing reconstruction; the ``biased`` variant
  writes the signal as an offset plus the cumulative sum of an elementwise
  product, biasing toward small total variation.
* ``l1_hadamard`` -- plain sparse regression via ``w = u * v``.
* ``block_group`` -- per-group scale times direction ``w_g = s_g t_g``,
  biasing toward group sparsity.

Each elementwise or per-group rescaling ``(u_k, v_k) -> (a u_k, v_k / a)``
leaves the predictor invariant; the generators and their exact actions are
exposed for the gauge machinery, together with the metric-dual gauge maps
``chi_k = (u_k^2 - v_k^2) / 2`` whose slices are the balanced loci.
"""

from __future__ import annotations

import numpy as np

from ..stats import ACTIVE_GROUP_THRESHOLD, total_variation
from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs


def _linear_model(
    kind: str,
    variant: str,
    layout: str,
    X_fact: np.ndarray,
    y: np.ndarray,
    *,
    X_plain: np.ndarray | None = None,
    gid: np.ndarray | None = None,
    init: np.ndarray,
    dataset: DatasetSpec,
    observables: dict,
    invariant_name: str,
    extras: dict | None = None,
) -> ModelSpec:
    """Assemble a ModelSpec for one member of the linear family."""
    n, d = X_fact.shape
    n_plain = 0 if X_plain is None else X_plain.shape[1]
    G = 0
    if layout == "grouped":
        gid = np.asarray(gid)
        G = int(gid.max()) + 1

    def split(theta):
        c = theta[:n_plain]
        rest = theta[n_plain:]
        if layout == "plain":
            return c, (rest,)
        if layout == "hadamard":
            return c, (rest[:d], rest[d:])
        return c, (rest[:G], rest[G:])

    def weights(theta):
        _, fac = split(theta)
        if layout == "plain":
            return fac[0]
        if layout == "hadamard":
            return fac[0] * fac[1]
        return fac[0][gid] * fac[1]

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        c, fac = split(theta)
        out = {"w": weights(theta)}
        if n_plain:
            out["offset"] = c
        if layout == "hadamard":
            out["u"], out["v"] = fac
        elif layout == "grouped":
            out["s"], out["t"] = fac
        return out

    def predict(theta, idx):
        c, _ = split(theta)
        pred = X_fact[idx] @ weights(theta)
        if n_plain:
            pred = pred + X_plain[idx] @ c
        return pred

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def loss(theta, batch=None):
        idx = _idx(batch)
        r = predict(np.asarray(theta, dtype=float), idx) - y[idx]
        return float(r @ r) / (2.0 * r.size)

    def grad(theta, batch=None):
        theta = np.asarray(theta, dtype=float)
        idx = _idx(batch)
        r = predict(theta, idx) - y[idx]
        B = r.size
        gw = X_fact[idx].T @ r / B
        out = np.zeros_like(theta)
        if n_plain:
            out[:n_plain] = X_plain[idx].T @ r / B
        _, fac = split(theta)
        if layout == "plain":
            out[n_plain:] = gw
        elif layout == "hadamard":
            u, v = fac
            out[n_plain : n_plain + d] = gw * v
            out[n_plain + d :] = gw * u
        else:
            s, t = fac
            out[n_plain : n_plain + G] = np.bincount(gid, weights=gw * t, minlength=G)
            out[n_plain + G :] = gw * s[gid]
        return out

    gens, gauge = _scaling_structure(layout, n_plain, d, G, gid)

    def invariants(theta):
        out = {invariant_name: weights(np.asarray(theta, dtype=float))}
        if n_plain:
            out["offset"] = np.asarray(theta, dtype=float)[:n_plain].copy()
        return out

    kernel = {
        "family": "linear",
        "layout": layout,
        "n_plain": n_plain,
        "d": d,
        "G": G,
        "Xp": X_plain,
        "Xf": X_fact,
        "y": y,
        "gid": gid,
    }
    return ModelSpec(
        kind=kind,
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
        layout={"layout": layout, "n_plain": n_plain, "d": d, "G": G,
                "weights": weights, **(extras or {})},
        fast_kernel=kernel,
    )


def _scaling_structure(layout, n_plain, d, G, gid):
    """Generators, exact actions and metric-dual gauge for one layout."""
    if layout == "plain":
        gens = GeneratorSet(m=0, xi=[], group_label="trivial",
                            action=lambda theta, a, t: np.array(theta, dtype=float))
        return gens, None

    if layout == "hadamard":
        def xi_factory(k):
            def xi(theta):
                out = np.zeros_like(theta)
                out[n_plain + k] = theta[n_plain + k]
                out[n_plain + d + k] = -theta[n_plain + d + k]
                return out

            return xi

        def action(theta, k, t):
            out = np.array(theta, dtype=float)
            out[n_plain + k] *= np.exp(t)
            out[n_plain + d + k] *= np.exp(-t)
            return out

        def chi(theta):
            u = theta[n_plain : n_plain + d]
            v = theta[n_plain + d :]
            return 0.5 * (u * u - v * v)

        def grad_chi(theta):
            out = np.zeros((d, theta.size))
            cols = np.arange(d)
            out[cols, n_plain + cols] = theta[n_plain : n_plain + d]
            out[cols, n_plain + d + cols] = -theta[n_plain + d :]
            return out

        gens = GeneratorSet(
            m=d,
            xi=[xi_factory(k) for k in range(d)],
            group_label=f"R_+^{d} elementwise rescaling",
            action=action,
        )
        return gens, GaugeMap(m=d, chi=chi, grad_chi=grad_chi, mode="explicit")

    # grouped: one scaling per group g, acting on (s_g, t_g).
    members = [np.nonzero(gid == g)[0] for g in range(G)]

    def xi_factory_g(g):
        def xi(theta):
            out = np.zeros_like(theta)
            out[n_plain + g] = theta[n_plain + g]
            idx = n_plain + G + members[g]
            out[idx] = -theta[idx]
            return out

        return xi

    def action_g(theta, g, t):
        out = np.array(theta, dtype=float)
        out[n_plain + g] *= np.exp(t)
        idx = n_plain + G + members[g]
        out[idx] *= np.exp(-t)
        return out

    def chi_g(theta):
        s = theta[n_plain : n_plain + G]
        t = theta[n_plain + G :]
        tnorm2 = np.bincount(gid, weights=t * t, minlength=G)
        return 0.5 * (s * s - tnorm2)

    def grad_chi_g(theta):
        out = np.zeros((G, theta.size))
        for g in range(G):
            out[g, n_plain + g] = theta[n_plain + g]
            idx = n_plain + G + members[g]
            out[g, idx] = -theta[idx]
        return out

    gens = GeneratorSet(
        m=G,
        xi=[xi_factory_g(g) for g in range(G)],
        group_label=f"R_+^{G} per-group rescaling",
        action=action_g,
    )
    return gens, GaugeMap(m=G, chi=chi_g, grad_chi=grad_chi_g, mode="explicit")


# ---------------------------------------------------------------------------
# fourier_sparse

FOURIER_DEFAULTS = {
    "n_freq": 64,
    "n_train": 30,
    "noise_var": 0.01,
    "n_support": 3,
    "amp_low": 1.0,
    "amp_high": 2.0,
    "n_test": 2000,
    "init_scale": 0.05,
    "variant": "pq",
}


def build_fourier(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(FOURIER_DEFAULTS, params, "fourier_sparse")
    D, n = int(p["n_freq"]), int(p["n_train"])
    data_rng, init_rng = model_rngs(seed)
    t = data_rng.uniform(0.0, 1.0, n)
    freqs = np.arange(D)
    X = np.cos(2.0 * np.pi * t[:, None] * freqs[None, :])
    support = np.sort(data_rng.choice(np.arange(1, D), size=int(p["n_support"]),
                                      replace=False))
    w_true = np.zeros(D)
    amps = data_rng.uniform(p["amp_low"], p["amp_high"], support.size)
    signs = data_rng.choice([-1.0, 1.0], support.size)
    w_true[support] = amps * signs
    y_clean = X @ w_true
    y = y_clean + np.sqrt(p["noise_var"]) * data_rng.standard_normal(n)
    t_test = np.linspace(0.0, 1.0, int(p["n_test"]))
    X_test = np.cos(2.0 * np.pi * t_test[:, None] * freqs[None, :])
    y_test = X_test @ w_true

    variant = p["variant"]
    if variant == "pq":
        layout = "hadamard"
        init = p["init_scale"] * init_rng.standard_normal(2 * D)
    elif variant == "naive":
        layout = "plain"
        init = np.zeros(D)
    else:
        raise ValueError(f"fourier_sparse variant must be 'pq' or 'naive', got {variant!r}")

    dataset = DatasetSpec(
        kind="fourier_sparse",
        seed=seed,
        params={**{k: v for k, v in p.items()}, "n_batchable": n},
        arrays={"t": t, "X": X, "y": y, "w_true": w_true, "y_clean": y_clean,
                "t_test": t_test, "y_test": y_test},
    )

    def w_of(theta):
        theta = np.asarray(theta, dtype=float)
        return theta if variant == "naive" else theta[:D] * theta[D:]

    observables = {
        "spectral_l1": lambda theta: float(np.sum(np.abs(w_of(theta)))),
        "test_mse": lambda theta: float(np.mean((X_test @ w_of(theta) - y_test) ** 2)),
    }
    return _linear_model(
        "fourier_sparse", variant, layout, X, y,
        init=init, dataset=dataset, observables=observables,
        invariant_name="w",
        extras={"X_test": X_test, "y_test": y_test, "w_true": w_true},
    )


# ---------------------------------------------------------------------------
# tv_recon

TV_DEFAULTS = {
    "d": 200,
    "n_meas": 60,
    "noise_var": 0.025,
    "n_jumps": 3,
    "jump_low": 0.5,
    "jump_high": 2.0,
    "init_scale": 0.05,
    "variant": "biased",
}


def build_tv(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(TV_DEFAULTS, params, "tv_recon")
    d, m = int(p["d"]), int(p["n_meas"])
    data_rng, init_rng = model_rngs(seed)
    jumps = np.sort(data_rng.choice(np.arange(5, d - 5), size=int(p["n_jumps"]),
                                    replace=False))
    sizes = data_rng.uniform(p["jump_low"], p["jump_high"], jumps.size)
    sizes *= data_rng.choice([-1.0, 1.0], jumps.size)
    omega_true = np.full(d, data_rng.uniform(-1.0, 1.0))
    for pos, sz in zip(jumps, sizes):
        omega_true[pos:] += sz
    Q = data_rng.normal(0.0, np.sqrt(1.0 / m), size=(m, d))
    y = Q @ omega_true + np.sqrt(p["noise_var"]) * data_rng.standard_normal(m)

    variant = p["variant"]
    dataset = DatasetSpec(
        kind="tv_recon",
        seed=seed,
        params={**p, "n_batchable": m},
        arrays={"Q": Q, "y": y, "omega_true": omega_true,
                "jump_positions": jumps.astype(float), "jump_sizes": sizes},
    )

    if variant == "biased":
        # omega(theta) = c0 * 1 + cumsum(p * q); fold the cumulative-sum map
        # into the design so predictions stay a plain matrix product.
        X_plain = (Q @ np.ones(d))[:, None]
        X_fact = np.cumsum(Q[:, ::-1], axis=1)[:, ::-1]
        init = np.concatenate([[0.0], p["init_scale"] * init_rng.standard_normal(2 * d)])

        def omega_of(theta):
            theta = np.asarray(theta, dtype=float)
            return theta[0] + np.cumsum(theta[1 : 1 + d] * theta[1 + d :])

        model = _linear_model(
            "tv_recon", variant, "hadamard", X_fact, y,
            X_plain=X_plain, init=init, dataset=dataset,
            observables={},
            invariant_name="increments",
            extras={"omega_true": omega_true},
        )
    elif variant == "naive":
        init = np.zeros(d)

        def omega_of(theta):
            return np.asarray(theta, dtype=float)

        model = _linear_model(
            "tv_recon", variant, "plain", Q, y,
            init=init, dataset=dataset, observables={},
            invariant_name="omega",
            extras={"omega_true": omega_true},
        )
    else:
        raise ValueError(f"tv_recon variant must be 'biased' or 'naive', got {variant!r}")

    model.observables = {
        "tv": lambda theta: total_variation(omega_of(theta)),
        "recon_mse": lambda theta: float(np.mean((omega_of(theta) - omega_true) ** 2)),
    }
    model.layout["omega"] = omega_of
    return model


# ---------------------------------------------------------------------------
# l1_hadamard

L1_DEFAULTS = {
    "d": 200,
    "n_train": 80,
    "support_frac": 0.1,
    "w_std": 3.0,
    "noise_var": 0.0,
    "n_test": 400,
    "init_scale": 0.03,
    "variant": "uv",
}


def build_l1(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(L1_DEFAULTS, params, "l1_hadamard")
    d, n = int(p["d"]), int(p["n_train"])
    data_rng, init_rng = model_rngs(seed)
    X = data_rng.standard_normal((n, d))
    k = int(round(p["support_frac"] * d))
    support = np.sort(data_rng.choice(d, size=k, replace=False))
    w_true = np.zeros(d)
    w_true[support] = p["w_std"] * data_rng.standard_normal(k)
    y = X @ w_true
    if p["noise_var"] > 0:
        y = y + np.sqrt(p["noise_var"]) * data_rng.standard_normal(n)
    X_test = data_rng.standard_normal((int(p["n_test"]), d))
    y_test = X_test @ w_true

    variant = p["variant"]
    if variant == "uv":
        layout = "hadamard"
        init = p["init_scale"] * init_rng.standard_normal(2 * d)
    elif variant == "naive":
        layout = "plain"
        init = np.zeros(d)
    else:
        raise ValueError(f"l1_hadamard variant must be 'uv' or 'naive', got {variant!r}")

    dataset = DatasetSpec(
        kind="l1_hadamard",
        seed=seed,
        params={**p, "n_batchable": n},
        arrays={"X": X, "y": y, "w_true": w_true, "X_test": X_test, "y_test": y_test},
    )

    def w_of(theta):
        theta = np.asarray(theta, dtype=float)
        return theta if variant == "naive" else theta[:d] * theta[d:]

    observables = {
        "l1": lambda theta: float(np.sum(np.abs(w_of(theta)))),
        "test_mse": lambda theta: float(np.mean((X_test @ w_of(theta) - y_test) ** 2)),
    }
    return _linear_model(
        "l1_hadamard", variant, layout, X, y,
        init=init, dataset=dataset, observables=observables,
        invariant_name="w",
        extras={"w_true": w_true},
    )


# ---------------------------------------------------------------------------
# block_group

BLOCK_DEFAULTS = {
    "n_groups": 40,
    "group_size": 5,
    "n_train": 100,
    "n_active": 5,
    "w_std": 3.6,
    "noise_var": 0.0,
    "n_test": 400,
    "init_scale": 0.05,
    "variant": "st",
}


def build_block(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(BLOCK_DEFAULTS, params, "block_group")
    G, gs = int(p["n_groups"]), int(p["group_size"])
    d = G * gs
    n = int(p["n_train"])
    data_rng, init_rng = model_rngs(seed)
    gid = np.repeat(np.arange(G), gs)
    X = data_rng.standard_normal((n, d))
    active = np.sort(data_rng.choice(G, size=int(p["n_active"]), replace=False))
    w_true = np.zeros(d)
    for g in active:
        w_true[gid == g] = p["w_std"] * data_rng.standard_normal(gs)
    y = X @ w_true
    if p["noise_var"] > 0:
        y = y + np.sqrt(p["noise_var"]) * data_rng.standard_normal(n)
    X_test = data_rng.standard_normal((int(p["n_test"]), d))
    y_test = X_test @ w_true

    variant = p["variant"]
    if variant == "st":
        layout = "grouped"
        init = np.concatenate([
            p["init_scale"] * init_rng.standard_normal(G),
            p["init_scale"] * init_rng.standard_normal(d),
        ])
    elif variant == "naive":
        layout = "plain"
        init = np.zeros(d)
    else:
        raise ValueError(f"block_group variant must be 'st' or 'naive', got {variant!r}")

    dataset = DatasetSpec(
        kind="block_group",
        seed=seed,
        params={**p, "n_batchable": n},
        arrays={"X": X, "y": y, "w_true": w_true, "gid": gid.astype(float),
                "X_test": X_test, "y_test": y_test},
    )

    def w_of(theta):
        theta = np.asarray(theta, dtype=float)
        if variant == "naive":
            return theta
        return theta[:G][gid] * theta[G:]

    def active_fraction(theta):
        w = w_of(theta)
        gnorms = np.sqrt(np.bincount(gid, weights=w * w, minlength=G))
        return float(np.mean(gnorms > ACTIVE_GROUP_THRESHOLD))

    observables = {
        "active_group_fraction": active_fraction,
        "test_mse": lambda theta: float(np.mean((X_test @ w_of(theta) - y_test) ** 2)),
        "l1": lambda theta: float(np.sum(np.abs(w_of(theta)))),
    }
    return _linear_model(
        "block_group", variant, layout, X, y,
        gid=gid, init=init, dataset=dataset, observables=observables,
        invariant_name="w",
        extras={"w_true": w_true, "gid_array": gid},
    )
