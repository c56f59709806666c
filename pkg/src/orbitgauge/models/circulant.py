"""Circulant convolution chains with a linear readout.

The predictor ``f(x) = v . (w_L * ... * w_1 * x)`` (circular convolutions)
factors through the transfer function ``c(omega) = conj(vhat) prod whhat_l``
on the real FFT bins, so scaling any kernel bin by ``e^t`` while scaling
the matching readout bin by ``e^{-t}`` is an exact symmetry.  Generators
are indexed by (layer, bin); the exact group action is applied in the
frequency domain.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

CIRC2_DEFAULTS = {
    "n_signal": 16,
    "n_train": 64,
    "noise_var": 0.0,
    "init_scale": 0.3,
}

DEEP_DEFAULTS = {
    "n_signal": 16,
    "depth": 3,
    "n_train": 64,
    "noise_var": 0.0,
    "init_scale": 0.3,
}


def _bin_mask(n_bins, omega):
    mask = np.zeros(n_bins)
    mask[omega] = 1.0
    return mask


def _build_circulant(kind, params, seed, depth):
    defaults = CIRC2_DEFAULTS if kind == "circulant2" else DEEP_DEFAULTS
    p = merge_params(defaults, params, kind)
    N = int(p["n_signal"])
    L = int(p["depth"]) if "depth" in p else depth
    n = int(p["n_train"])
    M = N // 2 + 1
    data_rng, init_rng = model_rngs(seed)

    teacher_w = data_rng.standard_normal((L, N)) / np.sqrt(N)
    teacher_v = data_rng.standard_normal(N) / np.sqrt(N)
    X = data_rng.standard_normal((n, N))
    Xhat = np.fft.rfft(X, axis=1)

    chat = np.prod(np.fft.rfft(teacher_w, axis=1), axis=0)
    y = np.fft.irfft(chat[None, :] * Xhat, n=N, axis=1) @ teacher_v
    if p["noise_var"] > 0:
        y = y + np.sqrt(p["noise_var"]) * data_rng.standard_normal(n)

    init = p["init_scale"] * init_rng.standard_normal((L + 1) * N)

    def unpack(theta):
        theta = np.asarray(theta, dtype=float)
        return {"w": theta[: L * N].reshape(L, N), "v": theta[L * N :]}

    def _spectra(b):
        return np.fft.rfft(b["w"], axis=1), np.fft.rfft(b["v"])

    def _idx(batch):
        return slice(None) if batch is None else np.asarray(batch)

    def loss(theta, batch=None):
        b = unpack(theta)
        what, _ = _spectra(b)
        idx = _idx(batch)
        alast = np.fft.irfft(np.prod(what, axis=0)[None, :] * Xhat[idx], n=N, axis=1)
        r = alast @ b["v"] - y[idx]
        return float(r @ r) / (2.0 * r.size)

    def grad(theta, batch=None):
        b = unpack(theta)
        what, vhat = _spectra(b)
        idx = _idx(batch)
        Xh = Xhat[idx]
        # layer activations in the frequency domain
        ahat = np.empty((L + 1,) + Xh.shape, dtype=complex)
        ahat[0] = Xh
        for ell in range(L):
            ahat[ell + 1] = what[ell][None, :] * ahat[ell]
        alast = np.fft.irfft(ahat[L], n=N, axis=1)
        r = (alast @ b["v"] - y[idx]) / alast.shape[0]
        gv = alast.T @ r
        gw = np.empty((L, N))
        # suffix products of kernel spectra above each layer
        suffix = np.ones(M, dtype=complex)
        suffixes = np.empty((L, M), dtype=complex)
        for ell in range(L - 1, -1, -1):
            suffixes[ell] = suffix
            suffix = suffix * what[ell]
        for ell in range(L):
            ghat = np.conj(suffixes[ell]) * vhat
            acc = np.einsum("b,bm->m", r, np.conj(ahat[ell]))
            gw[ell] = np.fft.irfft(ghat * acc, n=N)
        return np.concatenate([gw.ravel(), gv])

    def xi_factory(ell, omega):
        mask = _bin_mask(M, omega)

        def xi(theta):
            b = unpack(theta)
            what, vhat = _spectra(b)
            out = np.zeros_like(theta)
            out[ell * N : (ell + 1) * N] = np.fft.irfft(mask * what[ell], n=N)
            out[L * N :] = -np.fft.irfft(mask * vhat, n=N)
            return out

        return xi

    def action(theta, a, t):
        ell, omega = divmod(a, M)
        b = unpack(theta)
        what, vhat = _spectra(b)
        what[ell, omega] *= np.exp(t)
        vhat[omega] *= np.exp(-t)
        w = np.fft.irfft(what, n=N, axis=1)
        return np.concatenate([w.ravel(), np.fft.irfft(vhat, n=N)])

    gens = GeneratorSet(
        m=L * M,
        xi=[xi_factory(ell, om) for ell in range(L) for om in range(M)],
        group_label="per-(layer, frequency) rescaling",
        action=action,
    )

    gauge = None
    if kind == "circulant2":
        # interior rfft bins represent two full-spectrum bins, DC and
        # Nyquist one each; the weights make grad(chi) equal xi exactly
        s = np.full(M, 2.0)
        s[0] = 1.0
        if N % 2 == 0:
            s[-1] = 1.0

        def chi(theta):
            b = unpack(theta)
            what, vhat = _spectra(b)
            return (s / (2.0 * N)) * (np.abs(what[0]) ** 2 - np.abs(vhat) ** 2)

        def grad_chi(theta):
            b = unpack(theta)
            what, vhat = _spectra(b)
            out = np.empty((M, theta.size))
            for om in range(M):
                mask = _bin_mask(M, om)
                out[om, :N] = np.fft.irfft(mask * what[0], n=N)
                out[om, N:] = -np.fft.irfft(mask * vhat, n=N)
            return out

        gauge = GaugeMap(m=M, chi=chi, grad_chi=grad_chi, mode="explicit")

    def transfer(theta):
        b = unpack(theta)
        what, vhat = _spectra(b)
        return np.conj(vhat) * np.prod(what, axis=0)

    def balance(theta):
        b = unpack(theta)
        what, vhat = _spectra(b)
        mags = np.vstack([np.abs(what), np.abs(vhat)[None, :]])
        c = np.abs(transfer(theta))
        target = c ** (1.0 / (L + 1))
        live = target > 1e-12
        dev = np.abs(mags[:, live] / target[None, live] - 1.0)
        gaps = np.abs(mags[:-1] - mags[-1])
        return {
            "bin_magnitudes": mags,
            "gaps": gaps[0] if L == 1 else gaps,
            "transfer_magnitude": c,
            "target_magnitude": target,
            "max_deviation": float(dev.max()) if dev.size else float("nan"),
        }

    dataset = DatasetSpec(
        kind=kind,
        seed=seed,
        params={**p, "depth": L, "n_batchable": n},
        arrays={"X": X, "y": y, "teacher_w": teacher_w, "teacher_v": teacher_v},
    )
    return ModelSpec(
        kind=kind,
        variant="",
        param_dim=init.size,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=lambda theta: {
            "transfer_real": transfer(theta).real,
            "transfer_imag": transfer(theta).imag,
        },
        observables={
            "balance_deviation": lambda theta: balance(theta)["max_deviation"],
        },
        dataset=dataset,
        n_data=n,
        unpack=unpack,
        layout={"n_signal": N, "depth": L, "n_bins": M},
        balance_metrics=balance,
        general_action=None,
        fast_kernel=None,
    )


def build_circulant2(params: dict | None, seed: int) -> ModelSpec:
    return _build_circulant("circulant2", params, seed, depth=1)


def build_circulant_deep(params: dict | None, seed: int) -> ModelSpec:
    return _build_circulant("circulant_deep", params, seed, depth=3)
