"""Backend selection for the trajectory inner loops.

The compiled extension accelerates the step loops whose arithmetic is
scalar-bound (radial Langevin, the linear regression family, masked
matrix factorization).  Both backends consume identical pre-drawn batch
and noise chunks, so they integrate the same discrete process; models
without a registered kernel, and noise modes a kernel does not cover,
always run on the generic python driver.

Set ORBITGAUGE_BACKEND=python|compiled|auto to pin the backend at import
time, or use :func:`use_backend` to switch temporarily.
"""

from __future__ import annotations

import os
from contextlib import contextmanager

import numpy as np

from .errors import ConfigError

try:
    from . import _kernels as _ext
except ImportError:  # extension not built; python driver covers everything
    _ext = None

_LAYOUT_CODES = {"plain": 0, "hadamard": 1, "grouped": 2}


def _initial_backend() -> str:
    requested = os.environ.get("ORBITGAUGE_BACKEND", "auto").strip().lower() or "auto"
    if requested == "auto":
        return "compiled" if _ext is not None else "python"
    if requested == "compiled":
        if _ext is None:
            raise ImportError(
                "ORBITGAUGE_BACKEND=compiled requested but the compiled extension is not importable"
            )
        return "compiled"
    if requested == "python":
        return "python"
    raise ConfigError(f"unknown ORBITGAUGE_BACKEND value {requested!r}; use auto, compiled or python")


_active = _initial_backend()


def active_backend() -> str:
    return _active


def compiled_available() -> bool:
    return _ext is not None


@contextmanager
def use_backend(name: str):
    """Temporarily pin the backend (for tests and benchmarks)."""
    global _active
    if name not in ("compiled", "python"):
        raise ConfigError(f"unknown backend {name!r}")
    if name == "compiled" and _ext is None:
        raise ConfigError("compiled backend requested but the extension is not importable")
    prev = _active
    _active = name
    try:
        yield
    finally:
        _active = prev


def compiled_chunk_fn(model, config, burn, thin, snap, needs_batch, needs_noise):
    """Return a compiled per-chunk stepping closure, or None to fall back."""
    if _active != "compiled" or _ext is None or model.fast_kernel is None:
        return None
    fk = model.fast_kernel
    family = fk.get("family")
    eta = float(config.eta)
    coef = float(config.noise_coefficient)
    burn = int(burn)
    thin = int(thin)

    if family == "radial" and not needs_batch and needs_noise:

        def chunk_fn(theta, idx, noise, done, cursor, K):
            return _ext.radial_chunk(theta, eta, coef, noise, done, burn, thin, snap, cursor)

        return chunk_fn

    if family == "linear" and needs_batch and not needs_noise:
        Xf = np.ascontiguousarray(fk["Xf"], dtype=float)
        y = np.ascontiguousarray(fk["y"], dtype=float)
        n_plain = int(fk["n_plain"])
        Xp = (
            np.ascontiguousarray(fk["Xp"], dtype=float)
            if n_plain
            else np.zeros((Xf.shape[0], 0), dtype=float)
        )
        gid = (
            np.ascontiguousarray(fk["gid"], dtype=np.int64)
            if fk["gid"] is not None
            else np.zeros(0, dtype=np.int64)
        )
        layout = _LAYOUT_CODES[fk["layout"]]
        d = int(fk["d"])
        G = int(fk["G"])

        def chunk_fn(theta, idx, noise, done, cursor, K):
            return _ext.linear_chunk(
                theta, eta, Xp, Xf, y, gid, layout, n_plain, d, G, idx, done, burn, thin, snap, cursor
            )

        return chunk_fn

    if family == "masked_mf" and needs_batch and not needs_noise:
        rows = np.ascontiguousarray(fk["rows"], dtype=np.int64)
        cols = np.ascontiguousarray(fk["cols"], dtype=np.int64)
        vals = np.ascontiguousarray(fk["vals"], dtype=float)
        n_rows = int(fk["n"])
        n_cols = int(fk["m"])
        r = int(fk["r"])

        def chunk_fn(theta, idx, noise, done, cursor, K):
            return _ext.masked_mf_chunk(
                theta, eta, rows, cols, vals, n_rows, n_cols, r, idx, done, burn, thin, snap, cursor
            )

        return chunk_fn

    return None
