"""Sampling statistics: densities, KS distances, balance and norm summaries.

The experiments compare histograms of recorded trajectories against theory
curves and summarize learned parameters by norms, spectra and per-unit
balance gaps.  Everything here is deterministic given its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MIN_DENSITY_SAMPLES = 1000
DEFAULT_BINS = 80
EFFECTIVE_RANK_RTOL = 0.05
ACTIVE_GROUP_THRESHOLD = 0.2


@dataclass
class Histogram:
    """A normalized histogram (the density integrates to one)."""

    edges: np.ndarray
    density: np.ndarray
    counts: np.ndarray

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_csv(self, path) -> None:
        """Write (bin center, density) rows; parses back losslessly."""
        _write_two_column_csv(path, "center", self.centers, "density", self.density)


@dataclass
class DensityCurve:
    """A density sampled on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float).ravel()
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.grid.size != self.values.size:
            raise ValueError("grid and values must have equal length")
        if self.grid.size < 2:
            raise ValueError("curve needs at least two grid points")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("density values must be non-negative")

    def normalized(self) -> "DensityCurve":
        total = np.trapezoid(self.values, self.grid)
        if total <= 0:
            raise ValueError("curve has zero mass, cannot normalize")
        return DensityCurve(self.grid, self.values / total, self.label)

    def cdf(self) -> np.ndarray:
        """Cumulative trapezoid integral of the curve on its own grid."""
        inc = 0.5 * (self.values[1:] + self.values[:-1]) * np.diff(self.grid)
        return np.concatenate([[0.0], np.cumsum(inc)])

    def to_csv(self, path) -> None:
        _write_two_column_csv(path, "grid", self.grid, "density", self.values)


def _write_two_column_csv(path, name_a, col_a, name_b, col_b) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{name_a},{name_b}\n")
        for a, b in zip(col_a, col_b):
            fh.write(f"{float(a)!r},{float(b)!r}\n")


def empirical_density(samples: np.ndarray, bins: int = DEFAULT_BINS) -> Histogram:
    """Histogram density of scalar samples.

    Requires at least ``MIN_DENSITY_SAMPLES`` samples and ``bins >= 10``;
    a degenerate (zero-width) sample range is an error.
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < MIN_DENSITY_SAMPLES:
        raise ValueError(
            f"need at least {MIN_DENSITY_SAMPLES} samples, got {samples.size}"
        )
    if bins < 10:
        raise ValueError(f"need at least 10 bins, got {bins}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("samples must be finite")
    if samples.max() == samples.min():
        raise ValueError("sample range has zero width")
    counts, edges = np.histogram(samples, bins=bins)
    density, _ = np.histogram(samples, bins=bins, density=True)
    return Histogram(edges=edges, density=density, counts=counts)


def radial_theory_density(
    d: int, beta: float, grid: np.ndarray, corrected: bool = True
) -> DensityCurve:
    """Stationary radius density of the spherical-shell loss in dimension d.

    With loss ``(r-1)^2 / 2`` the stationary parameter density is the Gibbs
    weight ``exp(-beta (r-1)^2 / 2)``; integrating over the sphere of radius
    r multiplies it by the orbit volume factor ``r^{d-1}``.  ``corrected``
    selects the orbit-volume-corrected radial density; otherwise the naive
    Gibbs profile is returned.  Both are normalized on the given grid.
    Pass ``beta / sigma^2`` when the dynamics ran with noise scale sigma.
    """
    if d < 1:
        raise ValueError("dimension d must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    grid = np.asarray(grid, dtype=float).ravel()
    if np.any(grid < 0):
        raise ValueError("radii must be non-negative")
    with np.errstate(divide="ignore"):
        log_vals = -0.5 * beta * (grid - 1.0) ** 2
        if corrected:
            log_vals = log_vals + (d - 1) * np.log(grid)
    vals = np.exp(log_vals - np.max(log_vals[np.isfinite(log_vals)]))
    vals[~np.isfinite(vals)] = 0.0
    label = "corrected" if corrected else "naive"
    return DensityCurve(grid, vals, label=label).normalized()


def ks_distance(samples: np.ndarray, curve: DensityCurve) -> float:
    """Kolmogorov-Smirnov distance between samples and a density curve.

    The curve CDF is its cumulative trapezoid integral (renormalized to end
    at one); the statistic is the classical two-sided supremum of the
    difference between it and the sample ECDF, evaluated at the sample
    points.
    """
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    n = samples.size
    if n < MIN_DENSITY_SAMPLES:
        raise ValueError(f"need at least {MIN_DENSITY_SAMPLES} samples, got {n}")
    cdf_grid = curve.cdf()
    total = cdf_grid[-1]
    if total <= 0:
        raise ValueError("curve has zero mass")
    cdf_at = np.interp(samples, curve.grid, cdf_grid / total, left=0.0, right=1.0)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(upper - cdf_at), np.abs(cdf_at - lower))))


@dataclass
class ModeEnergies:
    """Per-mode gauge energies ``log(a_i + b_i)`` of a factorization.

    ``a`` and ``b`` are the descending eigenvalues of ``U^T U`` and
    ``V^T V``; modes with vanishing total weight are flagged singular and
    carry energy ``-inf``.
    """

    energies: np.ndarray
    a: np.ndarray
    b: np.ndarray
    singular: np.ndarray


def gauge_energy_modes(U: np.ndarray, V: np.ndarray) -> ModeEnergies:
    """Mode-resolved gauge energies of the factorization ``U V^T``."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1]:
        raise ValueError(f"incompatible factor shapes {U.shape} and {V.shape}")
    a = np.linalg.eigvalsh(U.T @ U)[::-1]
    b = np.linalg.eigvalsh(V.T @ V)[::-1]
    total = a + b
    singular = total <= 0.0
    energies = np.full(total.shape, -math.inf)
    energies[~singular] = np.log(total[~singular])
    return ModeEnergies(energies=energies, a=a, b=b, singular=singular)


def norms_and_spectra(
    W: np.ndarray,
    group_layout: np.ndarray | None = None,
    active_threshold: float = ACTIVE_GROUP_THRESHOLD,
    rank_rtol: float = EFFECTIVE_RANK_RTOL,
) -> dict:
    """Norm and spectrum summary of a weight vector or matrix.

    Returns a dict with ``l1``, ``l2``, and for matrices ``nuclear``,
    ``singular_values`` and ``effective_rank`` (the number of singular
    values at or above ``rank_rtol`` times the largest).  When
    ``group_layout`` assigns a group id to each coordinate of a vector, the
    per-group Euclidean norms and the count/fraction of groups with norm
    above ``active_threshold`` are included.
    """
    W = np.asarray(W, dtype=float)
    out: dict = {
        "l1": float(np.sum(np.abs(W))),
        "l2": float(np.linalg.norm(W.ravel())),
    }
    if W.ndim == 2:
        svals = np.linalg.svd(W, compute_uv=False)
        out["singular_values"] = svals
        out["nuclear"] = float(np.sum(svals))
        if svals.size and svals[0] > 0:
            out["effective_rank"] = int(np.sum(svals >= rank_rtol * svals[0]))
        else:
            out["effective_rank"] = 0
    elif W.ndim != 1:
        raise ValueError("W must be a vector or a matrix")
    if group_layout is not None:
        if W.ndim != 1:
            raise ValueError("group_layout applies to vectors only")
        gid = np.asarray(group_layout).ravel()
        if gid.size != W.size:
            raise ValueError("group_layout length must match W")
        groups = np.unique(gid)
        gnorms = np.array(
            [float(np.linalg.norm(W[gid == g])) for g in groups], dtype=float
        )
        out["group_norms"] = gnorms
        out["active_group_count"] = int(np.sum(gnorms > active_threshold))
        out["active_group_fraction"] = float(np.mean(gnorms > active_threshold))
    return out


def total_variation(theta: np.ndarray) -> float:
    """Total variation ``sum_i |theta_{i+1} - theta_i|`` of a 1-D signal."""
    theta = np.asarray(theta, dtype=float).ravel()
    if theta.size < 2:
        raise ValueError("total variation needs at least 2 coordinates")
    return float(np.sum(np.abs(np.diff(theta))))


def balance_metrics(model, theta) -> dict:
    """Named balance-gap metrics for the architectures with unit structure.

    ``model`` is a built model description (dispatch on ``model.kind``) or
    the literal string ``"deep_fc"``, in which case ``theta`` must be the
    list of layer weight matrices of a fully connected ReLU network and the
    metric is the per-hidden-neuron ratio of incoming row norm to outgoing
    column norm.
    """
    if isinstance(model, str):
        if model != "deep_fc":
            raise ValueError(f"unknown model kind {model!r}")
        mats = [np.asarray(m, dtype=float) for m in theta]
        if len(mats) < 2:
            raise ValueError("deep_fc needs at least two layers")
        ratios = []
        for k in range(len(mats) - 1):
            rows = np.linalg.norm(mats[k], axis=1)
            cols = np.linalg.norm(mats[k + 1], axis=0)
            if rows.size != cols.size:
                raise ValueError("layer shapes do not chain")
            ratios.append(rows / np.maximum(cols, 1e-300))
        ratios = np.concatenate(ratios)
        return {"ratios": ratios, "median_ratio": float(np.median(ratios))}
    if getattr(model, "balance_metrics", None) is None:
        raise ValueError(f"model kind {getattr(model, 'kind', model)!r} has no balance metrics")
    return model.balance_metrics(np.asarray(theta, dtype=float))
