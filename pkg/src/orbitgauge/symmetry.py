"""Continuous-symmetry geometry: orbit Gram matrices, gauge maps, and checks.

A model with a continuous symmetry group G carries, at every parameter
point ``theta``, a set of tangent generator fields ``xi_a(theta)`` spanning
the group orbit through ``theta``.  Two square matrices built from them
control the stationary statistics of noisy gradient dynamics:

* the orbit Gram matrix ``H_ab = <xi_a, xi_b>``, and
* for a gauge-fixing map ``chi`` (one scalar constraint per generator), the
  pairing ``M_ia = <grad chi_i, xi_a>`` together with the constraint Gram
  matrix ``G = M H^{-1} M^T``.

On a gauge slice that is orthogonal to the orbits, ``G`` reduces to the
quadratic form whose log-determinant enters the effective loss.  Two named
conventions are supported by :func:`gauge_correction`: the balanced gauge,
where ``G = H``, and the unit-Faddeev-Popov gauge, where ``G = H^{-1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import OrbitDegenerateError, OrbitGaugeError

# Relative eigenvalue cutoff below which the orbit Gram matrix is treated
# as singular. No pseudo-inverse is substituted; degeneracy is an error.
GRAM_EIG_RTOL = 1e-12


@dataclass
class GeneratorSet:
    """Evaluators for the symmetry generators of one model.

    Attributes
    ----------
    m : int
        Number of generators.
    xi : sequence of callables
        ``xi[a](theta) -> ndarray`` returns the tangent vector of generator
        ``a`` at ``theta``, in the model's flat parameter layout.
    group_label : str
        Human-readable group name, e.g. ``"SO(2)"`` or ``"GL(2) diagonal"``.
    action : callable
        ``action(theta, a, t) -> ndarray`` applies the one-parameter group
        element ``exp(t * u_a)`` to ``theta`` exactly (used by invariance
        checks; must not be a linearization).
    """

    m: int
    xi: Sequence[Callable[[np.ndarray], np.ndarray]]
    group_label: str = ""
    action: Callable[[np.ndarray, int, float], np.ndarray] | None = None

    def tangent_frame(self, theta: np.ndarray) -> np.ndarray:
        """Stack all generator vectors at ``theta`` into an (m, n) array."""
        theta = np.asarray(theta, dtype=float)
        return np.stack([np.asarray(f(theta), dtype=float).ravel() for f in self.xi])


@dataclass
class GaugeMap:
    """A gauge-fixing map ``chi`` with one constraint per generator.

    ``chi(theta)`` returns the m constraint values and ``grad_chi(theta)``
    their gradients as an (m, n) array.  ``mode`` records which convention
    the map realizes: ``"explicit"`` for a concrete chart, ``"balanced"``
    or ``"unit_fp"`` for the two named conventions.
    """

    m: int
    chi: Callable[[np.ndarray], np.ndarray]
    grad_chi: Callable[[np.ndarray], np.ndarray]
    mode: str = "explicit"

    def __post_init__(self):
        if self.mode not in ("explicit", "balanced", "unit_fp"):
            raise ValueError(f"unknown gauge mode {self.mode!r}")


def orbit_gram(theta: np.ndarray, gens: GeneratorSet) -> np.ndarray:
    """Gram matrix ``H_ab = <xi_a(theta), xi_b(theta)>`` of the generators.

    Always returns the full (m, m) symmetric matrix; a singular result is
    legal here (degeneracy only errors where an inverse is required).
    """
    frame = gens.tangent_frame(theta)
    gram = frame @ frame.T
    return 0.5 * (gram + gram.T)


def fp_matrix(theta: np.ndarray, gens: GeneratorSet, gauge: GaugeMap) -> np.ndarray:
    """Pairing ``M_ia = <grad chi_i(theta), xi_a(theta)>``."""
    if gauge.m != gens.m:
        raise ValueError(
            f"gauge fixes {gauge.m} constraints but the generator set has {gens.m}"
        )
    frame = gens.tangent_frame(theta)
    grads = np.asarray(gauge.grad_chi(np.asarray(theta, dtype=float)), dtype=float)
    grads = grads.reshape(gauge.m, -1)
    if grads.shape[1] != frame.shape[1]:
        raise ValueError(
            f"grad_chi has {grads.shape[1]} columns, parameters have {frame.shape[1]}"
        )
    return grads @ frame.T

def _inverse_via_eigh(gram: np.ndarray, context: str) -> np.ndarray:
    """Invert a symmetric PSD Gram matrix, erroring when degenerate."""
    evals, evecs = np.linalg.eigh(gram)
    cutoff = GRAM_EIG_RTOL * float(evals.max(initial=0.0))
    bad = np.nonzero(evals <= cutoff)[0]
    if evals.size and bad.size:
        raise OrbitDegenerateError(
            f"{context}: orbit Gram matrix is singular "
            f"(eigenvalue {evals[bad[0]]:.3e} at index {int(bad[0])}, "
            f"cutoff {cutoff:.3e})"
        )
    return (evecs / evals) @ evecs.T


def _logdet_via_eigh(gram: np.ndarray, context: str) -> float:
    evals = np.linalg.eigvalsh(gram)
    cutoff = GRAM_EIG_RTOL * float(evals.max(initial=0.0))
    bad = np.nonzero(evals <= cutoff)[0]
    if evals.size == 0:
        return 0.0
    if bad.size:
        raise OrbitDegenerateError(
            f"{context}: orbit Gram matrix is singular "
            f"(eigenvalue {evals[bad[0]]:.3e} at index {int(bad[0])}, "
            f"cutoff {cutoff:.3e})"
        )
    return float(np.sum(np.log(evals)))


def constraint_gram(theta: np.ndarray, gens: GeneratorSet, gauge: GaugeMap) -> np.ndarray:
    """Constraint Gram matrix ``G = M H^{-1} M^T`` at ``theta``.

    Raises :class:`OrbitDegenerateError` when the orbit Gram matrix has an
    eigenvalue at or below the relative cutoff ``GRAM_EIG_RTOL``.
    """
    gram = orbit_gram(theta, gens)
    inv = _inverse_via_eigh(gram, "constraint_gram")
    pairing = fp_matrix(theta, gens, gauge)
    if gauge.mode == "explicit":
        svals = np.linalg.svd(pairing, compute_uv=False)
        if svals.size == 0 or svals[-1] <= GRAM_EIG_RTOL * svals[0]:
            raise OrbitGaugeError(
                "constraint_gram: gauge slice is not transversal to the "
                f"orbit (smallest FP singular value {svals.min(initial=0.0):.3e})"
            )
    out = pairing @ inv @ pairing.T
    return 0.5 * (out + out.T)


def gauge_correction(
    theta: np.ndarray,
    gens: GeneratorSet,
    gauge_mode: str,
    sigma: float,
    beta: float,
) -> float:
    """Gauge term ``(sigma^2 / 2 beta) * log det G_chi`` of the effective loss.

    ``gauge_mode="balanced"`` uses ``G = H`` (the orbit Gram matrix itself);
    ``gauge_mode="unit_fp"`` uses ``G = H^{-1}``, flipping the sign of the
    log-determinant.  The two conventions weight orbit volume oppositely and
    are both kept, matching their respective derivations.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    logdet = _logdet_via_eigh(orbit_gram(theta, gens), "gauge_correction")
    if gauge_mode == "balanced":
        pass
    elif gauge_mode == "unit_fp":
        logdet = -logdet
    else:
        raise ValueError(f"gauge_mode must be 'balanced' or 'unit_fp', got {gauge_mode!r}")
    return float(sigma**2 / (2.0 * beta) * logdet)


def check_invariance(model, gens: GeneratorSet, theta: np.ndarray, t: float = 1.0) -> float:
    """Worst relative loss change under the exact group action.

    Returns ``max_a |L(exp(t u_a) theta) - L(theta)| / (1 + |L(theta)|)``
    using the full-batch loss.  Requires ``gens.action``.
    """
    if gens.action is None:
        raise ValueError("generator set has no exact group action to check")
    theta = np.asarray(theta, dtype=float)
    base = float(model.loss(theta))
    worst = 0.0
    for a in range(gens.m):
        moved = gens.action(theta, a, t)
        worst = max(worst, abs(float(model.loss(moved)) - base) / (1.0 + abs(base)))
    return worst


def check_drift_orthogonality(model, gens: GeneratorSet, theta: np.ndarray) -> float:
    """Worst cosine between the full-batch gradient and any generator.

    Returns ``max_a |<grad L, xi_a>| / (|grad L| |xi_a| + 1e-30)``; exact
    symmetries of smooth losses keep this at round-off level.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.asarray(model.grad(theta), dtype=float).ravel()
    gnorm = float(np.linalg.norm(grad))
    worst = 0.0
    for a in range(gens.m):
        xi = np.asarray(gens.xi[a](theta), dtype=float).ravel()
        denom = gnorm * float(np.linalg.norm(xi)) + 1e-30
        worst = max(worst, abs(float(grad @ xi)) / denom)
    return worst
