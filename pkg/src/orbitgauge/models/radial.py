"""Rotation-invariant shell loss: the minimal continuous-symmetry example.

The loss ``(|theta| - 1)^2 / 2`` in dimension d is invariant under SO(d);
its zero set is the unit sphere, an orbit of dimension d-1.  The sampled
radius distribution picks up the orbit volume factor ``r^{d-1}`` on top of
the naive Gibbs weight, which is what the radial experiment measures.
"""

from __future__ import annotations

import numpy as np

from ..symmetry import GaugeMap, GeneratorSet
from .base import DatasetSpec, ModelSpec, merge_params, model_rngs

DEFAULTS = {"d": 10, "init_radius": 1.0}


def build(params: dict | None, seed: int) -> ModelSpec:
    p = merge_params(DEFAULTS, params, "radial")
    d = int(p["d"])
    if d < 2:
        raise ValueError("radial model needs d >= 2")
    _, init_rng = model_rngs(seed)
    direction = init_rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    init = float(p["init_radius"]) * direction

    def loss(theta, batch=None):
        r = np.linalg.norm(theta)
        return 0.5 * (r - 1.0) ** 2

    def grad(theta, batch=None):
        theta = np.asarray(theta, dtype=float)
        r = np.linalg.norm(theta)
        if r == 0.0:
            return np.zeros_like(theta)
        return (1.0 - 1.0 / r) * theta

    # Rotations in the (0, j) coordinate planes: a generic-point basis of
    # the orbit tangent space (independent whenever theta_0 != 0).
    def xi_factory(j):
        def xi(theta):
            out = np.zeros_like(theta)
            out[0] = -theta[j]
            out[j] = theta[0]
            return out

        return xi

    def action(theta, a, t):
        j = a + 1
        out = np.array(theta, dtype=float)
        c, s = np.cos(t), np.sin(t)
        out[0] = c * theta[0] - s * theta[j]
        out[j] = s * theta[0] + c * theta[j]
        return out

    gens = GeneratorSet(
        m=d - 1,
        xi=[xi_factory(j) for j in range(1, d)],
        group_label=f"SO({d})",
        action=action,
    )

    gauge = None
    if d == 2:
        # Polar-angle chart: an explicit gauge orthogonal to the orbits.
        def chi(theta):
            return np.array([np.arctan2(theta[1], theta[0])])

        def grad_chi(theta):
            r2 = theta[0] ** 2 + theta[1] ** 2
            return np.array([[-theta[1] / r2, theta[0] / r2]])

        gauge = GaugeMap(m=1, chi=chi, grad_chi=grad_chi, mode="explicit")

    def invariants(theta):
        return {"radius": float(np.linalg.norm(theta))}

    dataset = DatasetSpec(kind="radial", seed=seed, params={**p, "n_batchable": 0})
    return ModelSpec(
        kind="radial",
        variant="",
        param_dim=d,
        init=init,
        loss=loss,
        grad=grad,
        generators=gens,
        gauge=gauge,
        invariants=invariants,
        observables={"radius": lambda theta: float(np.linalg.norm(theta))},
        dataset=dataset,
        n_data=0,
        unpack=lambda theta: {"theta": np.asarray(theta, dtype=float)},
        layout={"d": d},
        fast_kernel={"family": "radial"},
    )
