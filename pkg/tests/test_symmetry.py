"""Geometric objects on symmetry orbits: hand examples and identities."""

import math

import numpy as np
import pytest

from orbitgauge import symmetry
from orbitgauge.errors import OrbitDegenerateError, OrbitGaugeError
from orbitgauge.models import build_model
from orbitgauge.symmetry import (
    GaugeMap,
    GeneratorSet,
    check_drift_orthogonality,
    check_invariance,
    constraint_gram,
    fp_matrix,
    gauge_correction,
    orbit_gram,
)

RNG = np.random.default_rng(7)


def rotation_gens():
    """SO(2) acting on the plane."""

    def xi(theta):
        return np.array([-theta[1], theta[0]])

    def action(theta, a, t):
        c, s = math.cos(t), math.sin(t)
        return np.array([c * theta[0] - s * theta[1],
                         s * theta[0] + c * theta[1]])

    return GeneratorSet(m=1, xi=[xi], group_label="SO(2)", action=action)


def scaling_gens():
    """Coordinate scaling (u, v) -> (e^t u, e^-t v)."""

    def xi(theta):
        return np.array([theta[0], -theta[1]])

    def action(theta, a, t):
        return np.array([math.exp(t) * theta[0], math.exp(-t) * theta[1]])

    return GeneratorSet(m=1, xi=[xi], group_label="scaling", action=action)


def angle_gauge():
    def chi(theta):
        return np.array([math.atan2(theta[1], theta[0])])

    def grad_chi(theta):
        r2 = theta[0] ** 2 + theta[1] ** 2
        return np.array([[-theta[1] / r2, theta[0] / r2]])

    return GaugeMap(m=1, chi=chi, grad_chi=grad_chi, mode="explicit")


def hyperbola_gauge():
    """Metric-dual gauge chi = (u^2 - v^2)/2 of the scaling symmetry."""

    def chi(theta):
        return np.array([0.5 * (theta[0] ** 2 - theta[1] ** 2)])

    def grad_chi(theta):
        return np.array([[theta[0], -theta[1]]])

    return GaugeMap(m=1, chi=chi, grad_chi=grad_chi, mode="explicit")


class TestOrbitGram:
    def test_rotation_at_axis_point(self):
        H = orbit_gram(np.array([3.0, 0.0]), rotation_gens())
        assert H.shape == (1, 1)
        assert H[0, 0] == pytest.approx(9.0)

    def test_scaling_hand_value(self):
        H = orbit_gram(np.array([2.0, 3.0]), scaling_gens())
        assert H[0, 0] == pytest.approx(13.0)

    def test_singular_gram_is_legal_output(self):
        H = orbit_gram(np.zeros(2), scaling_gens())
        assert H[0, 0] == 0.0

    def test_symmetric_psd_at_random_points(self):
        model, _ = build_model("rank2_completion", seed=1)
        for _ in range(10):
            theta = model.init + 0.5 * RNG.standard_normal(model.param_dim)
            H = orbit_gram(theta, model.generators)
            assert np.allclose(H, H.T)
            evals = np.linalg.eigvalsh(H)
            assert evals.min() >= -1e-12 * max(evals.max(), 1.0)


class TestFpMatrix:
    def test_angle_gauge_at_axis_point(self):
        M = fp_matrix(np.array([2.0, 0.0]), rotation_gens(), angle_gauge())
        assert M.shape == (1, 1)
        assert M[0, 0] == pytest.approx(1.0)

    def test_metric_dual_gauge_equals_gram(self):
        theta = np.array([2.0, 3.0])
        M = fp_matrix(theta, scaling_gens(), hyperbola_gauge())
        H = orbit_gram(theta, scaling_gens())
        assert np.allclose(M, H)

    def test_constant_gauge_gives_zero(self):
        gauge = GaugeMap(m=1, chi=lambda t: np.array([1.0]),
                         grad_chi=lambda t: np.zeros((1, 2)))
        M = fp_matrix(np.array([1.0, 2.0]), scaling_gens(), gauge)
        assert np.all(M == 0.0)

    def test_dimension_mismatch_raises(self):
        gauge = GaugeMap(m=2, chi=lambda t: np.zeros(2),
                         grad_chi=lambda t: np.zeros((2, 2)))
        with pytest.raises(ValueError, match="constraints"):
            fp_matrix(np.ones(2), scaling_gens(), gauge)


class TestConstraintGram:
    def test_polar_value(self):
        G = constraint_gram(np.array([2.0, 0.0]), rotation_gens(), angle_gauge())
        assert G[0, 0] == pytest.approx(0.25)

    def test_gram_relation_on_hyperbola_gauge(self):
        # G = M H^-1 M^T must equal the direct Gram of the constraint
        # gradients whenever grad chi lies in the orbit tangent space.
        gens, gauge = scaling_gens(), hyperbola_gauge()
        for _ in range(100):
            theta = RNG.standard_normal(2) * 2.0 + np.array([3.0, 3.0])
            G = constraint_gram(theta, gens, gauge)
            grads = gauge.grad_chi(theta)
            direct = grads @ grads.T
            assert np.linalg.norm(G - direct) < 1e-12 * np.linalg.norm(direct)

    def test_degenerate_orbit_raises(self):
        with pytest.raises(OrbitDegenerateError, match="singular"):
            constraint_gram(np.zeros(2), scaling_gens(), hyperbola_gauge())

    def test_non_transversal_gauge_raises(self):
        gauge = GaugeMap(m=1, chi=lambda t: np.array([1.0]),
                         grad_chi=lambda t: np.zeros((1, 2)))
        with pytest.raises(OrbitGaugeError, match="transversal"):
            constraint_gram(np.array([1.0, 2.0]), scaling_gens(), gauge)


class TestGaugeCorrection:
    def test_hadamard_hand_value(self):
        # sigma^2 / 2 beta = 0.5 at the balanced point (1, 1).
        out = gauge_correction(np.array([1.0, 1.0]), scaling_gens(),
                               "balanced", sigma=1.0, beta=1.0)
        assert out == pytest.approx(0.5 * math.log(2.0))

    def test_unit_orbit_is_zero(self):
        out = gauge_correction(np.array([1.0, 0.0]), rotation_gens(),
                               "balanced", sigma=1.0, beta=1.0)
        assert out == pytest.approx(0.0)

    def test_balanced_matrix_modes(self):
        # Two independent scaling modes, each balanced with u_i = v_i = 1:
        # logdet H = 2 log 2 at unit prefactor.
        def xi_factory(i):
            def xi(theta):
                out = np.zeros(4)
                out[i] = theta[i]
                out[2 + i] = -theta[2 + i]
                return out

            return xi

        gens = GeneratorSet(m=2, xi=[xi_factory(0), xi_factory(1)])
        theta = np.ones(4)
        out = gauge_correction(theta, gens, "balanced",
                               sigma=math.sqrt(2.0), beta=1.0)
        assert out == pytest.approx(2.0 * math.log(2.0))

    def test_reciprocity(self):
        theta = np.array([1.7, 0.4])
        a = gauge_correction(theta, scaling_gens(), "balanced", 1.3, 2.0)
        b = gauge_correction(theta, scaling_gens(), "unit_fp", 1.3, 2.0)
        assert a == -b

    def test_bad_mode_and_beta_raise(self):
        with pytest.raises(ValueError, match="gauge_mode"):
            gauge_correction(np.ones(2), scaling_gens(), "free", 1.0, 1.0)
        with pytest.raises(ValueError, match="beta"):
            gauge_correction(np.ones(2), scaling_gens(), "balanced", 1.0, 0.0)

    def test_singular_orbit_raises(self):
        with pytest.raises(OrbitDegenerateError):
            gauge_correction(np.zeros(2), scaling_gens(), "balanced", 1.0, 1.0)


class TestInvariance:
    def test_radial_rotation_exact(self):
        model, _ = build_model("radial", params={"d": 2}, seed=0)
        theta = np.array([1.3, -0.6])
        assert check_invariance(model, model.generators, theta, 0.9) < 1e-14

    def test_hadamard_scaling(self):
        model, _ = build_model("l1_hadamard", seed=0)
        theta = model.init
        # lambda = 2 coordinate scaling is t = log 2.
        assert check_invariance(model, model.generators, theta,
                                math.log(2.0)) < 1e-12

    def test_missing_action_raises(self):
        gens = GeneratorSet(m=1, xi=[lambda t: t])
        model, _ = build_model("radial", params={"d": 2}, seed=0)
        with pytest.raises(ValueError, match="action"):
            check_invariance(model, gens, np.ones(2), 1.0)

    def test_relu_negative_scaling_breaks_symmetry(self):
        # relu(-z) != -relu(z): flipping a unit's sign must change the loss.
        model, _ = build_model("relu2", seed=0)
        theta = model.init.copy()
        width, d = model.layout["width"], model.layout["d_in"]
        flipped = theta.copy()
        flipped[:d] *= -1.0                         # first row of W
        flipped[width * d] *= -1.0                  # first entry of v
        base = model.loss(theta)
        assert abs(model.loss(flipped) - base) / (1.0 + abs(base)) > 1e-6


class TestDriftOrthogonality:
    def test_radial(self):
        model, _ = build_model("radial", params={"d": 4}, seed=0)
        theta = RNG.standard_normal(4)
        assert check_drift_orthogonality(model, model.generators, theta) < 1e-10

    def test_hadamard_exact_cancellation(self):
        model, _ = build_model("l1_hadamard", seed=0)
        theta = model.init + 0.3 * RNG.standard_normal(model.param_dim)
        assert check_drift_orthogonality(model, model.generators, theta) < 1e-10

    def test_mismatched_generator_is_order_one(self):
        # Generator of a symmetry the loss does not have: the normalized
        # overlap must be far from zero.
        model, _ = build_model("l1_hadamard", seed=0)
        bogus = GeneratorSet(m=1, xi=[lambda t: np.ones_like(t)])
        theta = model.init + 0.3 * RNG.standard_normal(model.param_dim)
        assert check_drift_orthogonality(model, bogus, theta) > 1e-2
