"""Closed-form reductions checked against brute-force minimizers.

Every formula in orbitgauge.reductions is re-derived here by an
independent route: dense grid search, generic quasi-Newton descent over
the orbit parameters, or exhaustive enumeration.  The closed forms must
match the numerical minimizers to tight absolute tolerance.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import minimize

from orbitgauge import reductions
from orbitgauge.errors import OrbitGaugeError

RNG = np.random.default_rng(20240613)

ORACLE_TOL = 1e-6


def grid_min(f, lo, hi, n=4001, rounds=3):
    """Refine a 1-d grid minimum a few times around the best cell."""
    best_x, best_f = None, np.inf
    for _ in range(rounds):
        xs = np.geomspace(lo, hi, n)
        fs = np.array([f(x) for x in xs])
        k = int(np.argmin(fs))
        if fs[k] < best_f:
            best_x, best_f = xs[k], fs[k]
        lo = xs[max(k - 1, 0)]
        hi = xs[min(k + 1, n - 1)]
    return best_x, best_f


class TestBalancedScalar:
    def test_matches_grid_oracle(self):
        for z in (2.0, 0.37, 11.5, -4.2):
            out = reductions.balanced_scalar(z)
            _, oracle = grid_min(lambda u: u * u + (z / u) ** 2, 1e-3, 1e3)
            assert abs(out.cost - oracle) < ORACLE_TOL
            assert abs(out.u * out.v - z) < 1e-12
            assert not out.boundary

    def test_closed_form(self):
        out = reductions.balanced_scalar(9.0)
        assert out.u == pytest.approx(3.0)
        assert out.v == pytest.approx(3.0)
        assert out.cost == pytest.approx(18.0)

    def test_negative_z_sign_lands_on_v(self):
        out = reductions.balanced_scalar(-4.0)
        assert out.u == pytest.approx(2.0)
        assert out.v == pytest.approx(-2.0)
        assert out.cost == pytest.approx(8.0)

    def test_zero_is_boundary(self):
        out = reductions.balanced_scalar(0.0)
        assert out.boundary
        assert out.cost == 0.0


class TestBalancedMatrix:
    """Oracle: descend over the GL(r) orbit of a reference factorization."""

    @staticmethod
    def _orbit_oracle(Z, r, restarts=5):
        # Reference factorization from the SVD, then minimize
        # |U0 A|^2 + |V0 A^-T|^2 over A by BFGS with random restarts.
        P, svals, Qt = np.linalg.svd(Z, full_matrices=False)
        U0 = P[:, :r] * svals[:r]
        V0 = Qt[:r, :].T

        def cost(a_flat):
            A = a_flat.reshape(r, r)
            if abs(np.linalg.det(A)) < 1e-12:
                return 1e12
            Ainv_t = np.linalg.inv(A).T
            return float(np.sum((U0 @ A) ** 2) + np.sum((V0 @ Ainv_t) ** 2))

        best = np.inf
        for k in range(restarts):
            a0 = np.eye(r).ravel() + 0.3 * RNG.standard_normal(r * r)
            res = minimize(cost, a0, method="BFGS",
                           options={"gtol": 1e-12, "maxiter": 2000})
            best = min(best, float(res.fun))
        return best

    def test_cost_matches_orbit_descent(self):
        for n, m, r in ((4, 3, 2), (5, 5, 3), (6, 4, 2)):
            A = RNG.standard_normal((n, r))
            B = RNG.standard_normal((m, r))
            Z = A @ B.T
            out = reductions.balanced_matrix(Z, r)
            oracle = self._orbit_oracle(Z, r)
            assert abs(out.cost - oracle) < ORACLE_TOL

    def test_factorization_is_exact_and_balanced(self):
        Z = RNG.standard_normal((6, 3)) @ RNG.standard_normal((4, 3)).T
        out = reductions.balanced_matrix(Z, 3)
        assert np.linalg.norm(out.U @ out.V.T - Z) < 1e-10
        gram_gap = out.U.T @ out.U - out.V.T @ out.V
        assert np.linalg.norm(gram_gap) < 1e-10

    def test_cost_is_twice_nuclear_norm(self):
        Z = RNG.standard_normal((5, 2)) @ RNG.standard_normal((7, 2)).T
        out = reductions.balanced_matrix(Z, 2)
        nuclear = np.sum(np.linalg.svd(Z, compute_uv=False))
        assert out.cost == pytest.approx(2.0 * nuclear, rel=1e-12)

    def test_rank_too_high_raises(self):
        Z = RNG.standard_normal((5, 5))
        with pytest.raises(OrbitGaugeError, match="rank"):
            reductions.balanced_matrix(Z, 2)

    def test_bad_r_raises(self):
        with pytest.raises(ValueError):
            reductions.balanced_matrix(np.eye(3), 0)
        with pytest.raises(ValueError):
            reductions.balanced_matrix(np.eye(3), 4)


class TestCPBalance:
    def test_matches_constrained_descent(self):
        # Minimize sum of squared mode norms with the total energy
        # prod a_i^2 = S fixed, parameterized by k-1 free log-scales.
        for S, k in ((5.0, 3), (0.7, 3), (12.0, 4), (2.0, 2)):
            out = reductions.cp_balance(S, k)

            def cost(logs):
                a2 = np.exp(2.0 * np.asarray(logs))
                last = S / np.prod(a2)
                return float(np.sum(a2) + last)

            res = minimize(cost, np.zeros(k - 1), method="BFGS",
                           options={"gtol": 1e-12})
            assert abs(k * out.squared_norm - res.fun) < ORACLE_TOL
            assert out.norm == pytest.approx(math.sqrt(out.squared_norm))
            assert out.order == k

    def test_bad_inputs_raise(self):
        with pytest.raises(ValueError):
            reductions.cp_balance(-1.0)
        with pytest.raises(ValueError):
            reductions.cp_balance(1.0, k=1)


class TestDeepConvBalance:
    def test_matches_descent_over_layer_magnitudes(self):
        # Free per-layer magnitudes m_i, readout takes c / prod(m).
        for c, L in ((3.0, 2), (0.2, 3), (7.0, 4), (1.3, 1)):
            out = reductions.deep_conv_balance(c, L)

            def cost(logm):
                m = np.exp(logm)
                readout = c / np.prod(m)
                return float(np.sum(m**2) + readout**2)

            res = minimize(cost, np.zeros(L), method="BFGS",
                           options={"gtol": 1e-12})
            assert abs((L + 1) * out**2 - res.fun) < ORACLE_TOL

    def test_without_readout(self):
        assert reductions.deep_conv_balance(8.0, 3, with_readout=False) == \
            pytest.approx(2.0)

    def test_closed_form(self):
        assert reductions.deep_conv_balance(8.0, 2) == pytest.approx(2.0)
        assert reductions.deep_conv_balance(0.0, 3) == 0.0

    def test_bad_depth_raises(self):
        with pytest.raises(ValueError):
            reductions.deep_conv_balance(1.0, 0)


class TestTTBalance:
    def test_grams_equal_and_product_invariant(self):
        for r in (2, 3, 4):
            U1 = RNG.standard_normal((6, r))
            U2 = RNG.standard_normal((r, 15))
            out = reductions.tt_balance(U1, U2)
            left = out.U1_balanced.T @ out.U1_balanced
            right = out.U2_balanced @ out.U2_balanced.T
            assert np.linalg.norm(left - right) < 1e-10
            assert out.residual < 1e-10
            prod_before = U1 @ U2
            prod_after = out.U1_balanced @ out.U2_balanced
            assert np.linalg.norm(prod_before - prod_after) < 1e-12

    def test_gram_is_geometric_mean_conjugate(self):
        U1 = RNG.standard_normal((8, 3))
        U2 = RNG.standard_normal((3, 5))
        out = reductions.tt_balance(U1, U2)
        # Same eigenvalues as the symmetrized product C1^1/2 C2 C1^1/2.
        C1 = U1.T @ U1
        C2 = U2 @ U2.T
        w, V = np.linalg.eigh(C1)
        c1h = (V * np.sqrt(w)) @ V.T
        target = np.sort(np.sqrt(np.linalg.eigvalsh(c1h @ C2 @ c1h)))
        got = np.sort(np.linalg.eigvalsh(out.gram))
        assert np.allclose(got, target, atol=1e-10)

    def test_rank_deficient_raises(self):
        U1 = np.zeros((6, 2))
        U2 = RNG.standard_normal((2, 9))
        with pytest.raises(OrbitGaugeError, match="rank-deficient"):
            reductions.tt_balance(U1, U2)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            reductions.tt_balance(np.ones((4, 2)), np.ones((3, 5)))


class TestPcaLambdaSolve:
    def test_residual_of_stationarity_system(self):
        # kappa stays below s_min/(r-1): beyond it the correction term
        # overwhelms the weakest coordinate and no interior root exists.
        for kappa in (0.01, 0.03):
            s = RNG.uniform(0.2, 3.0, size=6)
            lam = reductions.pca_lambda_solve(s, kappa)
            pair = lam[:, None] + lam[None, :]
            np.fill_diagonal(pair, np.inf)
            resid = 2.0 * (lam - 1.0) * s + kappa * np.sum(1.0 / pair, axis=1)
            assert np.max(np.abs(resid)) < 1e-10

    def test_two_coordinate_root_in_closed_form(self):
        # For s=(1,1) the symmetric system collapses to 4l^2 - 4l + k = 0;
        # Newton from 1 finds the larger root.
        lam = reductions.pca_lambda_solve(np.array([1.0, 1.0]), 0.1)
        root = (4.0 + math.sqrt(14.4)) / 8.0
        assert np.allclose(lam, root, atol=1e-12)

    def test_no_interior_root_raises(self):
        with pytest.raises(OrbitGaugeError):
            reductions.pca_lambda_solve(np.array([1.0, 1.0]), 2.0)

    def test_kappa_zero_exact_ones(self):
        lam = reductions.pca_lambda_solve(RNG.uniform(0.5, 2.0, 5), 0.0)
        assert np.all(lam == 1.0)

    def test_correction_pushes_lambda_below_one(self):
        lam = reductions.pca_lambda_solve(np.full(4, 1.0), 0.3)
        assert np.all(lam < 1.0)
        assert np.all(lam > 0.0)

    def test_zero_weight_coordinate_pinned(self):
        s = np.array([2.0, 0.0, 1.0])
        lam = reductions.pca_lambda_solve(s, 0.4)
        assert lam[1] == 0.0
        # Remaining pair solves its own reduced system.
        resid0 = 2.0 * (lam[0] - 1.0) * s[0] + 0.4 / (lam[0] + lam[2])
        resid2 = 2.0 * (lam[2] - 1.0) * s[2] + 0.4 / (lam[0] + lam[2])
        assert abs(resid0) < 1e-10 and abs(resid2) < 1e-10

    def test_single_active_keeps_pinned_partners(self):
        s = np.array([1.5, 0.0, 0.0])
        lam = reductions.pca_lambda_solve(s, 0.2)
        x = lam[0]
        resid = 2.0 * (x - 1.0) * s[0] + 0.2 * 2.0 / x
        assert abs(resid) < 1e-10

    def test_bad_inputs_raise(self):
        with pytest.raises(ValueError):
            reductions.pca_lambda_solve(np.array([]), 0.1)
        with pytest.raises(ValueError):
            reductions.pca_lambda_solve(np.array([-1.0]), 0.1)
        with pytest.raises(ValueError):
            reductions.pca_lambda_solve(np.array([1.0]), -0.1)


class TestBlockBalance:
    def test_matches_grid_oracle(self):
        for d in (1, 3, 8):
            w = RNG.standard_normal(d)
            out = reductions.block_balance(w)
            wn = np.linalg.norm(w)
            _, oracle = grid_min(lambda a: a * a + wn * wn / (a * a), 1e-3, 1e3)
            assert abs(out.cost - oracle) < ORACLE_TOL
            assert np.allclose(out.s * out.t, w, atol=1e-12)
            assert abs(np.linalg.norm(out.t) - out.s) < 1e-12

    def test_zero_group_is_boundary(self):
        out = reductions.block_balance(np.zeros(4))
        assert out.boundary
        assert out.cost == 0.0


class TestDiscreteOrbitSize:
    @staticmethod
    def _enumerate_orbit(W1, W2):
        units = np.hstack([W1, W2.T])
        seen = set()
        for perm in itertools.permutations(range(units.shape[0])):
            seen.add(units[list(perm)].tobytes())
        return len(seen)

    def test_exhaustive_small_m(self):
        for m in (2, 3, 4, 5):
            for mults in ([1] * m, [2] + [1] * (m - 2), [m]):
                if sum(mults) != m:
                    continue
                reps = [RNG.standard_normal(4) for _ in mults]
                rows = np.array([r for rep, c in zip(reps, mults)
                                 for r in [rep] * c])
                W1, W2 = rows[:, :2], rows[:, 2:].T
                out = reductions.discrete_orbit_size(W1, W2)
                assert out.orbit_size == self._enumerate_orbit(W1, W2)
                assert out.orbit_size * out.stabilizer_size == math.factorial(m)

    def test_orbit_stabilizer_product_up_to_8(self):
        for m in range(2, 9):
            W1 = RNG.standard_normal((m, 3))
            W2 = RNG.standard_normal((2, m))
            out = reductions.discrete_orbit_size(W1, W2)
            assert out.orbit_size * out.stabilizer_size == math.factorial(m)
            assert out.multiplicities == tuple([1] * m)
            assert out.stabilizer_size == 1

    def test_duplicates_counted(self):
        row = RNG.standard_normal(3)
        W1 = np.vstack([row, row, RNG.standard_normal(3)])
        W2 = np.ones((2, 3))
        out = reductions.discrete_orbit_size(W1, W2)
        assert out.multiplicities == (2, 1)
        assert out.stabilizer_size == 2
        assert out.orbit_size == 3

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            reductions.discrete_orbit_size(np.ones((3, 2)), np.ones((2, 4)))


class TestScalarBias:
    def test_identity_and_difference_transforms(self):
        w = np.array([2.0, -3.0, 0.5])
        out = reductions.reduced_scalar_bias(w)
        assert out.value == pytest.approx(np.log(2.0) + np.log(3.0) + np.log(0.5))
        assert not out.singular
        out_d = reductions.reduced_scalar_bias(w, "forward_difference")
        assert out_d.value == pytest.approx(np.log(5.0) + np.log(3.5))

    def test_matrix_transform(self):
        A = np.array([[1.0, 1.0], [1.0, -1.0]])
        out = reductions.reduced_scalar_bias(np.array([3.0, 1.0]), A)
        assert out.value == pytest.approx(np.log(4.0) + np.log(2.0))

    def test_exact_zero_reported_not_raised(self):
        out = reductions.reduced_scalar_bias(np.array([1.0, 0.0, 2.0]))
        assert out.singular
        assert out.singular_indices == (1,)
        assert out.value == -math.inf

    def test_unknown_transform_raises(self):
        with pytest.raises(ValueError, match="unknown transform"):
            reductions.reduced_scalar_bias(np.ones(3), "fourier")


class TestGlDeterminants:
    def test_logdet_full_from_definition(self):
        s = np.array([3.0, 1.0, 0.5])
        pair = s[:, None] + s[None, :]
        assert reductions.gl_logdet_full(s) == pytest.approx(
            float(np.sum(np.log(pair))))

    def test_gamma_family_reduces_to_logdet_at_one(self):
        s = np.array([2.0, 1.0, 0.7])
        fam = reductions.gl_det_gamma_family(s, 1.0)
        assert math.log(fam.det_value) == pytest.approx(
            reductions.gl_logdet_full(s))

    def test_gamma_family_determinant_from_definition(self):
        s = np.array([3.0, 1.0])
        g = 1.7
        fam = reductions.gl_det_gamma_family(s, g)
        a = np.array([3.0 * g**2, 1.0 / g**2])
        b = np.array([3.0 / g**2, 1.0 * g**2])
        assert fam.det_value == pytest.approx(
            float(np.prod(a[:, None] + b[None, :])))
        assert fam.lambda_12 == pytest.approx(4.0 * g**2)

    def test_mixed_eigenvalue_grows_without_bound(self):
        # The distinguished eigenvalue grows like gamma^2: no finite
        # minimizer exists over the full GL(2) family.
        s = np.array([3.0, 1.0])
        vals = [reductions.gl_det_gamma_family(s, g).lambda_12
                for g in (1.0, 2.0, 4.0)]
        assert vals[0] < vals[1] < vals[2]

    def test_bad_inputs_raise(self):
        with pytest.raises(ValueError):
            reductions.gl_logdet_full(np.array([1.0, -2.0]))
        with pytest.raises(ValueError):
            reductions.gl_det_gamma_family(np.array([1.0]), 1.0)
        with pytest.raises(ValueError):
            reductions.gl_det_gamma_family(np.array([1.0, 2.0]), 0.0)


class TestHomogeneityRatio:
    def test_matches_descent_over_alpha(self):
        # The balanced norm ratio is k^{3/2} regardless of the starting
        # pair: verify by minimizing the generator norm over alpha.
        for k in (1, 2, 3):
            for W, V in ((1.7, 0.6), (0.3, 2.2)):

                def cost(log_alpha):
                    a = math.exp(log_alpha[0])
                    return a * a * W * W + k * k * a ** (-2 * k) * V * V

                res = minimize(cost, [0.0], method="BFGS",
                               options={"gtol": 1e-14})
                a_star = math.exp(res.x[0])
                ratio = (a_star * W) / (a_star ** (-k) * V)
                assert ratio == pytest.approx(
                    reductions.homogeneity_balance_ratio(k), rel=1e-6)

    def test_value(self):
        assert reductions.homogeneity_balance_ratio(2) == pytest.approx(2.0**1.5)
        with pytest.raises(ValueError):
            reductions.homogeneity_balance_ratio(0)
