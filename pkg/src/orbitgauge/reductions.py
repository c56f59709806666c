"""Closed-form minimizers and gauge terms for factorized architectures.

Each function here reduces a variational question -- "which point on a
symmetry orbit minimizes the gauge term of the effective loss?" -- to an
explicit formula: balanced scalar and matrix factorizations, the GL(r)
orbit family of a matrix factorization, per-frequency balance of circulant
convolutions, CP and tensor-train balance, the stationarity system of a
noisy PCA model, and the counting of discrete permutation orbits.  These
formulas are the analytic targets that the stochastic experiments are
checked against, so they are written directly from the variational problem
and covered by brute-force oracles in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OrbitGaugeError

# Relative singular-value cutoff used when an exact factorization rank is
# required (balanced_matrix) or a Gram factor must be invertible (tt_balance).
RANK_RTOL = 1e-10


@dataclass
class Spectrum:
    """Descending singular values with an optional label."""

    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size and np.any(np.diff(self.values) > 1e-12):
            raise ValueError("spectrum values must be non-increasing")


@dataclass
class BalancedFactorization:
    """A factorization ``Z = U V^T`` at its minimum-norm orbit point."""

    U: np.ndarray
    V: np.ndarray
    cost: float
    spectrum: Spectrum


@dataclass
class ScalarBalance:
    """Balanced factorization of a scalar ``z = u * v``."""

    u: float
    v: float
    cost: float
    boundary: bool = False


@dataclass
class ReducedBias:
    """Value of a reduced gauge bias ``sum_i log |(A w)_i|``.

    ``singular_indices`` lists feature positions where the transformed
    vector vanishes exactly; the value is ``-inf`` in that case.
    """

    value: float
    features: np.ndarray
    singular_indices: tuple[int, ...] = ()

    @property
    def singular(self) -> bool:
        return len(self.singular_indices) > 0


@dataclass
class GammaFamily:
    """Orbit Gram data along the diagonal GL(2)-curve ``R_gamma``."""

    det_value: float
    lambda_12: float
    a: np.ndarray
    b: np.ndarray


@dataclass
class CPBalance:
    """Balanced mode norms of a rank-1 CP tensor with total energy S."""

    squared_norm: float
    norm: float
    order: int
    energy: float


@dataclass
class TTBalance:
    """Bond transform equalizing adjacent tensor-train core Grams."""

    transform: np.ndarray
    U1_balanced: np.ndarray
    U2_balanced: np.ndarray
    gram: np.ndarray
    residual: float


@dataclass
class BlockBalance:
    """Balanced scale/direction split of one group weight vector."""

    s: float
    t: np.ndarray
    cost: float
    boundary: bool = False


@dataclass
class OrbitCount:
    """Size data of a discrete permutation orbit."""

    orbit_size: int
    stabilizer_size: int
    multiplicities: tuple[int, ...]


def balanced_scalar(z: float) -> ScalarBalance:
    """Minimum of ``u^2 + v^2`` over the hyperbola ``u v = z``.

    The minimizer is ``|u| = |v| = sqrt(|z|)`` with cost ``2 |z|``; for
    ``z = 0`` the orbit degenerates to the origin (flagged as boundary).
    """
    z = float(z)
    if z == 0.0:
        return ScalarBalance(u=0.0, v=0.0, cost=0.0, boundary=True)
    root = math.sqrt(abs(z))
    return ScalarBalance(u=root, v=math.copysign(root, z), cost=2.0 * abs(z))


def _bias_transform(w: np.ndarray, transform) -> np.ndarray:
    if isinstance(transform, str):
        if transform == "identity":
            return w
        if transform == "forward_difference":
            if w.size < 2:
                raise ValueError("forward_difference needs at least 2 coordinates")
            return np.diff(w)
        raise ValueError(f"unknown transform {transform!r}")
    mat = np.asarray(transform, dtype=float)
    if mat.ndim != 2 or mat.shape[1] != w.size:
        raise ValueError(f"transform shape {mat.shape} does not match w of size {w.size}")
    return mat @ w


def reduced_scalar_bias(w: np.ndarray, transform="identity") -> ReducedBias:
    """Gauge bias ``sum_i log |(A w)_i|`` of an elementwise factorization.

    ``transform`` selects the feature map A: ``"identity"`` gives the
    l1-style bias on the coordinates themselves, ``"forward_difference"``
    the total-variation-style bias on increments, and an explicit matrix is
    applied as given.  Exact zeros are reported, not raised.
    """
    w = np.asarray(w, dtype=float).ravel()
    feats = _bias_transform(w, transform)
    singular = tuple(int(i) for i in np.nonzero(feats == 0.0)[0])
    if singular:
        return ReducedBias(value=-math.inf, features=feats, singular_indices=singular)
    return ReducedBias(value=float(np.sum(np.log(np.abs(feats)))), features=feats)


def balanced_matrix(Z: np.ndarray, r: int) -> BalancedFactorization:
    """Minimum-norm exact factorization ``Z = U V^T`` with inner rank ``r``.

    Writes ``Z = P Sigma Q^T`` and returns ``U = P_r Sigma_r^{1/2}``,
    ``V = Q_r Sigma_r^{1/2}``; the cost ``|U|_F^2 + |V|_F^2`` equals twice
    the nuclear norm of Z.  Requires ``rank(Z) <= r`` (relative singular
    value cutoff ``RANK_RTOL``), otherwise no exact factorization exists.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2:
        raise ValueError("Z must be a matrix")
    if not (1 <= r <= min(Z.shape)):
        raise ValueError(f"rank r={r} out of range for shape {Z.shape}")
    P, svals, Qt = np.linalg.svd(Z, full_matrices=False)
    cutoff = RANK_RTOL * (svals[0] if svals.size else 0.0)
    rank = int(np.sum(svals > cutoff))
    if rank > r:
        raise OrbitGaugeError(
            f"Z has numerical rank {rank} > r={r}; exact factorization impossible"
        )
    # Deterministic sign convention: largest-|entry| of each left vector >= 0.
    for k in range(min(r, svals.size)):
        lead = np.argmax(np.abs(P[:, k]))
        if P[lead, k] < 0:
            P[:, k] = -P[:, k]
            Qt[k, :] = -Qt[k, :]
    root = np.sqrt(svals[:r])
    U = P[:, :r] * root
    V = Qt[:r, :].T * root
    nuclear = float(np.sum(svals))
    return BalancedFactorization(
        U=U, V=V, cost=2.0 * nuclear, spectrum=Spectrum(svals[:r], label="sigma")
    )


def gl_logdet_full(sigmas: np.ndarray) -> float:
    """``sum_{i,j} log(sigma_i + sigma_j)`` over all index pairs.

    This is the log-determinant of the constraint Gram form of a matrix
    factorization at a balanced point with singular values ``sigmas``,
    evaluated on the full gl(r) algebra in the elementary-matrix basis.
    """
    s = np.asarray(sigmas, dtype=float).ravel()
    if s.size == 0 or np.any(s <= 0):
        raise ValueError("singular values must be positive")
    return float(np.sum(np.log(s[:, None] + s[None, :])))


def gl_det_gamma_family(sigmas: np.ndarray, gamma: float) -> GammaFamily:
    """Orbit Gram data along the curve ``R_gamma = diag(gamma, 1/gamma, 1, ...)``.

    At ``(U R_gamma, V R_gamma^{-T})`` with balanced base point, the Gram
    eigenvalue attached to the elementary direction ``E_ij`` is
    ``a_i + b_j`` with ``a = (s1 g^2, s2 g^-2, s3, ...)`` and
    ``b = (s1 g^-2, s2 g^2, s3, ...)``.  Returns the product of all mn
    eigenvalues and the distinguished mixed eigenvalue
    ``lambda_12 = (s1 + s2) gamma^2``.
    """
    s = np.asarray(sigmas, dtype=float).ravel()
    if s.size < 2:
        raise ValueError("gamma family needs at least two modes")
    if np.any(s <= 0):
        raise ValueError("singular values must be positive")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    g2 = gamma * gamma
    a = s.copy()
    b = s.copy()
    a[0] *= g2
    a[1] /= g2
    b[0] /= g2
    b[1] *= g2
    det_value = float(np.prod(a[:, None] + b[None, :]))
    return GammaFamily(det_value=det_value, lambda_12=float((s[0] + s[1]) * g2), a=a, b=b)


def deep_conv_balance(c_mag: float, L: int, with_readout: bool = True) -> float:
    """Per-layer balanced magnitude of a depth-L circulant convolution chain.

    For one frequency with end-to-end transfer magnitude ``|c|``, the gauge
    term is minimized when every factor carries an equal share: with a
    readout vector the L kernels each take ``|c|^{1/(L+1)}`` (the readout
    takes the same), without one they take ``|c|^{1/L}``.  Equivalently the
    per-layer squared magnitude ``t`` minimizes ``t^L + C L / t`` with
    ``C = |c|^2`` in the readout case.
    """
    if L < 1:
        raise ValueError("depth L must be >= 1")
    c_mag = abs(float(c_mag))
    if c_mag == 0.0:
        return 0.0
    power = 1.0 / (L + 1) if with_readout else 1.0 / L
    return c_mag**power


def cp_balance(S: float, k: int = 3) -> CPBalance:
    """Balanced mode norms of an order-k rank-1 CP factorization.

    Minimizing the gauge determinant over the scaling orbit with total
    energy ``prod_i |u_i|^2 = S`` fixed gives equal squared norms
    ``S^{1/k}`` per mode, i.e. mode norms ``S^{1/(2k)}``.
    """
    if k < 2:
        raise ValueError("CP order k must be >= 2")
    S = float(S)
    if S <= 0:
        raise ValueError("total energy S must be positive")
    sq = S ** (1.0 / k)
    return CPBalance(squared_norm=sq, norm=S ** (1.0 / (2 * k)), order=k, energy=S)


def _sym_power(mat: np.ndarray, power: float, context: str) -> np.ndarray:
    """Fractional power of a symmetric positive-definite matrix."""
    sym = 0.5 * (mat + mat.T)
    evals, evecs = np.linalg.eigh(sym)
    cutoff = RANK_RTOL * float(evals.max(initial=0.0))
    if evals.size == 0 or evals.min() <= cutoff:
        raise OrbitGaugeError(
            f"{context}: Gram factor is rank-deficient "
            f"(min eigenvalue {evals.min(initial=0.0):.3e})"
        )
    return (evecs * evals**power) @ evecs.T


def tt_balance(U1: np.ndarray, U2: np.ndarray) -> TTBalance:
    """Bond transform A with ``(U1 A)^T (U1 A) = (A^{-1} U2)(A^{-1} U2)^T``.

    The balanced gauge of a tensor-train bond equalizes the Gram matrices
    of the two adjacent cores.  With ``C1 = U1^T U1`` and ``C2 = U2 U2^T``,

        ``A = C1^{-1/2} (C1^{1/2} C2 C1^{1/2})^{1/4}``

    conjugates both sides onto ``(C1^{1/2} C2 C1^{1/2})^{1/2}``.  Both Gram
    factors must be full rank.
    """
    U1 = np.asarray(U1, dtype=float)
    U2 = np.asarray(U2, dtype=float)
    if U1.ndim != 2 or U2.ndim != 2 or U1.shape[1] != U2.shape[0]:
        raise ValueError(f"incompatible bond shapes {U1.shape} and {U2.shape}")
    C1 = U1.T @ U1
    C2 = U2 @ U2.T
    c1_half = _sym_power(C1, 0.5, "tt_balance")
    c1_inv_half = _sym_power(C1, -0.5, "tt_balance")
    middle = _sym_power(c1_half @ C2 @ c1_half, 0.25, "tt_balance")
    A = c1_inv_half @ middle
    U1b = U1 @ A
    U2b = np.linalg.solve(A, U2)
    left = U1b.T @ U1b
    right = U2b @ U2b.T
    residual = float(np.linalg.norm(left - right))
    return TTBalance(
        transform=A,
        U1_balanced=U1b,
        U2_balanced=U2b,
        gram=0.5 * (left + right),
        residual=residual,
    )


def pca_lambda_solve(s: np.ndarray, kappa: float, tol: float = 1e-12,
                     max_iter: int = 200) -> np.ndarray:
    """Stationary eigenvalue profile of the gauge-corrected PCA loss.

    Solves, for each coordinate with data weight ``s_i > 0``,

        ``2 (lambda_i - 1) s_i + kappa * sum_{j != i} 1/(lambda_i + lambda_j) = 0``

    by a damped Newton iteration started from ``lambda = 1``.  For
    ``kappa = 0`` the solution is exactly ``lambda_i = 1``.  Coordinates
    with ``s_i = 0`` and ``kappa > 0`` are pinned to the boundary value 0;
    when at least two coordinates stay active the pinned ones are excluded
    from the pairwise sums of the remaining system, while a single active
    coordinate keeps the ``1/(lambda_i + 0)`` contributions of its pinned
    partners.  Returns the full lambda vector in the input order.
    """
    s = np.asarray(s, dtype=float).ravel()
    if s.size == 0:
        raise ValueError("empty weight vector")
    if np.any(s < 0):
        raise ValueError("weights s must be non-negative")
    if kappa < 0:
        raise ValueError("kappa must be non-negative")

    lam = np.ones_like(s)
    if kappa == 0.0:
        return lam

    active = s > 0
    lam[~active] = 0.0
    idx = np.nonzero(active)[0]
    if idx.size == 0:
        return lam
    n_pinned = int(np.sum(~active))
    include_pinned = idx.size < 2 and n_pinned > 0

    def system(x):
        # Pairwise sums among active coordinates (plus pinned zeros when
        # only one coordinate remains active).
        pair = x[:, None] + x[None, :]
        np.fill_diagonal(pair, np.inf)
        F = 2.0 * (x - 1.0) * s[idx] + kappa * np.sum(1.0 / pair, axis=1)
        J = np.zeros((x.size, x.size))
        off = -kappa / pair**2
        np.fill_diagonal(off, 0.0)
        J += off
        J[np.diag_indices_from(J)] = 2.0 * s[idx] + np.sum(off, axis=1)
        if include_pinned:
            F += kappa * n_pinned / x
            J[np.diag_indices_from(J)] += -kappa * n_pinned / x**2
        return F, J

    x = np.ones(idx.size)
    F, J = system(x)
    for _ in range(max_iter):
        if np.max(np.abs(F)) < tol:
            break
        step = np.linalg.solve(J, -F)
        alpha = 1.0
        base = float(np.linalg.norm(F))
        while alpha > 1e-12:
            trial = x + alpha * step
            if np.all(trial > 0):
                Ft, Jt = system(trial)
                if np.linalg.norm(Ft) < base:
                    x, F, J = trial, Ft, Jt
                    break
            alpha *= 0.5
        else:
            raise OrbitGaugeError(
                "pca_lambda_solve: Newton iteration stalled "
                f"(residual {np.max(np.abs(F)):.3e}); the interior "
                "stationary point may not exist for this (s, kappa)"
            )
    else:
        raise OrbitGaugeError(
            f"pca_lambda_solve: no convergence after {max_iter} iterations "
            f"(residual {np.max(np.abs(F)):.3e})"
        )
    lam[idx] = x
    return lam


def block_balance(w_g: np.ndarray) -> BlockBalance:
    """Balanced scale/direction factorization ``w = s t`` of one group.

    Minimizing ``s^2 + |t|^2`` over ``s t = w`` gives ``s = |w|^{1/2}`` and
    ``|t| = |w|^{1/2}`` with cost ``2 |w|``; the zero group sits on the
    orbit boundary.
    """
    w = np.asarray(w_g, dtype=float).ravel()
    norm = float(np.linalg.norm(w))
    if norm == 0.0:
        return BlockBalance(s=0.0, t=np.zeros_like(w), cost=0.0, boundary=True)
    s = math.sqrt(norm)
    return BlockBalance(s=s, t=w / s, cost=2.0 * norm)


def discrete_orbit_size(W1: np.ndarray, W2: np.ndarray, tol: float = 1e-9) -> OrbitCount:
    """Permutation-orbit size of a two-layer net's hidden units.

    Units are the pairs (row i of W1, column i of W2); permuting them leaves
    the network function unchanged.  Duplicate units (max-norm distance at
    most ``tol`` from their cluster representative) form the stabilizer, so
    the orbit has ``m! / prod(multiplicity!)`` distinct points.
    """
    W1 = np.atleast_2d(np.asarray(W1, dtype=float))
    W2 = np.atleast_2d(np.asarray(W2, dtype=float))
    if W1.shape[0] != W2.shape[1]:
        raise ValueError(
            f"W1 has {W1.shape[0]} rows but W2 has {W2.shape[1]} columns"
        )
    units = np.hstack([W1, W2.T])
    reps: list[np.ndarray] = []
    counts: list[int] = []
    for u in units:
        for k, rep in enumerate(reps):
            if np.max(np.abs(u - rep)) <= tol:
                counts[k] += 1
                break
        else:
            reps.append(u)
            counts.append(1)
    stab = 1
    for c in counts:
        stab *= math.factorial(c)
    m = units.shape[0]
    return OrbitCount(
        orbit_size=math.factorial(m) // stab,
        stabilizer_size=stab,
        multiplicities=tuple(sorted(counts, reverse=True)),
    )


def homogeneity_balance_ratio(k: int) -> float:
    """Balanced norm ratio ``|w| / |v| = k^{3/2}`` for k-homogeneous units.

    For a unit ``v * phi(w . x)`` with ``phi`` positively k-homogeneous, the
    rescaling ``(alpha w, alpha^{-k} v)`` is a symmetry; minimizing the
    generator norm ``alpha^2 |w|^2 + k^2 alpha^{-2k} |v|^2`` over alpha
    balances the two terms at norm ratio ``k^{3/2}``.
    """
    if k < 1:
        raise ValueError("homogeneity degree k must be >= 1")
    return float(k) ** 1.5
