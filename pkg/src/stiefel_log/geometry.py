"""
Points, tangent vectors, the beta-metric and the Riemannian exponential
on the Stiefel manifold St(n, p).
"""

from dataclasses import dataclass

import numpy as np

from .kernels import (
    SkewSpectrum,
    orthogonal_complement,
    orthonormalize_with_completion,
    skew,
    skew_exp,
)


class BaseMismatchError(ValueError):
    """Two tangent vectors live at different base points."""


class TargetUnreachableError(RuntimeError):
    """No pair at the requested ambient distance could be generated."""


def check_stiefel(U, tol=None):
    """
    Validate that U has orthonormal columns and n > p.

    Returns U as a float array; raises ValueError otherwise.
    """
    U = np.asarray(U, dtype=float)
    if U.ndim != 2:
        raise ValueError(f"expected a matrix, got array with {U.ndim} dimensions")
    n, p = U.shape
    if not n > p >= 1:
        raise ValueError(f"a Stiefel point needs n > p >= 1, got n={n}, p={p}")
    tol = 1e-12 * p if tol is None else tol
    err = np.linalg.norm(U.T @ U - np.eye(p))
    if err > tol:
        raise ValueError(f"columns are not orthonormal: |U^T U - I|_F = {err:.3g}")
    return U


def complement_width(n, p):
    """Number of columns q of the complement frame used for (n, p)."""
    return p if n >= 2 * p else n - p


@dataclass(frozen=True)
class TangentVector:
    """
    Tangent vector Delta = U A + Q B at the base point U.

    Attributes
    ----------
    base : ndarray, shape (n, p)
    A : ndarray, shape (p, p)
        Skew-symmetric.
    Q : ndarray, shape (n, q)
        Orthonormal with Q^T U = 0.
    B : ndarray, shape (q, p)
    """

    base: np.ndarray
    A: np.ndarray
    Q: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", skew(np.asarray(self.A, dtype=float)))

    @property
    def n(self):
        return self.base.shape[0]

    @property
    def p(self):
        return self.base.shape[1]

    def embedded(self):
        """The n x p matrix U A + Q B."""
        return self.base @ self.A + self.Q @ self.B

    def norm(self, beta):
        """Norm induced by the beta-metric."""
        return float(np.sqrt(beta * np.sum(self.A**2) + np.sum(self.B**2)))

    def scaled(self, c):
        return TangentVector(self.base, c * self.A, self.Q, c * self.B)


def tangent_project(base, W):
    """
    Orthogonal (Euclidean) projection of W onto the tangent space at base.

    Parameters
    ----------
    base : ndarray, shape (n, p)
    W : ndarray, shape (n, p)

    Returns
    -------
    TangentVector
        A = skew(U^T W); Q B is a factorization of (I - U U^T) W.
    """
    U = np.asarray(base, dtype=float)
    W = np.asarray(W, dtype=float)
    n, p = U.shape
    if W.shape != (n, p):
        raise ValueError(f"W has shape {W.shape}, expected {(n, p)}")
    A = skew(U.T @ W)
    X = W - U @ (U.T @ W)
    if n >= 2 * p:
        Q, B = orthonormalize_with_completion(U, X)
    else:
        Q = orthogonal_complement(U)
        B = Q.T @ X
    return TangentVector(U, A, Q, B)


def tangent_from_embedded(base, Delta, tol=1e-8):
    """Wrap an embedded tangent matrix, rejecting it when U^T Delta is not skew."""
    U = np.asarray(base, dtype=float)
    Delta = np.asarray(Delta, dtype=float)
    S = U.T @ Delta
    err = np.linalg.norm(S + S.T)
    if err > tol * max(1.0, np.linalg.norm(Delta)):
        raise ValueError(f"matrix is not tangent: |U^T D + D^T U|_F = {err:.3g}")
    return tangent_project(U, Delta)


def _same_base(x, y):
    if x.base.shape != y.base.shape or np.linalg.norm(x.base - y.base) > 1e-12:
        raise BaseMismatchError("tangent vectors have different base points")


def metric_inner(x, y, beta):
    """
    beta-metric inner product beta * Tr(A_x^T A_y) + Tr(B_x^T B_y).

    When the two vectors use different complement frames Q the ambient
    form Tr(Dx^T (I - (1 - beta) U U^T) Dy) is used instead, which is the
    same quantity.
    """
    _same_base(x, y)
    if x.Q.shape == y.Q.shape and np.array_equal(x.Q, y.Q):
        return float(beta * np.sum(x.A * y.A) + np.sum(x.B * y.B))
    U = x.base
    Dx, Dy = x.embedded(), y.embedded()
    return float(np.sum(Dx * Dy) - (1.0 - beta) * np.sum((U.T @ Dx) * (U.T @ Dy)))


def _exp_generator(A, B, beta):
    p, q = A.shape[0], B.shape[0]
    X = np.zeros((p + q, p + q))
    X[:p, :p] = 2.0 * beta * A
    X[:p, p:] = -B.T
    X[p:, :p] = B
    return X


def stiefel_exp(x, beta, t=1.0):
    """
    Riemannian exponential Exp_{beta,U}(t Delta).

    Parameters
    ----------
    x : TangentVector
    beta : float
        Metric parameter, beta > 0.
    t : float

    Returns
    -------
    ndarray, shape (n, p)
        [U Q] exp(t [[2 beta A, -B^T], [B, 0]]) I_{(p+q) x p} exp(t (1 - 2 beta) A)
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    U = x.base
    p = U.shape[1]
    if t == 0.0:
        return U.copy()
    E = skew_exp(t * _exp_generator(x.A, x.B, beta))[:, :p]
    Y = U @ E[:p] + x.Q @ E[p:]
    return Y @ skew_exp(t * (1.0 - 2.0 * beta) * x.A)


def random_point(n, p, seed=None):
    """
    Random point of St(n, p) from Gram-Schmidt on a Gaussian matrix.

    The sign convention diag(R) > 0 makes the distribution invariant
    under left rotations.
    """
    if not n > p >= 1:
        raise ValueError(f"need n > p >= 1, got n={n}, p={p}")
    rng = np.random.default_rng(seed)
    Qf, R = np.linalg.qr(rng.standard_normal((n, p)))
    return Qf * np.where(np.diag(R) < 0, -1.0, 1.0)


def random_tangent(U, seed=None, beta=1.0, norm=None):
    """Random tangent vector at U, optionally rescaled to a given beta-norm."""
    rng = np.random.default_rng(seed)
    x = tangent_project(U, rng.standard_normal(U.shape))
    if norm is not None:
        x = x.scaled(norm / x.norm(beta))
    return x


def random_pair_at_distance(n, p, target, tol, seed=None, max_refinements=60, max_draws=20):
    """
    Random pair (U, U~) with | |U - U~|_F - target | <= tol.

    U~ = [U U_perp] exp(delta K) I_{n x p} where K is skew with standard
    normal entries above the diagonal. The scale delta is bracketed on
    (0, pi/2] and refined by bisection; a new K is drawn when the bracket
    cannot be formed.

    Raises
    ------
    TargetUnreachableError
        If no draw produces a pair inside the window.
    """
    diameter = 2.0 * np.sqrt(p)
    if not 0.0 <= target < diameter:
        raise ValueError(f"target must be in [0, {diameter:.6g}), got {target}")
    rng = np.random.default_rng(seed)
    U = random_point(n, p, rng)
    if target <= tol:
        return U, U.copy()
    frame = np.hstack([U, orthogonal_complement(U)])
    I_np = np.eye(n, p)
    for _ in range(max_draws):
        G = rng.standard_normal((n, n))
        K = np.triu(G, 1)
        spec = SkewSpectrum(K - K.T)

        def distance(scale):
            return float(np.linalg.norm(spec.expm(scale)[:, :p] - I_np))

        # Bracket: first grid point where the distance reaches the target.
        lo, hi = 0.0, None
        for s in np.linspace(0.0, np.pi / 2, 65)[1:]:
            d = distance(s)
            if abs(d - target) <= tol:
                return U, frame @ spec.expm(s)[:, :p]
            if d > target:
                hi = s
                break
            lo = s
        if hi is None:
            continue
        for _ in range(max_refinements):
            mid = 0.5 * (lo + hi)
            d = distance(mid)
            if abs(d - target) <= tol:
                return U, frame @ spec.expm(mid)[:, :p]
            if d < target:
                lo = mid
            else:
                hi = mid
    raise TargetUnreachableError(
        f"no pair at distance {target:.6g} +- {tol:.3g} on St({n},{p}) after {max_draws} draws"
    )
