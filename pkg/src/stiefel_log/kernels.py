"""
Dense matrix kernels: skew-symmetric exponential, principal logarithm on
SO(m), symmetric Sylvester solves and orthonormalization with completion.

The exponential and the logarithm both go through the real Schur form.
Skew-symmetric and orthogonal matrices are normal, so their real Schur
form is block diagonal with 1x1 and 2x2 blocks, and each block can be
handled in closed form.
"""

import numpy as np
import scipy.linalg as sla

# Rotation angles closer than this to pi are treated as an eigenvalue -1.
PI_GUARD = 1e-8
# Eigenvalue sums below this (relative to max(1, |S|)) make the Sylvester
# operator singular.
SYLVESTER_GUARD = 1e-14


class EigenvalueAtMinusOneError(ValueError):
    """The principal logarithm is undefined (eigenvalue at or near -1)."""


class SingularSylvesterError(ValueError):
    """The symmetric Sylvester operator X -> SX + XS is singular."""


def skew(X):
    """Skew-symmetric part (X - X^T) / 2."""
    return 0.5 * (X - X.T)


def sym(X):
    """Symmetric part (X + X^T) / 2."""
    return 0.5 * (X + X.T)


def _blocks(T):
    """Diagonal blocks of a real quasi-triangular Schur factor as (start, size)."""
    m = T.shape[0]
    out = []
    i = 0
    while i < m:
        if i + 1 < m and T[i + 1, i] != 0.0:
            out.append((i, 2))
            i += 2
        else:
            out.append((i, 1))
            i += 1
    return out


class SkewSpectrum:
    """
    Real Schur factorization S = Z T Z^T of a skew-symmetric matrix.

    Keeps the rotation angles so that exp(t S) can be evaluated for many
    values of t at the cost of one factorization.

    Parameters
    ----------
    S : ndarray, shape (m, m)
        Skew-symmetric matrix. Only its skew part is used.
    """

    def __init__(self, S):
        S = skew(np.asarray(S, dtype=float))
        self.dim = S.shape[0]
        if self.dim == 0 or not np.any(S):
            self.Z = np.eye(self.dim)
            self.starts = np.empty(0, dtype=int)
            self.angles = np.empty(0)
            return
        T, Z = sla.schur(S, output="real")
        starts, angles = [], []
        for i, size in _blocks(T):
            if size == 2:
                starts.append(i)
                angles.append(0.5 * (T[i, i + 1] - T[i + 1, i]))
        self.Z = Z
        self.starts = np.asarray(starts, dtype=int)
        self.angles = np.asarray(angles, dtype=float)

    def _middle(self, t, fc, fs):
        D = np.zeros((self.dim, self.dim))
        idx = np.arange(self.dim)
        D[idx, idx] = fc(0.0)
        theta = t * self.angles
        c, s = fc(theta), fs(theta)
        i, j = self.starts, self.starts + 1
        D[i, i] = c
        D[j, j] = c
        D[i, j] = s
        D[j, i] = -s
        return D

    def expm(self, t=1.0):
        """exp(t S), exactly orthogonal up to the orthogonality of Z."""
        D = self._middle(t, np.cos, np.sin)
        return self.Z @ D @ self.Z.T

    def norm2(self):
        """Spectral norm of S."""
        return float(np.max(np.abs(self.angles))) if self.angles.size else 0.0


def skew_exp(S):
    """
    Matrix exponential of a skew-symmetric matrix.

    Parameters
    ----------
    S : ndarray, shape (m, m)
        Skew-symmetric matrix; the symmetric part, if any, is discarded.

    Returns
    -------
    ndarray, shape (m, m)
        exp(S), a special orthogonal matrix.
    """
    return SkewSpectrum(S).expm()


def so_principal_log(Q):
    """
    Principal logarithm of a special orthogonal matrix.

    Parameters
    ----------
    Q : ndarray, shape (m, m)
        Orthogonal matrix with positive determinant.

    Returns
    -------
    ndarray, shape (m, m)
        Skew-symmetric L with spectral norm below pi and exp(L) = Q.

    Raises
    ------
    EigenvalueAtMinusOneError
        If Q has an eigenvalue at -1, or a rotation angle within 1e-8 of pi.
    """
    Q = np.asarray(Q, dtype=float)
    m = Q.shape[0]
    if not np.all(np.isfinite(Q)):
        raise EigenvalueAtMinusOneError("non-finite input to so_principal_log")
    T, Z = sla.schur(Q, output="real")
    L = np.zeros((m, m))
    for i, size in _blocks(T):
        if size == 1:
            if T[i, i] < 0.0:
                raise EigenvalueAtMinusOneError(f"real eigenvalue {T[i, i]:.3g} at index {i}")
            continue
        c = 0.5 * (T[i, i] + T[i + 1, i + 1])
        s = 0.5 * (T[i, i + 1] - T[i + 1, i])
        theta = np.arctan2(s, c)
        if np.pi - abs(theta) < PI_GUARD:
            raise EigenvalueAtMinusOneError(f"rotation angle {theta:.17g} too close to pi")
        L[i, i + 1] = theta
        L[i + 1, i] = -theta
    return skew(Z @ L @ Z.T)


def sylvester_symmetric(S, C):
    """
    Solve S G + G S = C for symmetric S.

    S is diagonalized once and the equation is solved entrywise in the
    eigenbasis, G'_ij = C'_ij / (lambda_i + lambda_j).

    Parameters
    ----------
    S : ndarray, shape (p, p)
        Symmetric coefficient matrix.
    C : ndarray, shape (p, p)
        Right-hand side. If it is skew-symmetric, so is the returned G.

    Returns
    -------
    ndarray, shape (p, p)

    Raises
    ------
    SingularSylvesterError
        If some eigenvalue sum lambda_i + lambda_j is (numerically) zero.
    """
    S = sym(np.asarray(S, dtype=float))
    C = np.asarray(C, dtype=float)
    lam, W = np.linalg.eigh(S)
    denom = lam[:, None] + lam[None, :]
    scale = max(1.0, float(np.max(np.abs(lam)))) if lam.size else 1.0
    if lam.size and np.min(np.abs(denom)) < SYLVESTER_GUARD * scale:
        raise SingularSylvesterError(f"eigenvalue sum {np.min(np.abs(denom)):.3g} is zero")
    G = W @ ((W.T @ C @ W) / denom) @ W.T
    cn = np.linalg.norm(C)
    if cn > 0 and np.linalg.norm(C + C.T) <= 1e-14 * cn:
        G = skew(G)
    return G


def _project_out(v, bases):
    # Two passes of classical Gram-Schmidt ("twice is enough").
    for _ in range(2):
        for B in bases:
            if B.shape[1]:
                v = v - B @ (B.T @ v)
    return v


def orthonormalize_with_completion(U, X, rng=None):
    """
    Factor X = Q N with Q orthonormal and Q^T U = 0, also when X is rank deficient.

    Columns are selected greedily by largest remaining norm (column
    pivoting) and re-orthogonalized against U and the accepted columns.
    A column whose remaining norm is at most 1e-12 * |X|_F is dropped and
    its slot is filled with a random direction orthogonal to U and to
    every other column of Q.

    Parameters
    ----------
    U : ndarray, shape (n, p)
        Orthonormal columns.
    X : ndarray, shape (n, k)
        Matrix whose columns lie in the orthogonal complement of col(U).
    rng : numpy.random.Generator or int, optional
        Source for completion directions. A fixed seed is used by default
        so the result is deterministic.

    Returns
    -------
    Q : ndarray, shape (n, k)
    N : ndarray, shape (k, k)
    """
    U = np.asarray(U, dtype=float)
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    if U.shape[1] + k > n:
        raise ValueError(f"cannot fit {k} columns orthogonal to {U.shape[1]} in R^{n}")
    rng = np.random.default_rng(0 if rng is None else rng)
    tol = 1e-12 * np.linalg.norm(X)
    R = _project_out(X.copy(), [U])
    Q = np.zeros((n, k))
    r = 0
    active = np.ones(k, dtype=bool)
    while r < k:
        norms = np.where(active, np.linalg.norm(R, axis=0), -1.0)
        j = int(np.argmax(norms))
        if norms[j] <= tol or norms[j] == 0.0:
            break
        v = _project_out(R[:, j], [U, Q[:, :r]])
        nv = np.linalg.norm(v)
        if nv <= tol or nv == 0.0:
            active[j] = False
            continue
        q = v / nv
        Q[:, r] = q
        R -= np.outer(q, q @ R)
        active[j] = False
        r += 1
    while r < k:
        v = _project_out(rng.standard_normal(n), [U, Q[:, :r]])
        nv = np.linalg.norm(v)
        if nv < 1e-8:
            continue
        Q[:, r] = v / nv
        r += 1
    N = Q.T @ X
    return Q, N


def orthogonal_complement(U):
    """An n x (n - p) orthonormal basis of the complement of col(U)."""
    n, p = U.shape
    full, _ = np.linalg.qr(U, mode="complete")
    return _project_out(full[:, p:], [U])
