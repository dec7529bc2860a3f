"""
Algebraic Stiefel logarithm for the beta-metric family.

The solver looks for A, C skew and B such that

    [M; N] = exp([[2 beta A, -B^T], [B, C]]) I_{2p x p} exp((1 - 2 beta) A)

with C = 0, where M = U^T U~ and N = Q^T U~. Each outer iteration takes
the principal logarithm of V_k diag(exp(-(1 - 2 beta) A_hat_k), I), reads
off (A_k, B_k, C_k), and rotates the trailing block of V_k by exp(Gamma_k)
where Gamma_k solves a symmetric Sylvester equation driven by C_k. The
strategies differ only in how the estimate A_hat_k of A_k is formed.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import TangentVector, check_stiefel
from .kernels import (
    EigenvalueAtMinusOneError,
    SingularSylvesterError,
    orthonormalize_with_completion,
    skew,
    skew_exp,
    so_principal_log,
    sylvester_symmetric,
)


class NotConvergedError(RuntimeError):
    """An iteration stopped without meeting its tolerance.

    The partial result is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Strategy:
    """How the estimate A_hat_k is chosen inside the outer loop.

    kind is one of ``"backward"``, ``"fixed"``, ``"pseudo"`` or ``"accel"``;
    sub_iterations only matters for ``"pseudo"``.
    """

    kind: str
    sub_iterations: int = 2

    KINDS = ("backward", "fixed", "pseudo", "accel")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "pseudo" and self.sub_iterations < 1:
            raise ValueError("pseudo-backward needs at least one sub-iteration")

    @classmethod
    def parse(cls, text):
        """Parse ``backward``, ``fixed``, ``pseudo:<s>`` or ``accel``."""
        text = text.strip().lower()
        if text.startswith("pseudo"):
            _, _, s = text.partition(":")
            return cls("pseudo", int(s) if s else 2)
        aliases = {"fixed-forward": "fixed", "accelerated": "accel", "accel-forward": "accel"}
        return cls(aliases.get(text, text))

    def __str__(self):
        return f"pseudo:{self.sub_iterations}" if self.kind == "pseudo" else self.kind


BACKWARD = Strategy("backward")
FIXED_FORWARD = Strategy("fixed")
ACCELERATED = Strategy("accel")


def pseudo_backward(sub_iterations=2):
    return Strategy("pseudo", sub_iterations)


ALL_STRATEGIES = (BACKWARD, FIXED_FORWARD, pseudo_backward(2), ACCELERATED)


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the outer iteration.

    sub_tolerance defaults to tol / 10 and is used by the backward strategy
    to solve each quasi-geodesic sub-problem.
    """

    beta: float = 1.0
    tol: float = 1e-10
    max_iterations: int = 200
    strategy: Strategy = ACCELERATED
    sub_tolerance: float | None = None
    sub_max_iterations: int = 200
    record_iterates: bool = False
    diagnostics: bool = False
    reorth_every: int = 20

    def __post_init__(self):
        if isinstance(self.strategy, str):
            object.__setattr__(self, "strategy", Strategy.parse(self.strategy))
        if not self.beta > 0.25:
            raise ValueError(f"the logarithm needs beta > 1/4, got {self.beta}")
        if not self.tol > 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")

    @property
    def tau(self):
        return 1.0 - 2.0 * self.beta

    def effective_sub_tolerance(self):
        return self.tol / 10.0 if self.sub_tolerance is None else self.sub_tolerance


@dataclass
class IterationState:
    """Blocks of one outer iteration (recorded when record_iterates is set)."""

    k: int
    V: np.ndarray
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    A_hat: np.ndarray
    residual: float


@dataclass
class LogResult:
    """Outcome of stiefel_log.

    ``residual_trace`` holds one (|C_k|_F, |A_hat_k - A_k|_F) pair per
    iteration. When the solve fails, ``delta`` is built from the iterate
    with the smallest residual and ``failure`` says why.
    """

    delta: TangentVector
    converged: bool
    iterations: int
    residual_trace: list
    wall_time: float
    beta: float
    strategy: Strategy
    failure: str | None = None
    iterates: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def residual(self):
        c, a = self.residual_trace[-1]
        return c + a

    def distance(self):
        """beta-norm of the returned tangent vector."""
        return self.delta.norm(self.beta)

    def raise_for_status(self):
        if not self.converged:
            raise NotConvergedError(f"logarithm did not converge: {self.failure}", self)
        return self

    def to_dict(self, include_time=True):
        """JSON-ready diagnostics document."""
        doc = {
            "schema": 1,
            "config": {"beta": self.beta, "strategy": str(self.strategy)},
            "converged": self.converged,
            "iterations": self.iterations,
            "failure": self.failure,
            "residuals": [[float(c), float(a)] for c, a in self.residual_trace],
            "distance": self.distance(),
        }
        if include_time:
            doc["wall_time"] = self.wall_time
        return doc


def _split(X, p, beta):
    """Blocks (A, B, C) of X = [[2 beta A, -B^T], [B, C]]."""
    return skew(X[:p, :p]) / (2.0 * beta), X[p:, :p].copy(), skew(X[p:, p:])


def _right_factor(V, p, tau, A_hat):
    """V diag(exp(-tau A_hat), I)."""
    if tau == 0.0:
        return V
    W = V.copy()
    W[:, :p] = V[:, :p] @ skew_exp(-tau * A_hat)
    return W


def build_initial_V0(U, U_tilde):
    """
    Initial V_0 in SO(2p) and the complement frame Q.

    Parameters
    ----------
    U, U_tilde : ndarray, shape (n, p)
        Points of St(n, p) with n >= 2p.

    Returns
    -------
    V0 : ndarray, shape (2p, 2p)
        [[M, O0], [N, P0]] with M = U^T U~ and P0 diagonal.
    Q : ndarray, shape (n, p)
        Orthonormal with Q^T U = 0 and (I - U U^T) U~ = Q N.

    Notes
    -----
    With Q_hat N_hat = (I - U U^T) U~ and any orthogonal completion
    [O_hat; P_hat] of [M; N_hat], the SVD P_hat = R Sigma R~^T gives
    Q = Q_hat R, N = R^T N_hat, O0 = O_hat R~ and P0 = Sigma. If the
    resulting determinant is -1 the last column of [O0; P0] is negated,
    which flips the sign of the smallest singular value.
    """
    U = np.asarray(U, dtype=float)
    Ut = np.asarray(U_tilde, dtype=float)
    n, p = U.shape
    if Ut.shape != (n, p):
        raise ValueError(f"U~ has shape {Ut.shape}, expected {(n, p)}")
    if n < 2 * p:
        raise ValueError(f"the logarithm needs n >= 2p, got n={n}, p={p}")
    M = U.T @ Ut
    Q_hat, N_hat = orthonormalize_with_completion(U, Ut - U @ M)
    left = np.vstack([M, N_hat])
    full, _ = np.linalg.qr(left, mode="complete")
    comp = full[:, p:]
    comp = comp - left @ (left.T @ comp)
    comp, _ = np.linalg.qr(comp)
    O_hat, P_hat = comp[:p], comp[p:]
    R, sigma, Rt_T = np.linalg.svd(P_hat)
    V0 = np.empty((2 * p, 2 * p))
    V0[:p, :p] = M
    V0[p:, :p] = R.T @ N_hat
    V0[:p, p:] = O_hat @ Rt_T.T
    V0[p:, p:] = np.diag(sigma)
    if np.linalg.det(V0) < 0:
        V0[:, -1] = -V0[:, -1]
    return V0, Q_hat @ R


def initial_A_hat(V0, beta):
    """
    Starting estimate A_hat_0 from a second-order expansion of the top-left block.

    With log(V0) = [[E, -F^T], [F, G]], solves S X + X S = E for
    S = I/2 - (tau/12) F^T F, tau = 1 - 2 beta.
    """
    p = V0.shape[0] // 2
    L = so_principal_log(V0)
    return initial_A_hat_from_log(L, beta, p)


def initial_A_hat_from_log(L, beta, p):
    tau = 1.0 - 2.0 * beta
    E, F = L[:p, :p], L[p:, :p]
    if tau == 0.0 or not np.any(F):
        return skew(E)
    S = 0.5 * np.eye(p) - (tau / 12.0) * (F.T @ F)
    return skew(sylvester_symmetric(S, E))


@dataclass
class SubproblemResult:
    """Solution (D, B, C) of the quasi-geodesic sub-problem."""

    D: np.ndarray
    B: np.ndarray
    C: np.ndarray
    converged: bool
    iterations: int
    residuals: list

    def generator(self, beta):
        p = self.D.shape[0]
        X = np.zeros((2 * p, 2 * p))
        X[:p, :p] = 2.0 * beta * self.D
        X[:p, p:] = -self.B.T
        X[p:, :p] = self.B
        X[p:, p:] = self.C
        return X


def quasi_geodesic(D, B, C, beta, t=1.0):
    """gamma(t) = exp(t [[2 beta D, -B^T], [B, C]]) diag(exp(t (1 - 2 beta) D), I)."""
    p = D.shape[0]
    X = np.zeros((2 * p, 2 * p))
    X[:p, :p] = 2.0 * beta * D
    X[:p, p:] = -B.T
    X[p:, :p] = B
    X[p:, p:] = C
    G = skew_exp(t * X)
    G[:, :p] = G[:, :p] @ skew_exp(t * (1.0 - 2.0 * beta) * D)
    return G


def _subproblem_step(V, D_hat, beta):
    """One pass of the sub-problem iteration: (D, B, C, next D_hat)."""
    p = V.shape[0] // 2
    tau = 1.0 - 2.0 * beta
    D, B, C = _split(so_principal_log(_right_factor(V, p, tau, D_hat)), p, beta)
    if tau == 0.0:
        return D, B, C, D
    Et = skew_exp(-tau * D)
    return D, B, C, skew(D - tau * Et @ (D - D_hat) @ Et.T)


def subproblem_iterative(V, D_hat0, beta, eps=1e-12, max_iter=200, strict=True):
    """
    Iterative solver of the quasi-geodesic sub-problem.

    Finds D, C skew and B with gamma(1) = V for the curve of
    ``quasi_geodesic``. Each iteration reads (2 beta D_k, B_k, C_k) off
    log(V diag(exp(-tau D_hat_k), I)) and moves the estimate with
    D_hat_{k+1} = D_k - tau exp(-tau D_k) (D_k - D_hat_k) exp(tau D_k).

    Parameters
    ----------
    V : ndarray, shape (2p, 2p)
        Special orthogonal target.
    D_hat0 : ndarray, shape (p, p)
        Skew starting estimate.
    beta, eps : float
        Metric parameter and tolerance on |D_k - D_hat_k|_F.
    max_iter : int
    strict : bool
        Raise NotConvergedError on failure instead of returning the last
        iterate with ``converged=False``.

    Returns
    -------
    SubproblemResult
    """
    D_hat = skew(np.asarray(D_hat0, dtype=float))
    residuals = []
    for k in range(max_iter + 1):
        D, B, C, D_next = _subproblem_step(V, D_hat, beta)
        r = float(np.linalg.norm(D - D_hat))
        residuals.append(r)
        if r < eps:
            return SubproblemResult(D, B, C, True, k, residuals)
        D_hat = D_next
    res = SubproblemResult(D, B, C, False, max_iter, residuals)
    if strict:
        raise NotConvergedError(f"sub-problem did not converge in {max_iter} iterations", res)
    return res


def subproblem_shooting(V, M0=None, beta=1.0, eps=1e-12, times=(0.0, 0.5, 1.0), max_iter=500, strict=True):
    """
    Shooting solver of the quasi-geodesic sub-problem.

    The error W = V - gamma(1) is carried back to the identity by
    projecting it successively onto the tangent spaces at gamma(t_j),
    t_j from 1 down to 0, rescaling to the original error norm after each
    projection. The transported error is added to the shooting direction
    M = [[D, -B^T], [B, C]].

    Parameters
    ----------
    V : ndarray, shape (2p, 2p)
    M0 : ndarray, shape (2p, 2p), optional
        Initial shooting direction; zero by default.
    beta, eps : float
    times : sequence of float
        Increasing, from 0 to 1.

    Returns
    -------
    SubproblemResult
        ``residuals`` holds |V - gamma(1)|_F per iteration.
    """
    V = np.asarray(V, dtype=float)
    p = V.shape[0] // 2
    ts = np.asarray(times, dtype=float)
    if ts.size < 2 or ts[0] != 0.0 or ts[-1] != 1.0 or np.any(np.diff(ts) <= 0):
        raise ValueError("times must increase strictly from 0 to 1")
    M = np.zeros_like(V) if M0 is None else skew(np.asarray(M0, dtype=float))
    residuals = []
    for k in range(max_iter + 1):
        D, B, C = M[:p, :p], M[p:, :p], M[p:, p:]
        W = None
        for t in ts[::-1]:
            Vs = quasi_geodesic(D, B, C, beta, t)
            if W is None:
                W = V - Vs
                nu = float(np.linalg.norm(W))
                residuals.append(nu)
                if nu <= eps:
                    return SubproblemResult(D.copy(), B.copy(), C.copy(), True, k, residuals)
            Ms = skew(Vs.T @ W)
            nm = np.linalg.norm(Ms)
            if nm == 0.0:
                break
            W = Vs @ Ms * (nu / nm)
        M = skew(M + Ms)
    res = SubproblemResult(D.copy(), B.copy(), C.copy(), False, max_iter, residuals)
    if strict:
        raise NotConvergedError(f"shooting did not converge in {max_iter} iterations", res)
    return res


def choose_A_hat(strategy, beta, V, A_prev, A_hat_prev, sub_tol=1e-12, sub_max_iter=200):
    """
    Estimate A_hat_k of the next A_k, for k >= 1.

    Parameters
    ----------
    strategy : Strategy
    beta : float
    V : ndarray, shape (2p, 2p)
        The current V_k.
    A_prev, A_hat_prev : ndarray, shape (p, p)
        A_{k-1} and A_hat_{k-1}.

    Returns
    -------
    ndarray, shape (p, p)
    """
    tau = 1.0 - 2.0 * beta
    if tau == 0.0 or strategy.kind == "fixed":
        return A_prev
    if strategy.kind == "accel":
        Et = skew_exp(-tau * A_prev)
        return skew(A_prev - tau * Et @ (A_prev - A_hat_prev) @ Et.T)
    if strategy.kind == "pseudo":
        D_hat = A_prev
        for _ in range(strategy.sub_iterations):
            D, _, _, D_hat = _subproblem_step(V, D_hat, beta)
        return D_hat
    res = subproblem_iterative(V, A_prev, beta, eps=sub_tol, max_iter=sub_max_iter, strict=False)
    return res.D


def _reorthonormalize(V, p):
    """Polar correction of the trailing block, keeping the data columns [M; N]."""
    left = V[:, :p]
    W = V[:, p:] - left @ (left.T @ V[:, p:])
    X, _, Yt = np.linalg.svd(W, full_matrices=False)
    V[:, p:] = X @ Yt


def stiefel_log(U, U_tilde, config=None, **overrides):
    """
    Riemannian logarithm Log_{beta,U}(U~) by the algebraic iteration.

    Parameters
    ----------
    U, U_tilde : ndarray, shape (n, p)
        Points of St(n, p) with n >= 2p.
    config : SolverConfig, optional
    **overrides
        Field overrides applied to ``config`` (for example ``beta=0.7``).

    Returns
    -------
    LogResult
        Never raises on non-convergence; check ``converged`` or call
        ``raise_for_status()``.
    """
    cfg = config or SolverConfig()
    if overrides:
        cfg = SolverConfig(**{**cfg.__dict__, **overrides})
    U = check_stiefel(U)
    Ut = check_stiefel(U_tilde)
    n, p = U.shape
    beta, tau = cfg.beta, cfg.tau
    start = time.perf_counter()

    V, Q = build_initial_V0(U, Ut)
    trace, iterates = [], []
    diag = {"L2": [], "X2": [], "C2": [], "Gamma2": [], "Theta2": []} if cfg.diagnostics else {}
    best = None
    failure = None
    converged = False
    A = A_hat = None
    k = 0
    updates = 0
    try:
        L0 = so_principal_log(V)
        A_hat = initial_A_hat_from_log(L0, beta, p)
        for k in range(cfg.max_iterations + 1):
            if k > 0:
                A_hat_prev = A_hat
                A_hat = choose_A_hat(
                    cfg.strategy, beta, V, A, A_hat_prev,
                    cfg.effective_sub_tolerance(), cfg.sub_max_iterations,
                )
                if cfg.diagnostics:
                    T = skew_exp(tau * A_hat_prev) @ skew_exp(-tau * A_hat)
                    diag["Theta2"].append(float(np.linalg.norm(so_principal_log(T), 2)))
            X = so_principal_log(_right_factor(V, p, tau, A_hat))
            A, B, C = _split(X, p, beta)
            c_norm = float(np.linalg.norm(C))
            a_gap = float(np.linalg.norm(A_hat - A))
            trace.append((c_norm, a_gap))
            if best is None or c_norm + a_gap < best[0]:
                best = (c_norm + a_gap, A, B)
            if cfg.record_iterates:
                iterates.append(IterationState(k, V.copy(), A, B, C, A_hat, c_norm + a_gap))
            if cfg.diagnostics:
                Lk = X.copy()
                Lk[:p, :p] = A
                diag["L2"].append(float(np.linalg.norm(Lk, 2)))
                diag["X2"].append(float(np.linalg.norm(X, 2)))
                diag["C2"].append(float(np.linalg.norm(C, 2)))
            if not np.isfinite(c_norm + a_gap):
                failure = "non-finite residual"
                break
            if c_norm + a_gap <= cfg.tol:
                converged = True
                break
            if k == cfg.max_iterations:
                failure = f"max_iterations={cfg.max_iterations} reached"
                break
            Gamma = sylvester_symmetric(B @ B.T / 12.0 - 0.5 * np.eye(p), C)
            if cfg.diagnostics:
                diag["Gamma2"].append(float(np.linalg.norm(Gamma, 2)))
            V[:, p:] = V[:, p:] @ skew_exp(Gamma)
            updates += 1
            drift = np.linalg.norm(V.T @ V - np.eye(2 * p))
            if updates % cfg.reorth_every == 0 or drift > 1e-11:
                _reorthonormalize(V, p)
    except EigenvalueAtMinusOneError as exc:
        failure = f"principal logarithm undefined: {exc}"
    except SingularSylvesterError as exc:
        failure = f"singular Sylvester equation: {exc}"

    if best is None:
        A_out, B_out = np.zeros((p, p)), np.zeros((p, p))
    elif converged:
        A_out, B_out = A, B
    else:
        A_out, B_out = best[1], best[2]
    delta = TangentVector(U, A_out, Q, B_out)
    return LogResult(
        delta=delta,
        converged=converged,
        iterations=k,
        residual_trace=trace,
        wall_time=time.perf_counter() - start,
        beta=beta,
        strategy=cfg.strategy,
        failure=failure,
        iterates=iterates,
        diagnostics=diag,
    )


def canonical_log(U, U_tilde, tol=1e-10, max_iterations=200, record_iterates=True):
    """
    Canonical-metric (beta = 1/2) logarithm, the plain iteration without A_hat.

    Returns a LogResult whose residual trace pairs are (|C_k|_F, 0).
    """
    U = check_stiefel(U)
    Ut = check_stiefel(U_tilde)
    p = U.shape[1]
    start = time.perf_counter()
    V, Q = build_initial_V0(U, Ut)
    trace, iterates = [], []
    converged, failure = False, None
    A = B = np.zeros((p, p))
    k = 0
    try:
        for k in range(max_iterations + 1):
            X = so_principal_log(V)
            A, B, C = _split(X, p, 0.5)
            c_norm = float(np.linalg.norm(C))
            trace.append((c_norm, 0.0))
            if record_iterates:
                iterates.append(IterationState(k, V.copy(), A, B, C, A, c_norm))
            if c_norm <= tol:
                converged = True
                break
            if k == max_iterations:
                failure = f"max_iterations={max_iterations} reached"
                break
            Gamma = sylvester_symmetric(B @ B.T / 12.0 - 0.5 * np.eye(p), C)
            V[:, p:] = V[:, p:] @ skew_exp(Gamma)
            if (k + 1) % 20 == 0 or np.linalg.norm(V.T @ V - np.eye(2 * p)) > 1e-11:
                _reorthonormalize(V, p)
    except (EigenvalueAtMinusOneError, SingularSylvesterError) as exc:
        failure = str(exc)
    return LogResult(
        delta=TangentVector(U, A, Q, B),
        converged=converged,
        iterations=k,
        residual_trace=trace,
        wall_time=time.perf_counter() - start,
        beta=0.5,
        strategy=FIXED_FORWARD,
        failure=failure,
        iterates=iterates,
    )


def geodesic_distance(U, U_tilde, config=None, **overrides):
    """
    beta-norm of the computed logarithm.

    This is the geodesic distance when U~ lies inside the injectivity
    radius of U; no check is made.

    Raises
    ------
    NotConvergedError
    """
    return stiefel_log(U, U_tilde, config, **overrides).raise_for_status().distance()
