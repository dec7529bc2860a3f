"""
Rate constants of the local linear convergence bound and the (beta, delta)
admissibility region.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RateConstants:
    """Constants of the contraction bound at (beta, delta).

    Fields that cannot be evaluated are NaN; ``reason`` names the first
    violated condition when ``feasible`` is False.
    """

    beta: float
    delta: float
    tau: float
    zeta: float
    eta: float
    alpha: float
    kappa: float
    xi: float
    rate: float
    feasible: bool
    reason: str | None = None


def _constants(beta, delta):
    """Vectorized evaluation; returns a dict of arrays plus a reason-code array."""
    beta = np.asarray(beta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    beta, delta = np.broadcast_arrays(beta, delta)
    tau = 1.0 - 2.0 * beta
    at = np.abs(tau)
    nan = np.full(beta.shape, np.nan)
    reason = np.full(beta.shape, "", dtype=object)

    ok_zeta = 2.0 * delta * at < 1.0
    ok_series = delta * (1.0 + at) < 1.0
    ok_d2 = delta**2 < 6.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        zeta = np.where(ok_zeta, (at * delta) ** 2 * np.log(1.0 / np.where(ok_zeta, 1.0 - 2.0 * delta * at, 1.0)), nan)
        eta = at * (1.0 + delta * at + (2.0 / 3.0) * delta**2 * at**2 + zeta)
        alpha = np.where(ok_series, delta**4 * (1.0 + at) ** 4 / (1.0 - delta * (1.0 + at)), nan)
        six = 6.0 - delta**2
        xi = 2.0 * beta - eta * (1.0 + 2.0 * beta * delta + (4.0 * beta**2 / 3.0) * delta**2 + delta**2 / 6.0 + delta**3 / six)
        kappa = np.maximum(6.0 / six, eta * delta**2 / (xi * six))
        denom = 1.0 - eta * alpha / xi
        rate = eta * delta**4 / (6.0 * xi * six) + (1.0 + eta / xi) * kappa * alpha / denom
    ok_xi = xi > 0
    ok_denom = denom > 0
    ok_rate = rate < 1.0
    checks = [
        (ok_d2, "delta^2 >= 6"),
        (ok_series, "delta(1+|tau|) >= 1"),
        (ok_zeta, "2 delta |tau| >= 1"),
        (ok_xi, "xi <= 0"),
        (ok_denom, "1 - eta alpha / xi <= 0"),
        (ok_rate, "rate >= 1"),
    ]
    feasible = np.ones(beta.shape, dtype=bool)
    for ok, code in checks:
        ok = np.asarray(ok, dtype=bool)
        newly = feasible & ~ok
        reason[newly] = code
        feasible &= ok
    return dict(tau=tau, zeta=zeta, eta=eta, alpha=alpha, kappa=kappa, xi=xi, rate=rate), feasible, reason


def evaluate_constants(beta, delta):
    """
    Evaluate the rate constants at a single (beta, delta).

    Parameters
    ----------
    beta, delta : float
        Both positive.

    Returns
    -------
    RateConstants
        ``feasible`` is the conjunction delta(1+|tau|) < 1,
        1 - eta alpha / xi > 0, 2 delta |tau| < 1, xi > 0 and rate < 1.
    """
    if not (beta > 0 and delta > 0):
        raise ValueError(f"beta and delta must be positive, got beta={beta}, delta={delta}")
    vals, feasible, reason = _constants(beta, delta)
    vals = {k: float(v) for k, v in vals.items()}
    ok = bool(feasible)
    return RateConstants(beta=float(beta), delta=float(delta), feasible=ok,
                         reason=None if ok else str(reason), **vals)


def feasibility_grid(betas, deltas):
    """
    Feasibility and rate on the tensor grid betas x deltas.

    Returns
    -------
    feasible : ndarray of bool, shape (len(betas), len(deltas))
    rate : ndarray of float, same shape (NaN where undefined)
    """
    B, D = np.meshgrid(np.asarray(betas, float), np.asarray(deltas, float), indexing="ij")
    vals, feasible, _ = _constants(B, D)
    return feasible, vals["rate"]


def scan_region(beta_range=(0.25, 1.25), delta_range=(0.0, 1.0), n_beta=2000, n_delta=2000):
    """
    Rows (beta, delta, feasible, rate) over a uniform grid.

    Both ranges are half-open at the lower end: (lo, hi].
    """
    betas = np.linspace(beta_range[0], beta_range[1], n_beta + 1)[1:]
    deltas = np.linspace(delta_range[0], delta_range[1], n_delta + 1)[1:]
    feasible, rate = feasibility_grid(betas, deltas)
    return betas, deltas, feasible, rate


def max_feasible_delta(beta, grid_resolution=2000, tol=1e-6):
    """
    Largest admissible delta for a given beta.

    A uniform grid on (0, 1) locates the last feasible point, which is
    then refined by bisection against the next grid point.

    Returns
    -------
    float
        0.0 when no grid point is feasible (always the case for beta <= 1/4).
    """
    if beta <= 0.25:
        return 0.0
    deltas = np.linspace(0.0, 1.0, grid_resolution + 1)[1:]
    feasible, _ = feasibility_grid([beta], deltas)
    idx = np.flatnonzero(feasible[0])
    if idx.size == 0:
        return 0.0
    i = idx[-1]
    lo = deltas[i]
    hi = deltas[i + 1] if i + 1 < deltas.size else 1.0
    if i + 1 >= deltas.size:
        return float(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if evaluate_constants(beta, mid).feasible:
            lo = mid
        else:
            hi = mid
    return float(lo)


def canonical_rate(delta):
    """Contraction factor 6 delta^4 / ((6 - delta^2)(1 - delta)) of the beta = 1/2 case."""
    return 6.0 * delta**4 / ((6.0 - delta**2) * (1.0 - delta))


@dataclass
class RateReport:
    """Empirical vs theoretical contraction of |C_k|_2 for one run."""

    beta: float
    delta_run: float
    bound: float | None
    applicable: bool
    tail_ratios: list
    empirical_ratio: float | None
    hypothesis_index: int | None
    flagged: bool


def theoretical_rate_bound(result, floor=1e-13, burn_in=0.25):
    """
    Compare a run's contraction of |C_k|_2 with the theoretical rate.

    Parameters
    ----------
    result : LogResult
        Produced with ``diagnostics=True``.
    floor : float
        Ratios where |C_k|_2 or |C_{k+1}|_2 is below this are dropped;
        they are dominated by rounding.
    burn_in : float
        Fraction of leading iterations excluded from the tail.

    Returns
    -------
    RateReport
        ``delta_run`` is max_k |L_k|_2. The bound is only applicable when
        (beta, delta_run) is admissible. ``hypothesis_index`` is the first
        k with |Y_k|_2 <= |X_k|_2.
    """
    d = result.diagnostics
    if not d or not d.get("L2"):
        raise ValueError("run the solver with diagnostics=True")
    delta_run = float(max(d["L2"]))
    c2 = d["C2"]
    start = int(np.floor(burn_in * len(c2)))
    tail = [c2[k + 1] / c2[k] for k in range(start, len(c2) - 1)
            if min(c2[k], c2[k + 1]) > floor]
    emp = max(tail) if tail else None

    hyp = None
    for k, (g, x) in enumerate(zip(d["Gamma2"], d["X2"])):
        th = d["Theta2"][k] if k < len(d["Theta2"]) else 0.0
        if max(g, th) <= x:
            hyp = k
            break

    const = evaluate_constants(result.beta, delta_run) if delta_run > 0 else None
    applicable = const is not None and const.feasible
    bound = const.rate if applicable else None
    flagged = bool(applicable and emp is not None and hyp is not None and emp > bound)
    return RateReport(result.beta, delta_run, bound, applicable, tail, emp, hyp, flagged)
