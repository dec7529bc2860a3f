"""
Experiment protocols: min-of-repetitions benchmarking, convergence
sampling with a logistic radius model, and strategy comparison sweeps.

Every protocol is deterministic given its seed. Pairs are generated once
per sample from a child of ``numpy.random.SeedSequence(seed)`` so results
do not depend on the order or the number of workers.
"""

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .geometry import TargetUnreachableError, random_pair_at_distance
from .solver import ACCELERATED, FIXED_FORWARD, SolverConfig, Strategy, pseudo_backward, stiefel_log

# Half-width of the distance window, as a fraction of the diameter 2 sqrt(p).
DISTANCE_WINDOW = 0.01
# 25 equispaced fractions of 2 sqrt(p) used for radius estimation.
DEFAULT_RADIUS_GRID = tuple(np.linspace(0.05, 0.95, 25))
THREADS_ENV = "STIEFEL_LOG_THREADS"


class DegenerateLabelsError(ValueError):
    """All samples carry the same label; no logistic model can be fitted."""


class SeparableDataError(RuntimeError):
    """The likelihood has no finite maximizer (the parameters diverge)."""

    def __init__(self, message, theta=None):
        super().__init__(message)
        self.theta = theta


def worker_count(default=1):
    """Worker cap from the STIEFEL_LOG_THREADS environment variable."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def _map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _as_strategies(strategies):
    return [s if isinstance(s, Strategy) else Strategy.parse(s) for s in strategies]


def _pair(n, p, fraction, seed, window=DISTANCE_WINDOW):
    diameter = 2.0 * math.sqrt(p)
    return random_pair_at_distance(n, p, fraction * diameter, window * diameter, seed=seed)


# ---------------------------------------------------------------------------
# Benchmark


@dataclass(frozen=True)
class BenchmarkSpec:
    """
    Benchmark configuration.

    Attributes
    ----------
    n, p : int
    beta_grid : list of float
    distance_fraction : float
        Target distance |U - U~|_F as a fraction of 2 sqrt(p), in [0, 1).
        Zero gives trivial pairs U~ = U.
    N : int
        Number of random pairs.
    T : int
        Timed repetitions per pair.
    strategies : list of Strategy or str
    tol : float
        Solver tolerance.
    max_iterations : int
    seed : int
    """

    n: int
    p: int
    beta_grid: tuple = (0.5, 1.0)
    distance_fraction: float = 0.15
    N: int = 10
    T: int = 10
    strategies: tuple = ("fixed", "pseudo:1", "pseudo:2", "accel")
    tol: float = 1e-10
    max_iterations: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.T < 1:
            raise ValueError(f"N and T must be at least 1, got N={self.N}, T={self.T}")
        if not 0.0 <= self.distance_fraction < 1.0:
            raise ValueError(f"distance_fraction must lie in [0, 1), got {self.distance_fraction}")
        if not self.n >= 2 * self.p >= 2:
            raise ValueError(f"benchmark needs n >= 2p >= 2, got n={self.n}, p={self.p}")
        object.__setattr__(self, "beta_grid", tuple(float(b) for b in self.beta_grid))
        object.__setattr__(self, "strategies", tuple(_as_strategies(self.strategies)))

    @classmethod
    def from_dict(cls, doc):
        """Build from a JSON-style mapping, rejecting unknown keys."""
        known = set(cls.__dataclass_fields__)
        extra = set(doc) - known
        if extra:
            raise ValueError(f"unknown benchmark keys: {sorted(extra)}")
        return cls(**doc)


def aggregate_times(times):
    """
    t_M from a table of repetition times.

    Parameters
    ----------
    times : sequence of sequences
        times[i] holds the times of the successful repetitions on pair i;
        an empty entry marks a pair where every repetition failed.

    Returns
    -------
    t_M : float
        Mean over pairs of the minimum time (NaN if every pair failed).
    failures : int
    """
    mins = [min(t) for t in times if len(t)]
    failures = sum(1 for t in times if not len(t))
    return (float(np.mean(mins)) if mins else float("nan")), failures


def run_benchmark(spec):
    """
    Time every (strategy, beta) combination on the same N pairs.

    The clock wraps the solver call only. Repetitions run sequentially so
    that concurrent solves cannot distort each other's timing.

    Returns
    -------
    list of dict
        One row per (strategy, beta) with keys strategy, beta, t_M,
        failures and mean_iterations.
    """
    seeds = np.random.SeedSequence(spec.seed).spawn(spec.N)
    pairs = [_pair(spec.n, spec.p, spec.distance_fraction, np.random.default_rng(s)) for s in seeds]
    rows = []
    for strategy in spec.strategies:
        for beta in spec.beta_grid:
            config = SolverConfig(beta=beta, tol=spec.tol, max_iterations=spec.max_iterations,
                                  strategy=strategy)
            times, iters = [], []
            for U, Ut in pairs:
                ok = []
                for _ in range(spec.T):
                    t0 = time.perf_counter()
                    res = stiefel_log(U, Ut, config)
                    elapsed = time.perf_counter() - t0
                    if res.converged:
                        ok.append(elapsed)
                        iters.append(res.iterations)
                times.append(ok)
            t_M, failures = aggregate_times(times)
            rows.append({
                "strategy": str(strategy),
                "beta": beta,
                "t_M": t_M,
                "failures": failures,
                "mean_iterations": float(np.mean(iters)) if iters else float("nan"),
            })
    return rows


# ---------------------------------------------------------------------------
# Convergence sampling and the logistic radius


@dataclass
class ConvergenceDataset:
    """
    Labelled convergence samples.

    Attributes
    ----------
    x : ndarray
        Distances |U_i - U~_i|_F.
    y : ndarray of int
        1 when the solver converged on pair i, else 0.
    group : ndarray of int
        Index of the distance-grid point each sample was drawn for.
    skipped : int
        Requested samples whose target distance could not be generated.
    """

    x: np.ndarray
    y: np.ndarray
    group: np.ndarray
    skipped: int = 0

    def __len__(self):
        return int(self.x.size)


def _sample_one(args):
    n, p, beta, fraction, seed, config = args
    rng = np.random.default_rng(seed)
    try:
        U, Ut = _pair(n, p, fraction, rng)
    except TargetUnreachableError:
        return None
    res = stiefel_log(U, Ut, config)
    return float(np.linalg.norm(U - Ut)), int(res.converged)


def sample_convergence(n, p, beta, distance_grid=DEFAULT_RADIUS_GRID, samples_per_point=40, seed=0,
                       strategy=None, tol=1e-10, max_iterations=200, workers=None):
    """
    Run the solver on random pairs spread over a grid of distances.

    Parameters
    ----------
    n, p : int
    beta : float
    distance_grid : sequence of float
        Target distances as fractions of 2 sqrt(p).
    samples_per_point : int
    seed : int
    strategy : Strategy or str, optional
        Defaults to pseudo-backward with two sub-iterations.
    tol, max_iterations
        Solver settings; a sample is labelled 1 when the solver meets tol
        within max_iterations.
    workers : int, optional
        Parallel solves; defaults to STIEFEL_LOG_THREADS or 1.

    Returns
    -------
    ConvergenceDataset
        Samples whose target distance cannot be generated are skipped and
        counted.
    """
    strategy = pseudo_backward(2) if strategy is None else strategy
    config = SolverConfig(beta=beta, tol=tol, max_iterations=max_iterations, strategy=strategy)
    grid = [float(f) for f in distance_grid]
    children = np.random.SeedSequence(seed).spawn(len(grid) * samples_per_point)
    jobs = [(n, p, beta, grid[g], children[g * samples_per_point + j], config)
            for g in range(len(grid)) for j in range(samples_per_point)]
    out = _map(_sample_one, jobs, worker_count() if workers is None else workers)
    x, y, group, skipped = [], [], [], 0
    for idx, item in enumerate(out):
        if item is None:
            skipped += 1
            continue
        x.append(item[0])
        y.append(item[1])
        group.append(idx // samples_per_point)
    return ConvergenceDataset(np.asarray(x, float), np.asarray(y, int), np.asarray(group, int), skipped)


def logistic_probability(theta0, theta1, x):
    """m(x) = 1 / (1 + exp(theta0 + theta1 x)), evaluated stably."""
    z = theta0 + theta1 * np.asarray(x, dtype=float)
    return np.exp(-np.logaddexp(0.0, z))


def radius_from_theta(theta0, theta1, level=0.99):
    """
    Largest x with m(x) >= level.

    Returns NaN when theta1 <= 0: success probability then does not
    decrease with the distance and no finite radius exists.
    """
    if not theta1 > 0:
        return float("nan")
    return (math.log((1.0 - level) / level) - theta0) / theta1


@dataclass
class LogisticModel:
    """
    Fitted success-probability model m(x) = 1 / (1 + exp(theta0 + theta1 x)).

    Attributes
    ----------
    theta0, theta1 : float
    r2 : float
        Binned-probability coefficient of determination.
    radius99 : float
        Largest distance with predicted success probability >= 0.99.
    r2_mcfadden : float
        1 - loglik / loglik_null.
    loglik : float
    iterations : int
    gradient_norm : float
    history : list of float
        Log-likelihood after each accepted step.
    """

    theta0: float
    theta1: float
    r2: float
    radius99: float
    r2_mcfadden: float = float("nan")
    loglik: float = float("nan")
    iterations: int = 0
    gradient_norm: float = float("nan")
    history: list = field(default_factory=list, repr=False)

    def predict(self, x):
        return logistic_probability(self.theta0, self.theta1, x)


def _negloglik(theta, x, y):
    z = theta[0] + theta[1] * x
    return float(np.sum(np.logaddexp(0.0, z) - (1.0 - y) * z))


def _gradient(theta, x, y):
    z = theta[0] + theta[1] * x
    r = 1.0 / (1.0 + np.exp(-z)) - (1.0 - y)
    return np.array([np.sum(r), np.sum(r * x)])


def binned_r2(x, y, prob, groups=None, bins=20):
    """
    Weighted R^2 between per-bin success rates and mean predicted probabilities.

    Bins are the sampling groups when given, otherwise equal-width bins on
    the range of x. Each bin is weighted by its sample count.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if groups is None:
        edges = np.linspace(x.min(), x.max(), bins + 1)
        groups = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, bins - 1)
    groups = np.asarray(groups)
    labels = np.unique(groups)
    w = np.array([np.sum(groups == g) for g in labels], float)
    obs = np.array([y[groups == g].mean() for g in labels])
    pred = np.array([prob[groups == g].mean() for g in labels])
    mean = np.sum(w * obs) / np.sum(w)
    ss_tot = np.sum(w * (obs - mean) ** 2)
    ss_res = np.sum(w * (obs - pred) ** 2)
    return float(1.0 - ss_res / ss_tot) if ss_tot > 0 else float("nan")


def fit_logistic(dataset, tol=1e-8, max_iterations=500_000, divergence=1e6):
    """
    Maximum-likelihood logistic fit by Nesterov's accelerated gradient.

    The distances are standardized first (a linear change of the
    parameters that leaves the likelihood unchanged). The step is 1/L with
    L = (sum z_i^2 + N) / 4, a Lipschitz constant of the gradient in the
    standardized variables z. Momentum is reset whenever a step would lower the
    likelihood, so the accepted log-likelihood sequence never decreases.

    Parameters
    ----------
    dataset : ConvergenceDataset or (x, y)
    tol : float
        Stop when |grad f(theta)| < tol.
    max_iterations : int
    divergence : float
        |theta| beyond this raises SeparableDataError.

    Returns
    -------
    LogisticModel

    Raises
    ------
    DegenerateLabelsError
        If all labels are equal.
    SeparableDataError
        If a distance threshold separates the labels, or the parameters
        diverge past ``divergence``.
    RuntimeError
        If the gradient tolerance is not reached within max_iterations.
    """
    groups = getattr(dataset, "group", None)
    if isinstance(dataset, ConvergenceDataset):
        x, y = dataset.x, dataset.y
    else:
        x, y = dataset
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size == 0 or np.all(y == y[0]):
        raise DegenerateLabelsError("logistic fit needs both labels 0 and 1")
    ok, bad = x[y == 1], x[y == 0]
    if ok.max() <= bad.min() or bad.max() <= ok.min():
        # A threshold splits the labels: the likelihood increases without bound.
        raise SeparableDataError("labels are separated by a distance threshold; no finite maximizer")
    # Optimize over standardized distances z = (x - mu) / s; theta follows
    # from phi linearly and the stopping test uses the gradient in theta.
    mu = float(x.mean())
    s = float(x.std()) or 1.0
    z = (x - mu) / s

    def to_theta(phi):
        return np.array([phi[0] - phi[1] * mu / s, phi[1] / s])

    L = 0.25 * (np.sum(z**2) + z.size)
    phi = np.zeros(2)
    look = phi.copy()
    t = 1.0
    f = _negloglik(phi, z, y)
    history = [-f]
    g_phi = _gradient(phi, z, y)
    g = _gradient(to_theta(phi), x, y)
    k = 0
    while np.linalg.norm(g) >= tol:
        if k >= max_iterations:
            raise RuntimeError(f"logistic fit stopped at |grad| = {np.linalg.norm(g):.3g} "
                               f"after {k} iterations")
        k += 1
        cand = look - _gradient(look, z, y) / L
        fc = _negloglik(cand, z, y)
        if fc > f:
            # Restart: plain gradient step from the current point.
            t = 1.0
            cand = phi - g_phi / L
            fc = _negloglik(cand, z, y)
            look = cand.copy()
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            look = cand + ((t - 1.0) / t_next) * (cand - phi)
            t = t_next
        phi, f = cand, fc
        history.append(-f)
        g_phi = _gradient(phi, z, y)
        theta = to_theta(phi)
        g = _gradient(theta, x, y)
        if np.linalg.norm(theta) > divergence:
            raise SeparableDataError(
                f"parameters diverge (|theta| = {np.linalg.norm(theta):.3g}); labels look separable",
                theta=theta.copy())
    theta = to_theta(phi)
    ybar = y.mean()
    ll_null = x.size * (ybar * math.log(ybar) + (1.0 - ybar) * math.log(1.0 - ybar))
    prob = logistic_probability(theta[0], theta[1], x)
    return LogisticModel(
        theta0=float(theta[0]),
        theta1=float(theta[1]),
        r2=binned_r2(x, y, prob, groups),
        radius99=radius_from_theta(theta[0], theta[1]),
        r2_mcfadden=float(1.0 - (-f) / ll_null),
        loglik=-f,
        iterations=k,
        gradient_norm=float(np.linalg.norm(g)),
        history=history,
    )


def estimate_radius(n, p, beta_grid, distance_grid=DEFAULT_RADIUS_GRID, samples_per_point=40, seed=0,
                    strategy=None, tol=1e-10, max_iterations=200, workers=None):
    """
    Sample and fit one logistic model per beta.

    Returns
    -------
    list of dict
        Rows with keys beta, theta0, theta1, r2, radius99, r2_mcfadden,
        samples and skipped. A beta whose labels are degenerate gets NaN
        model fields.
    """
    rows = []
    for beta in beta_grid:
        data = sample_convergence(n, p, beta, distance_grid, samples_per_point, seed, strategy,
                                  tol, max_iterations, workers)
        row = {"beta": float(beta), "samples": len(data), "skipped": data.skipped}
        try:
            m = fit_logistic(data)
            row.update(theta0=m.theta0, theta1=m.theta1, r2=m.r2, radius99=m.radius99,
                       r2_mcfadden=m.r2_mcfadden)
        except (DegenerateLabelsError, SeparableDataError):
            row.update(theta0=math.nan, theta1=math.nan, r2=math.nan, radius99=math.nan,
                       r2_mcfadden=math.nan)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Strategy sweeps


@dataclass
class SweepBundle:
    """
    Traces and iteration counts of a strategy sweep.

    ``runs`` has one record per (fraction, beta, strategy, sample);
    ``summary`` one per (fraction, beta, strategy) with the median
    iteration count; ``improvement`` maps (fraction, beta) to the ratio of
    fixed-forward to accelerated-forward median iterations.
    """

    runs: list
    summary: list
    improvement: dict

    def median_iterations(self, fraction, beta, strategy):
        key = str(strategy if isinstance(strategy, Strategy) else Strategy.parse(strategy))
        for row in self.summary:
            if row["fraction"] == fraction and row["beta"] == beta and row["strategy"] == key:
                return row["median_iterations"]
        raise KeyError((fraction, beta, key))

    def to_dict(self):
        return {
            "schema": 1,
            "runs": self.runs,
            "summary": self.summary,
            "improvement": [{"fraction": f, "beta": b, "factor": v}
                            for (f, b), v in sorted(self.improvement.items())],
        }


def strategy_sweep(n, p, distance_fractions, beta_grid, strategies, samples=1, seed=0, tol=1e-10,
                   max_iterations=200, keep_diagnostics=False):
    """
    Run every strategy on the same pairs over a grid of distances and betas.

    Parameters
    ----------
    n, p : int
    distance_fractions : sequence of float
        Fractions of 2 sqrt(p).
    beta_grid : sequence of float
    strategies : sequence of Strategy or str
    samples : int
        Pairs per distance; medians are taken over them.
    seed : int
    keep_diagnostics : bool
        Store the per-iteration norm diagnostics of each run under the
        key ``diagnostics``.

    Returns
    -------
    SweepBundle
    """
    strategies = _as_strategies(strategies)
    fractions = [float(f) for f in distance_fractions]
    children = np.random.SeedSequence(seed).spawn(len(fractions) * samples)
    runs, summary, improvement = [], [], {}
    for fi, frac in enumerate(fractions):
        pairs = [_pair(n, p, frac, np.random.default_rng(children[fi * samples + j])) for j in range(samples)]
        for beta in beta_grid:
            beta = float(beta)
            medians = {}
            for strategy in strategies:
                config = SolverConfig(beta=beta, tol=tol, max_iterations=max_iterations, strategy=strategy,
                                      diagnostics=keep_diagnostics)
                counts = []
                for j, (U, Ut) in enumerate(pairs):
                    res = stiefel_log(U, Ut, config)
                    counts.append(res.iterations if res.converged else math.inf)
                    runs.append({
                        "fraction": frac, "beta": beta, "strategy": str(strategy), "sample": j,
                        "distance": float(np.linalg.norm(U - Ut)),
                        "converged": res.converged, "iterations": res.iterations,
                        "residuals": [[float(c), float(a)] for c, a in res.residual_trace],
                    })
                    if keep_diagnostics:
                        runs[-1]["diagnostics"] = res.diagnostics
                med = float(np.median(counts))
                medians[str(strategy)] = med
                summary.append({"fraction": frac, "beta": beta, "strategy": str(strategy),
                                "median_iterations": med,
                                "failures": int(sum(1 for c in counts if c == math.inf))})
            fixed, accel = medians.get(str(FIXED_FORWARD)), medians.get(str(ACCELERATED))
            if fixed is not None and accel is not None:
                improvement[(frac, beta)] = _ratio(fixed, accel)
    return SweepBundle(runs, summary, improvement)


def _ratio(a, b):
    if b == 0:
        return 1.0 if a == 0 else math.inf
    return a / b
