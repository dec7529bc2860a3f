import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stiefel_log.convergence import (
    canonical_rate,
    evaluate_constants,
    feasibility_grid,
    max_feasible_delta,
    scan_region,
    theoretical_rate_bound,
)
from stiefel_log.geometry import random_point, random_tangent, stiefel_exp
from stiefel_log.solver import stiefel_log


def test_canonical_value():
    c = evaluate_constants(0.5, 0.5)
    assert c.feasible and c.reason is None
    assert c.rate == pytest.approx(6 * 0.5**4 / ((6 - 0.25) * 0.5), abs=1e-12)
    assert c.tau == 0.0 and c.eta == 0.0 and c.xi == 1.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.7))
def test_canonical_metric_reduces_to_closed_form(delta):
    c = evaluate_constants(0.5, delta)
    assert c.rate == pytest.approx(canonical_rate(delta), rel=1e-12)


@pytest.mark.parametrize("delta", [1e-4, 0.01, 0.1, 0.3, 0.6, 0.99])
def test_quarter_is_never_admissible(delta):
    c = evaluate_constants(0.25, delta)
    assert not c.feasible
    assert c.xi <= 0 or not np.isfinite(c.xi) or c.reason is not None


def test_reason_codes():
    assert evaluate_constants(0.25, 0.01).reason == "xi <= 0"
    assert evaluate_constants(0.5, 0.9).reason == "rate >= 1"
    assert evaluate_constants(3.0, 0.5).reason == "delta(1+|tau|) >= 1"
    with pytest.raises(ValueError):
        evaluate_constants(0.5, 0.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.26, 1.25), st.floats(0.001, 0.999))
def test_grid_agrees_with_pointwise(beta, delta):
    feas, rate = feasibility_grid([beta], [delta])
    c = evaluate_constants(beta, delta)
    assert bool(feas[0, 0]) == c.feasible
    if c.feasible:
        assert rate[0, 0] == pytest.approx(c.rate, rel=1e-14)
        assert 0 <= c.rate < 1


@settings(max_examples=30, deadline=None)
@given(st.floats(0.27, 1.2))
def test_feasible_set_is_an_interval_in_delta(beta):
    _, deltas, feas, _ = scan_region((beta - 1e-9, beta), (0, 1), 1, 400)
    row = feas[0]
    if row.any():
        last = np.flatnonzero(row)[-1]
        assert row[: last + 1].all()


def test_max_feasible_delta():
    assert max_feasible_delta(0.2) == 0.0
    assert max_feasible_delta(0.25) == 0.0
    d = max_feasible_delta(0.5)
    assert evaluate_constants(0.5, d).feasible
    assert not evaluate_constants(0.5, d + 2e-6).feasible
    # Symmetric ranking: the canonical metric admits the widest region.
    assert d > max_feasible_delta(0.45) and d > max_feasible_delta(0.55)


def test_rate_report():
    U = random_point(20, 5, 1)
    x = random_tangent(U, 2, 0.75, norm=0.12)
    res = stiefel_log(U, stiefel_exp(x, 0.75), beta=0.75, strategy="backward", tol=1e-13, diagnostics=True)
    rep = theoretical_rate_bound(res)
    assert rep.applicable and rep.bound < 1
    assert rep.empirical_ratio is not None and rep.empirical_ratio <= rep.bound
    assert rep.hypothesis_index is not None and not rep.flagged
    with pytest.raises(ValueError, match="diagnostics"):
        theoretical_rate_bound(stiefel_log(U, stiefel_exp(x, 0.75), beta=0.75))
