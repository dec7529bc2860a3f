import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from stiefel_log.geometry import (
    BaseMismatchError,
    TangentVector,
    TargetUnreachableError,
    check_stiefel,
    complement_width,
    metric_inner,
    random_pair_at_distance,
    random_point,
    random_tangent,
    stiefel_exp,
    tangent_from_embedded,
    tangent_project,
)


def ambient_exp(U, Delta, beta, t=1.0):
    """exp(t Omega) U exp(t (1 - 2 beta) A) with the n x n skew generator Omega."""
    n, p = U.shape
    A = U.T @ Delta
    P = np.eye(n) - U @ U.T
    Omega = 2 * beta * U @ A @ U.T + P @ Delta @ U.T - U @ Delta.T @ P
    return sla.expm(t * Omega) @ U @ sla.expm(t * (1 - 2 * beta) * A)


def euclidean_exp(U, Delta, t=1.0):
    """Closed-form geodesic of the embedded (Euclidean) metric."""
    p = U.shape[1]
    A = U.T @ Delta
    S = Delta.T @ Delta
    Z = np.block([[A, -S], [np.eye(p), A]])
    return np.hstack([U, Delta]) @ sla.expm(t * Z)[:, :p] @ sla.expm(-t * A)


shapes = st.sampled_from([(5, 2), (8, 3), (10, 5), (7, 5), (6, 1)])


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31), st.floats(0.3, 1.5))
def test_projection_is_tangent_and_idempotent(shape, seed, beta):
    n, p = shape
    rng = np.random.default_rng(seed)
    U = random_point(n, p, rng)
    W = rng.standard_normal((n, p))
    x = tangent_project(U, W)
    D = x.embedded()
    assert np.linalg.norm(U.T @ D + D.T @ U) < 1e-12
    assert np.allclose(x.A, (U.T @ W - W.T @ U) / 2)
    assert np.linalg.norm(x.Q.T @ U) < 1e-12
    assert x.Q.shape[1] == complement_width(n, p)
    assert np.linalg.norm(tangent_project(U, D).embedded() - D) < 1e-12
    # W - D is orthogonal to every tangent vector.
    y = tangent_project(U, rng.standard_normal((n, p))).embedded()
    assert abs(np.sum((W - D) * y)) < 1e-10


def test_tangent_from_embedded_rejects_non_tangent(rng):
    U = random_point(6, 2, rng)
    with pytest.raises(ValueError, match="not tangent"):
        tangent_from_embedded(U, U.copy())


@settings(max_examples=40, deadline=None)
@given(shapes, st.integers(0, 2**31), st.floats(0.3, 1.5))
def test_metric_ambient_form(shape, seed, beta):
    n, p = shape
    U = random_point(n, p, seed)
    x = random_tangent(U, seed + 1)
    y = random_tangent(U, seed + 2)
    Dx, Dy = x.embedded(), y.embedded()
    expected = np.trace(Dx.T @ (np.eye(n) - (1 - beta) * U @ U.T) @ Dy)
    assert metric_inner(x, y, beta) == pytest.approx(expected, abs=1e-11)
    assert metric_inner(x, x, beta) == pytest.approx(x.norm(beta) ** 2, abs=1e-11)


def test_euclidean_and_canonical_metrics(rng):
    U = random_point(10, 3, rng)
    x = random_tangent(U, 7)
    D = x.embedded()
    assert metric_inner(x, x, 1.0) == pytest.approx(np.trace(D.T @ D), abs=1e-12)
    assert metric_inner(x, x, 0.5) == pytest.approx(np.trace(D.T @ (np.eye(10) - 0.5 * U @ U.T) @ D), abs=1e-12)


def test_metric_base_mismatch(rng):
    x = random_tangent(random_point(6, 2, 1), 2)
    y = random_tangent(random_point(6, 2, 3), 4)
    with pytest.raises(BaseMismatchError):
        metric_inner(x, y, 1.0)


@settings(max_examples=30, deadline=None)
@given(shapes, st.integers(0, 2**31), st.sampled_from([0.3, 0.5, 0.7, 1.0, 1.4]), st.floats(0.05, 2.0))
def test_exp_matches_ambient_generator(shape, seed, beta, size):
    n, p = shape
    U = random_point(n, p, seed)
    x = random_tangent(U, seed + 1, beta, norm=size)
    Y = stiefel_exp(x, beta)
    assert np.linalg.norm(Y.T @ Y - np.eye(p)) < 1e-12
    assert np.allclose(Y, ambient_exp(U, x.embedded(), beta), atol=1e-11)


@pytest.mark.parametrize("shape", [(6, 2), (9, 4), (7, 5)])
def test_exp_euclidean_closed_form(shape):
    U = random_point(*shape, seed=4)
    x = random_tangent(U, 5, 1.0, norm=1.3)
    for t in (0.25, 1.0, -0.7):
        assert np.allclose(stiefel_exp(x, 1.0, t), euclidean_exp(U, x.embedded(), t), atol=1e-11)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_exp_on_sphere(beta):
    U = random_point(5, 1, 0)
    x = random_tangent(U, 1, beta, norm=2.2)
    D = x.embedded()
    r = np.linalg.norm(D)
    assert np.allclose(stiefel_exp(x, beta), np.cos(r) * U + np.sin(r) * D / r, atol=1e-13)


def test_exp_time_zero_and_group_property(rng):
    U = random_point(8, 3, rng)
    x = random_tangent(U, 3, 0.7, norm=0.9)
    assert np.array_equal(stiefel_exp(x, 0.7, 0.0), U)
    # Along one geodesic, exp((s + t) x) = exp_{Y(s)}(t Y'(s)); check via the ambient route.
    Y1 = stiefel_exp(x, 0.7, 0.4)
    Y2 = stiefel_exp(x, 0.7, 1.0)
    assert np.allclose(ambient_exp(U, x.embedded(), 0.7, 0.4), Y1, atol=1e-12)
    assert np.allclose(ambient_exp(U, x.embedded(), 0.7, 1.0), Y2, atol=1e-12)
    with pytest.raises(ValueError):
        stiefel_exp(x, 0.0)


def test_tangent_vector_scaling_and_norm(rng):
    U = random_point(7, 3, rng)
    x = random_tangent(U, 2, 0.8, norm=0.6)
    assert x.norm(0.8) == pytest.approx(0.6)
    assert x.scaled(2.0).norm(0.8) == pytest.approx(1.2)
    t = TangentVector(U, np.ones((3, 3)), x.Q, x.B)
    assert np.array_equal(t.A, -t.A.T)


def test_check_stiefel():
    with pytest.raises(ValueError, match="n > p"):
        check_stiefel(np.eye(3))
    with pytest.raises(ValueError, match="orthonormal"):
        check_stiefel(np.ones((4, 2)))
    with pytest.raises(ValueError, match="dimensions"):
        check_stiefel(np.ones(3))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(10, 3), (16, 8), (20, 5)]), st.floats(0.02, 0.7), st.integers(0, 2**31))
def test_random_pair_hits_target(shape, fraction, seed):
    n, p = shape
    target = fraction * 2 * np.sqrt(p)
    tol = 0.01 * 2 * np.sqrt(p)
    U, Ut = random_pair_at_distance(n, p, target, tol, seed=seed)
    check_stiefel(U)
    check_stiefel(Ut)
    assert abs(np.linalg.norm(U - Ut) - target) <= tol


def test_random_pair_edge_cases():
    U, Ut = random_pair_at_distance(6, 2, 0.0, 1e-3, seed=0)
    assert np.array_equal(U, Ut)
    with pytest.raises(ValueError):
        random_pair_at_distance(6, 2, 2 * np.sqrt(2), 1e-3)
    with pytest.raises(TargetUnreachableError):
        random_pair_at_distance(4, 1, 1.99, 1e-12, seed=0, max_refinements=2, max_draws=2)


def test_random_pair_deterministic():
    a = random_pair_at_distance(12, 4, 1.0, 0.01, seed=9)
    b = random_pair_at_distance(12, 4, 1.0, 0.01, seed=9)
    assert all(np.array_equal(u, v) for u, v in zip(a, b))
