import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stiefel_log.kernels import (
    EigenvalueAtMinusOneError,
    SingularSylvesterError,
    SkewSpectrum,
    orthogonal_complement,
    orthonormalize_with_completion,
    skew,
    skew_exp,
    so_principal_log,
    sylvester_symmetric,
)


def taylor_expm(S, terms=30):
    """Scaling and squaring around a truncated Taylor series."""
    nrm = np.linalg.norm(S, 1)
    s = max(0, int(np.ceil(np.log2(nrm))) + 1) if nrm > 0 else 0
    X = S / 2.0**s
    E = np.eye(S.shape[0])
    term = np.eye(S.shape[0])
    for k in range(1, terms):
        term = term @ X / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def random_skew(rng, m, scale=1.0):
    G = rng.standard_normal((m, m))
    return scale * skew(G)


def with_norm2(S, target):
    return S * (target / np.linalg.norm(S, 2))


finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 9), st.just(9)), elements=finite), st.integers(1, 9))
def test_skew_exp_matches_taylor_and_is_special_orthogonal(G, m):
    G = np.resize(G, (m, m))
    S = skew(G)
    E = skew_exp(S)
    assert np.allclose(E, taylor_expm(S), atol=1e-11)
    assert np.linalg.norm(E.T @ E - np.eye(m)) < 1e-12 * max(1, m)
    assert np.linalg.det(E) == pytest.approx(1.0, abs=1e-10)


def test_skew_exp_edge_cases():
    assert skew_exp(np.zeros((0, 0))).shape == (0, 0)
    assert np.array_equal(skew_exp(np.zeros((4, 4))), np.eye(4))
    S = np.array([[0.0, -1.5], [1.5, 0.0]])
    c, s = np.cos(1.5), np.sin(1.5)
    assert np.allclose(skew_exp(S), [[c, -s], [s, c]], atol=1e-15)


def test_spectrum_reuse_over_times(rng):
    S = random_skew(rng, 7)
    spec = SkewSpectrum(S)
    for t in (0.0, 0.3, -1.2, 2.5):
        assert np.allclose(spec.expm(t), taylor_expm(t * S), atol=1e-11)
    assert spec.norm2() == pytest.approx(np.linalg.norm(S, 2), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 10), st.floats(1e-3, 3.0), st.integers(0, 2**31))
def test_log_inverts_exp_inside_principal_branch(m, radius, seed):
    S = with_norm2(random_skew(np.random.default_rng(seed), m), radius)
    L = so_principal_log(skew_exp(S))
    assert np.linalg.norm(L - S) < 1e-10
    assert np.allclose(L, -L.T)


def test_log_rejects_minus_one_eigenvalue():
    R = np.diag([-1.0, -1.0, 1.0])
    with pytest.raises(EigenvalueAtMinusOneError):
        so_principal_log(R)
    theta = np.pi - 1e-10
    R = np.eye(3)
    R[:2, :2] = [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    with pytest.raises(EigenvalueAtMinusOneError):
        so_principal_log(R)
    with pytest.raises(EigenvalueAtMinusOneError):
        so_principal_log(np.full((2, 2), np.nan))


def kron_sylvester(S, C):
    p = S.shape[0]
    K = np.kron(np.eye(p), S) + np.kron(S.T, np.eye(p))
    return np.linalg.solve(K, C.reshape(-1, order="F")).reshape((p, p), order="F")


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31), st.booleans())
def test_sylvester_matches_kronecker_system(p, seed, skew_rhs):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((p, p))
    S = G @ G.T / p - 0.5 * np.eye(p) - 2.0 * np.eye(p)
    C = rng.standard_normal((p, p))
    if skew_rhs:
        C = skew(C)
    X = sylvester_symmetric(S, C)
    assert np.allclose(X, kron_sylvester(S, C), atol=1e-10)
    assert np.linalg.norm(S @ X + X @ S - C) < 1e-10 * max(1, np.linalg.norm(C))
    if skew_rhs:
        assert np.array_equal(X, -X.T)


def test_sylvester_singular():
    with pytest.raises(SingularSylvesterError):
        sylvester_symmetric(np.diag([1.0, -1.0]), np.eye(2))


def check_completion(U, X, Q, N):
    k = X.shape[1]
    assert np.linalg.norm(Q.T @ Q - np.eye(k)) < 1e-12
    assert np.linalg.norm(Q.T @ U) < 1e-12
    assert np.linalg.norm(Q @ N - X) < 1e-12 * max(1, np.linalg.norm(X))


@pytest.mark.parametrize("rank", [0, 1, 3, 5])
def test_completion_handles_rank_deficiency(rng, rank):
    n, p = 20, 5
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    W = rng.standard_normal((n, rank)) @ rng.standard_normal((rank, p))
    X = W - U @ (U.T @ W)
    Q, N = orthonormalize_with_completion(U, X)
    check_completion(U, X, Q, N)
    assert np.linalg.matrix_rank(N, tol=1e-10) == rank


def test_completion_duplicate_columns_and_determinism(rng):
    n, p = 12, 4
    U, _ = np.linalg.qr(rng.standard_normal((n, p)))
    v = rng.standard_normal(n)
    v -= U @ (U.T @ v)
    X = np.column_stack([v, v, 2 * v, np.zeros(n)])
    Q1, N1 = orthonormalize_with_completion(U, X)
    Q2, N2 = orthonormalize_with_completion(U, X)
    check_completion(U, X, Q1, N1)
    assert np.array_equal(Q1, Q2) and np.array_equal(N1, N2)


def test_completion_too_many_columns(rng):
    U, _ = np.linalg.qr(rng.standard_normal((5, 3)))
    with pytest.raises(ValueError):
        orthonormalize_with_completion(U, np.zeros((5, 3)))


def test_orthogonal_complement(rng):
    U, _ = np.linalg.qr(rng.standard_normal((9, 4)))
    P = orthogonal_complement(U)
    assert P.shape == (9, 5)
    assert np.linalg.norm(P.T @ P - np.eye(5)) < 1e-13
    assert np.linalg.norm(P.T @ U) < 1e-13
