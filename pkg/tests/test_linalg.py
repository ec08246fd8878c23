import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_laplace.errors import AsymmetricMatrix, NotPositiveDefinite
from relu_laplace.linalg import (
    cholesky,
    kron,
    min_singular_value,
    quad_form,
    solve_spd,
    spd_inverse,
    sym_eig,
)

from _oracles import random_spd


def test_cholesky_examples(rng):
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    A = random_spd(rng, 5)
    L = cholesky(A)
    assert np.allclose(L, np.tril(L))
    assert np.linalg.norm(L @ L.T - A) < 1e-9


def test_cholesky_rejects_indefinite_and_asymmetric():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(AsymmetricMatrix):
        cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_sym_eig_examples():
    np.testing.assert_allclose(sym_eig(np.eye(2)).values, [1.0, 1.0])
    np.testing.assert_allclose(sym_eig(np.diag([1.0, 3.0])).values, [3.0, 1.0])
    e = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    # characteristic polynomial (2 - l)^2 - 1 = 0
    np.testing.assert_allclose(e.values, [3.0, 1.0], atol=1e-14)
    assert e.max == pytest.approx(3.0) and e.min == pytest.approx(1.0)


@pytest.mark.parametrize("n", [1, 2, 7, 20, 50])
def test_factorizations_reconstruct(rng, n):
    for _ in range(20):
        A = random_spd(rng, n, cond=1e4)
        e = sym_eig(A)
        assert np.all(np.diff(e.values) <= 0)
        assert np.linalg.norm(e.vectors.T @ e.vectors - np.eye(n)) < 1e-10
        Q = e.vectors
        assert np.linalg.norm(A - (Q * e.values) @ Q.T) / np.linalg.norm(A) <= 1e-10
        L = cholesky(A)
        assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) <= 1e-9


def test_min_singular_value_examples(rng):
    assert min_singular_value(np.eye(4)) == pytest.approx(1.0)
    A = np.vstack([np.diag([5.0, 2.0]), np.zeros((1, 2))])
    assert min_singular_value(A) == pytest.approx(2.0)
    A = rng.standard_normal((6, 3))
    oracle = np.sqrt(sym_eig(A.T @ A).min)
    assert min_singular_value(A) == pytest.approx(oracle, abs=1e-9)
    assert min_singular_value(np.ones((2, 3))) == 0.0


def test_kron_examples(rng):
    B = rng.standard_normal((2, 3))
    K = kron(np.eye(2), B)
    np.testing.assert_array_equal(K[:2, :3], B)
    np.testing.assert_array_equal(K[2:, 3:], B)
    np.testing.assert_array_equal(K[:2, 3:], 0)
    np.testing.assert_array_equal(kron([[2.0]], B), 2 * B)


def test_kron_vec_identity(rng):
    # column-major vec: kron(A, B) vec(X) = vec(B X A^T)
    for _ in range(20):
        A, B, X = (rng.standard_normal((2, 2)) for _ in range(3))
        lhs = kron(A, B) @ X.ravel(order="F")
        rhs = (B @ X @ A.T).ravel(order="F")
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_quad_form_examples(rng):
    assert quad_form(np.zeros(3), np.eye(3)) == 0.0
    assert quad_form(np.array([1.0, 0.0]), np.diag([3.0, 1.0])) == pytest.approx(3.0)
    v, A = rng.standard_normal(6), random_spd(rng, 6)
    naive = sum(v[i] * A[i, j] * v[j] for i in range(6) for j in range(6))
    assert quad_form(v, A) == pytest.approx(naive, abs=1e-12)


def test_solve_spd_examples(rng):
    b = rng.standard_normal(4)
    np.testing.assert_allclose(solve_spd(np.eye(4), b), b)
    np.testing.assert_allclose(solve_spd(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])
    A, b = random_spd(rng, 6, cond=1e3), rng.standard_normal(6)
    x = solve_spd(A, b)
    assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) < 1e-8
    with pytest.raises(NotPositiveDefinite):
        solve_spd(-np.eye(2), np.ones(2))


def test_spd_inverse_is_symmetric(rng):
    A = random_spd(rng, 8, cond=1e6)
    inv = spd_inverse(A)
    np.testing.assert_array_equal(inv, inv.T)
    np.testing.assert_allclose(inv @ A, np.eye(8), atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 12), seed=st.integers(0, 2**31 - 1))
def test_rayleigh_and_singular_value_bounds(n, seed):
    r = np.random.default_rng(seed)
    A = random_spd(r, n, cond=1e3)
    x = r.standard_normal(n)
    assert quad_form(x, A) >= sym_eig(A).min * (x @ x) * (1 - 1e-10)
    M = r.standard_normal((n + 2, n))
    z = r.standard_normal(n)
    assert np.sum((M @ z) ** 2) >= min_singular_value(M) ** 2 * (z @ z) * (1 - 1e-10)
