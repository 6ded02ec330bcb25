import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from ensemble_scope.lift import (enumerate_basis, lift_generator, lift_matrix, lift_vector, monomials,
                                 num_monomials, tensor_system, weight_matrix)

R2 = np.sqrt(2.0)


def brute_indices(n, p):
    return sorted((a for a in itertools.product(range(p + 1), repeat=n) if sum(a) == p), reverse=True)


def test_three_state_quadratic_listing():
    b = enumerate_basis(3, 2)
    assert b.indices == ((2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2))
    np.testing.assert_allclose(b.weights, [1, R2, R2, 1, R2, 1], rtol=0, atol=1e-15)
    assert num_monomials(3, 2) == 6


def test_small_bases():
    assert enumerate_basis(1, 5).indices == ((5,),)
    np.testing.assert_array_equal(enumerate_basis(1, 5).weights, [1.0])
    b = enumerate_basis(2, 3)
    assert b.indices == ((3, 0), (2, 1), (1, 2), (0, 3))
    np.testing.assert_allclose(b.weights, [1, np.sqrt(3), np.sqrt(3), 1])
    np.testing.assert_allclose(np.diag(weight_matrix(enumerate_basis(2, 2))), [1, R2, 1])


@pytest.mark.parametrize("n,p", [(0, 2), (2, 0), (-1, 1)])
def test_rejects_degenerate_orders(n, p):
    with pytest.raises(ValueError):
        enumerate_basis(n, p)


@given(st.integers(1, 5), st.integers(1, 5))
def test_basis_matches_enumeration(n, p):
    b = enumerate_basis(n, p)
    assert list(b.indices) == brute_indices(n, p)
    assert len(b) == num_monomials(n, p) == math.comb(n + p - 1, p)
    for alpha, w in zip(b.indices, b.weights):
        expected = math.sqrt(math.factorial(p) / math.prod(math.factorial(a) for a in alpha))
        assert w == pytest.approx(expected, rel=1e-15)
        assert w >= 1.0
        assert (w == 1.0) == (sum(a > 0 for a in alpha) == 1)


def test_lift_vector_examples():
    b = enumerate_basis(3, 2)
    np.testing.assert_allclose(lift_vector([1, 0, 0], b), [1, 0, 0, 0, 0, 0])
    np.testing.assert_allclose(lift_vector([1, 1, 1], b), [1, R2, R2, 1, R2, 1])
    np.testing.assert_allclose(lift_vector([2, 3], enumerate_basis(2, 2)), [4, 6 * R2, 9])
    with pytest.raises(ValueError):
        lift_vector([1, 2], b)


def test_monomials_batch_matches_lift():
    rng = np.random.default_rng(0)
    b = enumerate_basis(3, 3)
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(monomials(x, b) * b.weights, [lift_vector(v, b) for v in x], rtol=1e-14)


@pytest.mark.parametrize("t", [0.0, 0.3, 1.7])
def test_lift_of_decaying_row(t):
    M = np.array([[1.0, np.exp(-t), np.exp(-2 * t)]])
    e = np.exp(-t)
    expected = [1, R2 * e, R2 * e**2, e**2, R2 * e**3, e**4]
    np.testing.assert_allclose(lift_matrix(M, 2)[0], expected, rtol=1e-14, atol=1e-15)


def test_identity_lifts_to_identity():
    for n, p in [(1, 3), (3, 2), (4, 4)]:
        np.testing.assert_allclose(lift_matrix(np.eye(n), p), np.eye(num_monomials(n, p)), atol=1e-15)


matrices = st.integers(0, 2**32 - 1).map(np.random.default_rng)


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_lift_commutes_with_application(rng, m, n, p):
    M = rng.uniform(-1, 1, (m, n))
    x = rng.normal(size=n)
    lhs = lift_vector(M @ x, enumerate_basis(m, p))
    rhs = lift_matrix(M, p) @ lift_vector(x, enumerate_basis(n, p))
    np.testing.assert_allclose(lhs, rhs, rtol=1e-11, atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(1, 4), st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_semigroup_law(rng, k, m, n, p):
    M1, M2 = rng.uniform(-1, 1, (k, m)), rng.uniform(-1, 1, (m, n))
    err = np.abs(lift_matrix(M1 @ M2, p) - lift_matrix(M1, p) @ lift_matrix(M2, p)).max()
    assert err < 1e-10


@settings(max_examples=60, deadline=None)
@given(matrices, st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_transpose_law(rng, m, n, p):
    M = rng.uniform(-1, 1, (m, n))
    assert np.abs(lift_matrix(M.T, p) - lift_matrix(M, p).T).max() < 1e-12


def test_transpose_law_needs_weights():
    # unweighted coefficient matrices are not transpose-compatible
    M = np.array([[1.0, 2.0], [0.5, -1.0]])
    w = enumerate_basis(2, 2).weights
    unweighted = lambda A: lift_matrix(A, 2) / w[:, None] * w[None, :]
    assert np.abs(unweighted(M.T) - unweighted(M).T).max() > 0.1


def random_stable(rng, n):
    A = rng.normal(size=(n, n))
    return A - (np.max(np.linalg.eigvals(A).real) + 0.1) * np.eye(n)


@settings(max_examples=40, deadline=None)
@given(matrices, st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0))
def test_flow_law(rng, n, p, t):
    A = random_stable(rng, n)
    err = np.abs(lift_matrix(expm(A * t), p) - expm(t * lift_generator(A, p))).max()
    assert err < 1e-8


@settings(max_examples=40, deadline=None)
@given(matrices, st.integers(1, 4), st.integers(1, 4), st.floats(0.0, 2.0))
def test_trajectory_law(rng, n, p, t):
    A = random_stable(rng, n)
    x0 = rng.normal(size=n)
    b = enumerate_basis(n, p)
    lhs = lift_vector(expm(A * t) @ x0, b)
    rhs = expm(t * lift_generator(A, p)) @ lift_vector(x0, b)
    assert np.linalg.norm(lhs - rhs) < 1e-8


def test_derivative_along_trajectory():
    # central difference of t -> x(t)^[p] against A_[p] x^[p]
    rng = np.random.default_rng(3)
    A, x0 = random_stable(rng, 3), rng.normal(size=3)
    b, h = enumerate_basis(3, 3), 1e-5
    d = (lift_vector(expm(A * h) @ x0, b) - lift_vector(expm(-A * h) @ x0, b)) / (2 * h)
    np.testing.assert_allclose(d, lift_generator(A, 3) @ lift_vector(x0, b), rtol=1e-7, atol=1e-8)


def test_unweighted_generator_first_row():
    a = np.arange(1.0, 10.0).reshape(3, 3)
    U = lift_generator(a, 2, weighted=False)
    np.testing.assert_allclose(U[0], [2 * a[0, 0], 2 * a[0, 1], 2 * a[0, 2], 0, 0, 0])
    # row of x1*x2: a21 x1^2 + (a11 + a22) x1 x2 + a23 x1 x3 + a12 x2^2 + a13 x2 x3
    np.testing.assert_allclose(U[1], [a[1, 0], a[0, 0] + a[1, 1], a[1, 2], a[0, 1], a[0, 2], 0])


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=4), st.integers(1, 4))
def test_diagonal_generator(lams, p):
    b = enumerate_basis(len(lams), p)
    G = lift_generator(np.diag(lams), p)
    expected = [np.dot(alpha, lams) for alpha in b.indices]
    np.testing.assert_allclose(G, np.diag(expected), atol=1e-12)


def test_zero_generator():
    assert not np.any(lift_generator(np.zeros((3, 3)), 3))


def test_tensor_system_output_identity():
    rng = np.random.default_rng(9)
    A, C = rng.normal(size=(3, 3)), rng.normal(size=(2, 3))
    ts = tensor_system(A, C, 2)
    x = rng.normal(size=3)
    np.testing.assert_allclose(lift_vector(C @ x, enumerate_basis(2, 2)),
                               ts.c_lift @ lift_vector(x, ts.basis), rtol=1e-12)
    assert np.all(ts.weight_diag > 0)
