import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fauxaudit.errors import ContractError, DegenerateGradientError, SingularityError
from fauxaudit.linalg import (EPS_NORM, child_seed, cholesky, dot, make_rng, matmul, norm2,
                              normalize, normalize_rows, solve_spd)


def test_matmul_identity():
    a = np.array([[1.5, -2.0], [0.25, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)


def test_matmul_hand_product():
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2.0], [4.0]])


def test_matmul_zero():
    a = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(matmul(np.zeros((4, 2)), a), np.zeros((4, 3)))


def test_matmul_shape_mismatch():
    with pytest.raises(ContractError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_solve_identity():
    v = np.array([1.0, -2.0, 3.5])
    assert np.allclose(solve_spd(np.eye(3), v), v, rtol=0, atol=0)


def test_solve_scalar():
    assert np.array_equal(solve_spd([[4.0]], [[2.0]]), [[0.5]])


def test_solve_2x2_against_inverse():
    x = solve_spd([[2.0, 1.0], [1.0, 2.0]], [[1.0], [1.0]])
    # inverse of [[2,1],[1,2]] is [[2,-1],[-1,2]]/3
    assert np.allclose(x, [[1 / 3], [1 / 3]], rtol=0, atol=1e-15)


def test_solve_not_spd():
    with pytest.raises(SingularityError):
        solve_spd([[1.0, 2.0], [2.0, 1.0]], [1.0, 1.0])
    with pytest.raises(SingularityError):
        cholesky([[1.0, 0.5], [0.0, 1.0]])


def test_vector_helpers():
    assert dot((1, 0), (0, 1)) == 0
    assert norm2((3, 4)) == 5
    assert np.array_equal(normalize((0, 2)), [0.0, 1.0])


def test_normalize_degenerate():
    with pytest.raises(DegenerateGradientError):
        normalize([EPS_NORM / 10, 0.0])
    rows, deg = normalize_rows(np.array([[0.0, 0.0], [0.0, 3.0]]))
    assert deg.tolist() == [True, False]
    assert np.array_equal(rows, [[0, 0], [0, 1]])


def test_dot_length_mismatch():
    with pytest.raises(ContractError):
        dot([1, 2], [1, 2, 3])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6),
       st.integers(0, 2 ** 32 - 1))
def test_matmul_associative(m, n, p, q, seed):
    rng = make_rng(seed)
    a, b, c = rng.normal(size=(m, n)), rng.normal(size=(n, p)), rng.normal(size=(p, q))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.linalg.norm(left - right) <= 1e-9 * max(1.0, np.linalg.norm(left))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_solve_spd_residual(k, seed):
    rng = make_rng(seed)
    m = rng.normal(size=(k, k))
    a = m @ m.T + 1e-9 * np.eye(k) + 0.1 * np.eye(k)
    b = rng.normal(size=k)
    x = solve_spd(a, b)
    assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_rng_reproducible():
    a = make_rng(2024).random(10_000)
    b = make_rng(2024).random(10_000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, make_rng(2025).random(10_000))


def test_child_seed_distinct_and_stable():
    assert child_seed(1, "a") == child_seed(1, "a")
    assert len({child_seed(1, "a"), child_seed(1, "b"), child_seed(2, "a"), child_seed(1, 0)}) == 4
    assert 0 <= child_seed(7, "x") < 2 ** 64
