import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bpcp.linalg_core import (
    SvdConvergenceError,
    as_matrix,
    hadamard,
    norm_fro,
    norm_inf,
    norm_l1,
    norm_nuclear,
    norm_op,
    svd,
    svd_skinny,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
matrices = st.tuples(st.integers(1, 7), st.integers(1, 7)).flatmap(lambda s: arrays(np.float64, s, elements=finite))


def check_factors(a, f, tol=1e-10):
    k = min(a.shape)
    assert f.u.shape == (a.shape[0], k) and f.v.shape == (a.shape[1], k) and f.sigma.shape == (k,)
    assert np.allclose(f.u.T @ f.u, np.eye(k), atol=tol)
    assert np.allclose(f.v.T @ f.v, np.eye(k), atol=tol)
    assert np.all(f.sigma >= 0) and np.all(np.diff(f.sigma) <= 0)
    scale = max(np.linalg.norm(a), 1.0)
    assert np.linalg.norm(f.reconstruct() - a) <= 1e-8 * scale


def test_svd_identity():
    assert np.array_equal(svd(np.eye(2)).sigma, [1.0, 1.0])


def test_svd_diagonal_with_zero():
    f = svd(np.diag([3.0, 0.0]))
    assert np.allclose(f.sigma, [3.0, 0.0])
    assert np.allclose(np.abs(f.u), np.eye(2)) and np.allclose(np.abs(f.v), np.eye(2))


def test_svd_random_reconstruction(rng):
    a = rng.standard_normal((5, 4))
    f = svd(a)
    check_factors(a, f)
    # direct multiplication, not the helper
    assert np.max(np.abs(f.u @ np.diag(f.sigma) @ f.v.T - a)) < 1e-8


def test_svd_wide_and_tall(rng):
    for shape in [(3, 8), (8, 3), (1, 5), (5, 1)]:
        a = rng.standard_normal(shape)
        check_factors(a, svd(a))


def test_svd_tiny_singular_values_are_not_clamped():
    a = np.diag([1.0, 1e-14])
    assert svd(a).sigma[1] == pytest.approx(1e-14, rel=1e-6)


def test_svd_reports_driver_attempts(monkeypatch):
    import scipy.linalg

    def broken(*args, **kwargs):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(scipy.linalg, "svd", broken)
    with pytest.raises(SvdConvergenceError) as info:
        svd(np.eye(3))
    assert info.value.attempts == 2


def test_svd_is_deterministic(rng):
    a = rng.standard_normal((20, 12))
    f1, f2 = svd(a), svd(a)
    assert all(np.array_equal(x, y) for x, y in zip(f1, f2))


@pytest.mark.parametrize("shape", [(400, 30), (30, 400), (4096, 50)])
def test_svd_skinny_matches_svd(rng, shape):
    a = rng.standard_normal(shape) + 5.0
    f = svd_skinny(a)
    check_factors(a, f, tol=1e-12)
    assert np.allclose(f.sigma, svd(a).sigma, rtol=1e-12, atol=1e-12 * f.sigma[0])


def test_svd_skinny_falls_back_when_ill_conditioned(rng):
    a = rng.standard_normal((200, 10))
    a[:, 9] = a[:, 8]  # exactly rank deficient
    f = svd_skinny(a)
    check_factors(a, f)
    assert f.sigma[-1] < 1e-10 * f.sigma[0]


def test_as_matrix_rejects_bad_input():
    with pytest.raises(ValueError):
        as_matrix(np.zeros(3))
    with pytest.raises(ValueError):
        as_matrix(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.nan]])
    with pytest.raises(ValueError):
        as_matrix([[1.0, np.inf]])


def test_norms_identity():
    i2 = np.eye(2)
    assert norm_nuclear(i2) == pytest.approx(2.0)
    assert norm_fro(i2) == pytest.approx(np.sqrt(2.0))
    assert norm_op(i2) == pytest.approx(1.0)
    assert norm_l1(i2) == 2.0
    assert norm_inf(i2) == 1.0


def test_norms_zero():
    z = np.zeros((3, 4))
    assert [norm_nuclear(z), norm_fro(z), norm_op(z), norm_l1(z), norm_inf(z)] == [0.0] * 5


def test_norms_unit_rank_one(rng):
    x = rng.standard_normal(6)
    y = rng.standard_normal(4)
    a = np.outer(x / np.linalg.norm(x), y / np.linalg.norm(y))
    for value in (norm_nuclear(a), norm_fro(a), norm_op(a)):
        assert value == pytest.approx(1.0, abs=1e-12)


def test_hadamard():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(hadamard(a, np.ones((2, 2))), a)
    assert np.array_equal(hadamard(a, np.zeros((2, 2))), np.zeros((2, 2)))
    assert np.array_equal(hadamard(a, [[0, 1], [1, 0]]), [[0.0, 2.0], [3.0, 0.0]])
    with pytest.raises(ValueError):
        hadamard(a, np.ones((2, 3)))


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_norm_chain(a):
    op, fro, nuc, l1 = norm_op(a), norm_fro(a), norm_nuclear(a), norm_l1(a)
    slack = 1e-9 * max(1.0, nuc, l1)
    assert op <= fro + slack
    assert fro <= nuc + slack
    assert fro <= l1 + slack


@settings(max_examples=60, deadline=None)
@given(matrices)
def test_svd_invariants_and_idempotence(a):
    f = svd(a)
    check_factors(a, f, tol=1e-9)
    again = svd(f.reconstruct())
    assert np.allclose(again.sigma, f.sigma, atol=1e-8 * max(1.0, f.sigma[0]))
    assert norm_nuclear(a) == float(np.sum(f.sigma))
