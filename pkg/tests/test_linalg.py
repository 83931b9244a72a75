import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import grid_sup
from stable_sysid.linalg import (
    BlockTridiagonal,
    NotConcave,
    NotPositiveDefinite,
    block_tridiag_solve,
    concave_quad_bound,
    min_eig,
    sup_concave_quadratic,
    unvech,
    vech,
)

floats = st.floats(-5, 5, allow_nan=False)


def spd(rng, n, floor=0.1):
    A = rng.standard_normal((n, n))
    return A @ A.T + floor * np.eye(n)


class TestConcaveQuadBound:
    def test_tight_scalar(self):
        assert concave_quad_bound([1.0], [1.0], [[1.0]]) == pytest.approx(-1.0)

    def test_zero_b(self):
        assert concave_quad_bound([0, 0], [1, 2], np.eye(2)) == 0.0

    def test_arithmetic(self):
        val = concave_quad_bound([2.0], [1.0], [[3.0]])
        assert val == pytest.approx(8.0)
        assert val >= -1.0 / 3.0

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            concave_quad_bound([1, 0], [0, 1], [[1, 2], [2, 1]])

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 5))
    def test_majorizes_and_tight_at_pb(self, seed, n):
        rng = np.random.default_rng(seed)
        P = spd(rng, n)
        b = rng.standard_normal(n)
        c = rng.standard_normal(n)
        floor = -c @ np.linalg.solve(P, c)
        assert concave_quad_bound(b, c, P) >= floor - 1e-9 * (1 + abs(floor))
        c_t = P @ b
        exact = -c_t @ np.linalg.solve(P, c_t)
        assert concave_quad_bound(b, c_t, P) == pytest.approx(exact, abs=1e-9 * (1 + abs(exact)))


class TestSupConcaveQuadratic:
    def test_zero_linear_term(self):
        val, arg = sup_concave_quadratic([[-1.0]], [0.0], 5.0)
        assert val == 5.0 and arg[0] == 0.0

    def test_scalar_against_grid(self):
        val, arg = sup_concave_quadratic([[-2.0]], [1.0], 0.0)
        ref, at = grid_sup(lambda d: -2 * d ** 2 + 2 * d, -10, 10, 1e-4)
        assert val == pytest.approx(0.5, abs=1e-12)
        assert abs(val - ref) < 1e-6 and abs(arg[0] - at) < 1e-3

    def test_two_dimensional_against_grid(self):
        val, arg = sup_concave_quadratic(-np.eye(2), [1.0, 1.0], 1.0)
        assert val == pytest.approx(3.0) and np.allclose(arg, [1, 1])
        g = np.arange(-3, 5, 0.01)
        X, Y = np.meshgrid(g, g)
        ref = np.max(-(X ** 2) - Y ** 2 + 2 * X + 2 * Y + 1)
        assert abs(val - ref) < 1e-6

    def test_not_concave(self):
        with pytest.raises(NotConcave):
            sup_concave_quadratic([[0.0]], [1.0], 0.0)
        with pytest.raises(NotConcave):
            sup_concave_quadratic(np.diag([-1.0, 1e-12]), [0.0, 0.0], 0.0)

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 4))
    def test_dominates_samples(self, seed, n):
        rng = np.random.default_rng(seed)
        Q = -spd(rng, n)
        b = rng.standard_normal(n)
        c = float(rng.standard_normal())
        val, _ = sup_concave_quadratic(Q, b, c)
        D = rng.standard_normal((1000, n)) * 3
        sampled = np.einsum("ki,ij,kj->k", D, Q, D) + 2 * D @ b + c
        assert val >= sampled.max() - 1e-9
        assert val >= c - 1e-12


class TestBlockTridiagonal:
    def test_identity(self):
        A = BlockTridiagonal(np.stack([np.eye(2)] * 3), np.zeros((2, 2, 2)))
        rhs = np.arange(6.0)
        assert np.allclose(block_tridiag_solve(A, rhs), rhs)

    def test_two_by_two(self):
        A = BlockTridiagonal(np.array([[[2.0]], [[2.0]]]), np.array([[[-1.0]]]))
        assert np.allclose(block_tridiag_solve(A, np.array([1.0, 1.0])), [1.0, 1.0])

    def random_spd_tridiag(self, rng, T, n):
        off = 0.4 * rng.standard_normal((T - 1, n, n))
        diag = np.stack([spd(rng, n) + 2 * n * np.eye(n) for _ in range(T)])
        return BlockTridiagonal(diag, off)

    def test_random_against_dense(self):
        rng = np.random.default_rng(0)
        A = self.random_spd_tridiag(rng, 20, 3)
        rhs = rng.standard_normal(60)
        x = block_tridiag_solve(A, rhs)
        dense = A.to_dense()
        assert np.allclose(dense, dense.T)
        ref = np.linalg.solve(dense, rhs)
        assert np.linalg.norm(x - ref) <= 1e-9 * (1 + np.linalg.norm(ref))
        assert np.linalg.norm(dense @ x - rhs) <= 1e-9 * (1 + np.linalg.norm(rhs))

    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 5))
    def test_matches_dense_small(self, seed, T, n):
        rng = np.random.default_rng(seed)
        if T * n > 60:
            T = 60 // n
        A = self.random_spd_tridiag(rng, max(T, 1), n) if T > 1 else BlockTridiagonal(
            spd(rng, n)[None], np.zeros((0, n, n)))
        rhs = rng.standard_normal(A.num_blocks * n)
        ref = np.linalg.solve(A.to_dense(), rhs)
        x = block_tridiag_solve(A, rhs)
        assert np.linalg.norm(x - ref) <= 1e-9 * (1 + np.linalg.norm(ref))

    def test_indefinite_pivot(self):
        A = BlockTridiagonal(np.array([[[1.0]], [[1.0]]]), np.array([[[2.0]]]))
        with pytest.raises(NotPositiveDefinite):
            block_tridiag_solve(A, np.ones(2))


class TestMinEig:
    def test_identity(self):
        assert min_eig(np.eye(3)) == pytest.approx(1.0)

    def test_swap(self):
        assert min_eig([[0, 1], [1, 0]]) == pytest.approx(-1.0)

    def test_random_against_polynomial_roots(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((6, 6))
        S = A + A.T
        # characteristic polynomial roots as an independent eigenvalue oracle
        roots = np.sort(np.real(np.roots(np.poly(S))))
        assert min_eig(S) == pytest.approx(roots[0], rel=1e-9, abs=1e-9)


@given(arrays(np.float64, (4, 4), elements=floats))
def test_vech_round_trip(A):
    S = A + A.T
    assert np.array_equal(unvech(vech(S), 4), S)
