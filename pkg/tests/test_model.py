import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import naive_poly
from stable_sysid.constraints import contraction_min_eig
from stable_sysid.linalg import NotPositiveDefinite
from stable_sysid.model import (
    BasisSpec,
    DegreeOverflow,
    DimensionMismatch,
    ModelKind,
    ModelParameters,
    dumps_model,
    eval_e,
    eval_f,
    eval_g,
    graded_lex_exponents,
    jac_E,
    jac_F,
    jac_G,
    linear_model,
    loads_model,
    quadratic_stability_embed,
    theta_jacobians,
)
from stable_sysid.simulate import simulate
from stable_sysid.synthetic import lyapunov_metric, random_stable_linear

seeds = st.integers(0, 2 ** 32 - 1)


def cubic_scalar():
    """``e(x) = x^3 + x``, ``f = 0``, ``g = 0``."""
    basis = BasisSpec(1, 1, 1, deg_e=3)
    Te = np.zeros((1, basis.ne))
    Te[0, basis.linear_index("e", 0)] = 1.0
    Te[0, list(map(tuple, basis.e_exps)).index((3,))] = 1.0
    return ModelParameters(basis, basis.join(Te, np.zeros((1, basis.nf)), np.zeros((1, basis.ng))))


def random_params(rng, n=2, m=1, p=2, deg=(3, 2, 2, 2, 2), joint=False):
    b = BasisSpec(n, m, p, *deg, joint_u=joint)
    return ModelParameters(b, rng.standard_normal(b.num_params), P=np.eye(n))


class TestBasis:
    def test_graded_lex_order(self):
        ex = graded_lex_exponents(2, 2)
        assert [tuple(r) for r in ex] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]

    def test_contains_affine_functions(self):
        b = BasisSpec(3, 2, 1, deg_e=2, deg_fx=3, deg_gu=2)
        for which, nv in (("e", 3), ("f", 5), ("g", 5)):
            b.constant_index(which)
            for i in range(nv):
                b.linear_index(which, i)

    def test_unique_rows(self):
        b = BasisSpec(2, 2, 1, deg_e=3, deg_fx=2, deg_fu=2, joint_u=True)
        for ex in (b.e_exps, b.f_exps, b.g_exps):
            assert len({tuple(r) for r in ex}) == len(ex)

    def test_kinds(self):
        assert BasisSpec(2, 1, 1).kind is ModelKind.LINEAR
        assert BasisSpec(2, 1, 1, deg_fu=2).kind is ModelKind.STATE_AFFINE
        assert BasisSpec(2, 1, 1, deg_e=3).kind is ModelKind.POLYNOMIAL

    def test_limits(self):
        with pytest.raises(DegreeOverflow):
            BasisSpec(7, 1, 1)
        with pytest.raises(DegreeOverflow):
            BasisSpec(2, 1, 1, deg_e=6)
        with pytest.raises(DimensionMismatch):
            BasisSpec(0, 1, 1)


class TestEvaluation:
    def test_identity_model(self):
        b = BasisSpec(2, 1, 1)
        params = linear_model(b, np.eye(2), np.zeros((2, 2)), None, np.zeros((1, 2)))
        assert np.allclose(eval_e(params, [3.0, -1.0]), [3, -1])
        assert np.allclose(jac_E(params, [0.3, 2.0]), np.eye(2))

    def test_cubic_scalar(self):
        params = cubic_scalar()
        assert eval_e(params, [1.0])[0] == pytest.approx(2.0)
        assert jac_E(params, [1.0])[0, 0] == pytest.approx(4.0)

    def test_dimension_mismatch(self):
        params = random_params(np.random.default_rng(0))
        with pytest.raises(DimensionMismatch):
            eval_e(params, [1.0, 2.0, 3.0])
        with pytest.raises(DimensionMismatch):
            eval_f(params, [1.0, 2.0], [1.0, 2.0])

    @given(seeds, st.booleans())
    def test_matches_naive_monomials(self, seed, joint):
        rng = np.random.default_rng(seed)
        params = random_params(rng, joint=joint)
        Te, Tf, Tg = params.basis.split(params.theta)
        x, u = rng.standard_normal(2), rng.standard_normal(1)
        xu = np.concatenate([x, u])
        assert np.allclose(eval_e(params, x), naive_poly(Te, params.basis.e_exps, x), atol=1e-12)
        assert np.allclose(eval_f(params, x, u), naive_poly(Tf, params.basis.f_exps, xu), atol=1e-12)
        assert np.allclose(eval_g(params, x, u), naive_poly(Tg, params.basis.g_exps, xu), atol=1e-12)

    @given(seeds)
    def test_linear_in_theta(self, seed):
        rng = np.random.default_rng(seed)
        p1, p2 = random_params(rng), random_params(rng)
        a, b = rng.standard_normal(2)
        mix = ModelParameters(p1.basis, a * p1.theta + b * p2.theta)
        x, u = rng.standard_normal(2), rng.standard_normal(1)
        for fn in (lambda q: eval_e(q, x), lambda q: eval_f(q, x, u), lambda q: eval_g(q, x, u)):
            assert np.allclose(fn(mix), a * fn(p1) + b * fn(p2), atol=1e-12 * (1 + abs(a) + abs(b)) * 10)

    @given(seeds)
    def test_jacobians_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        params = random_params(rng, joint=True)
        x, u = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1)
        h = 1e-5
        for fn, jac in ((lambda z: eval_e(params, z), jac_E(params, x)),
                        (lambda z: eval_f(params, z, u), jac_F(params, x, u)),
                        (lambda z: eval_g(params, z, u), jac_G(params, x, u))):
            fd = np.column_stack([(fn(x + h * e) - fn(x - h * e)) / (2 * h) for e in np.eye(2)])
            assert np.allclose(jac, fd, atol=1e-6)

    def test_directional_derivatives(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            params = random_params(rng)
            x, d = rng.uniform(-1, 1, 2), rng.standard_normal(2)
            h = 1e-6
            fd = (eval_e(params, x + h * d) - eval_e(params, x - h * d)) / (2 * h)
            assert np.allclose(jac_E(params, x) @ d, fd, atol=1e-6)


class TestThetaMaps:
    def test_linear_basis_is_selection(self):
        b = BasisSpec(2, 1, 1)
        maps = theta_jacobians(b, np.zeros(2), np.zeros(1))
        for M in (maps.E, maps.F, maps.G):
            flat = M.reshape(-1, b.num_params)
            assert set(np.unique(flat)) <= {0.0, 1.0}
            assert np.all(flat.sum(axis=1) == 1)

    def test_zero_theta(self):
        rng = np.random.default_rng(0)
        b = BasisSpec(2, 1, 2, 3, 2, 1, 2, 1)
        maps = theta_jacobians(b, rng.standard_normal(2), rng.standard_normal(1))
        z = np.zeros(b.num_params)
        for M in (maps.e, maps.f, maps.g, maps.E, maps.F, maps.G):
            assert not np.any(M @ z)

    @given(seeds)
    def test_reproduces_evaluation(self, seed):
        rng = np.random.default_rng(seed)
        params = random_params(rng, joint=True)
        x, u = rng.standard_normal(2), rng.standard_normal(1)
        maps = theta_jacobians(params.basis, x, u)
        th = params.theta
        assert np.allclose(maps.f @ th, eval_f(params, x, u), atol=1e-14 * (1 + np.abs(th).sum() * 50))
        assert np.allclose(maps.e @ th, eval_e(params, x), rtol=1e-13, atol=1e-12)
        assert np.allclose(maps.g @ th, eval_g(params, x, u), rtol=1e-13, atol=1e-12)
        assert np.allclose(maps.E @ th, jac_E(params, x), rtol=1e-13, atol=1e-12)
        assert np.allclose(maps.F @ th, jac_F(params, x, u), rtol=1e-13, atol=1e-12)
        assert np.allclose(maps.G @ th, jac_G(params, x, u), rtol=1e-13, atol=1e-12)


class TestQuadraticStabilityEmbed:
    def coeffs(self, b, A, B, C):
        a = np.zeros((b.n, b.nf))
        g = np.zeros((b.p, b.ng))
        for i in range(b.n):
            a[:, b.linear_index("f", i)] = A[:, i]
            g[:, b.linear_index("g", i)] = C[:, i]
        for j in range(b.m):
            a[:, b.linear_index("f", b.n + j)] = B[:, j]
        return a, g

    def test_identity_metric(self):
        b = BasisSpec(1, 1, 1)
        a, g = self.coeffs(b, np.array([[0.5]]), np.array([[1.0]]), np.array([[1.0]]))
        params = quadratic_stability_embed(b, a, g, [[1.0]])
        assert eval_e(params, [2.0])[0] == pytest.approx(2.0)
        assert eval_f(params, [2.0], [1.0])[0] == pytest.approx(2.0)

    def test_scaled_metric_reproduces_explicit_recursion(self):
        b = BasisSpec(1, 1, 1)
        a, g = self.coeffs(b, np.array([[0.5]]), np.zeros((1, 1)), np.array([[1.0]]))
        params = quadratic_stability_embed(b, a, g, [[2.0]])
        assert eval_e(params, [1.0])[0] == pytest.approx(2.0)
        assert eval_f(params, [1.0], [0.0])[0] == pytest.approx(1.0)
        sim = simulate(params, [1.0], np.zeros((51, 1)))
        assert np.allclose(sim.x[:, 0], 0.5 ** np.arange(51), atol=1e-12)

    def test_rejects_indefinite_metric(self):
        b = BasisSpec(1, 1, 1)
        with pytest.raises(NotPositiveDefinite):
            quadratic_stability_embed(b, np.zeros((1, b.nf)), np.zeros((1, b.ng)), [[-1.0]])

    @pytest.mark.parametrize("seed", range(5))
    def test_lyapunov_embedding_contracts(self, seed):
        rng = np.random.default_rng(seed)
        n = 3
        A, B, C, _ = random_stable_linear(rng, n, 1, 1)
        M = lyapunov_metric(A, C)
        b = BasisSpec(n, 1, 1, deg_e=2, deg_fx=2)
        a, g = self.coeffs(b, A, B, C)
        params = quadratic_stability_embed(b, a, g, M, mu=1e-3)
        pts = rng.uniform(-3, 3, size=(100, n))
        assert contraction_min_eig(params, pts, rng.uniform(-3, 3, (100, 1))).min() >= -1e-9
        # trajectories match the explicit recursion
        u = rng.standard_normal((30, 1))
        sim = simulate(params, np.ones(n), u)
        x = np.ones(n)
        for t in range(29):
            x = A @ x + B @ u[t]
        assert np.allclose(sim.x[-1], x, atol=1e-9)


@given(seeds)
def test_serialization_round_trip(seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng, joint=bool(seed % 2))
    params.P = np.array([[2.0, 0.1], [0.1, 1.0]])
    back, extra = loads_model(dumps_model(params, {"lag": "2"}))
    assert back.basis == params.basis
    assert np.array_equal(back.theta, params.theta)
    assert np.array_equal(back.P, params.P)
    assert back.mu == params.mu and extra == {"lag": "2"}
