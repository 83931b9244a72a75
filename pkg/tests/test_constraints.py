import numpy as np
import pytest

from stable_sysid.constraints import (
    Layout,
    NotStateAffine,
    check_sos,
    contraction_block,
    contraction_min_eig,
    contraction_poly,
    find_metric,
    rescale_for_metric,
    state_affine_stability_block,
    validate_certificate,
)
from stable_sysid.linalg import min_eig
from stable_sysid.model import BasisSpec, ModelParameters, linear_model
from stable_sysid.sdp import ProblemBuilder
from stable_sysid.simulate import simulate
from stable_sysid.synthetic import (
    lyapunov_metric,
    planar_cubic_model,
    random_contracting_model,
    random_stable_linear,
)


def block_value(params, x, u):
    b = ProblemBuilder()
    layout = Layout.allocate(b, params.basis)
    aff = contraction_block(layout, np.atleast_1d(x), np.atleast_1d(u), params.mu)
    return aff.value(layout.pack(params, b.num_vars))


def scalar_linear(E, F, G, P=1.0, mu=1e-3):
    basis = BasisSpec(1, 1, 1)
    return linear_model(basis, [[E]], [[F]], None, [[G]], P=np.array([[P]]), mu=mu)


def scalar_cubic(f_gain, mu=0.1):
    """``e(x) = x + x^3``, ``f = f_gain x``, ``g = 0``, ``P = 1``."""
    basis = BasisSpec(1, 1, 1, deg_e=3)
    Te = np.zeros((1, basis.ne))
    Te[0, 1] = 1.0
    Te[0, 3] = 1.0
    Tf = np.zeros((1, basis.nf))
    Tf[0, basis.linear_index("f", 0)] = f_gain
    return ModelParameters(basis, basis.join(Te, Tf, np.zeros((1, basis.ng))), P=np.eye(1), mu=mu)


class TestContractionBlock:
    def test_scalar_example(self):
        B = block_value(scalar_linear(1.0, 0.5, 0.0, mu=0.5), 0.0, 0.0)
        assert np.allclose(B, [[0.5, 0.5, 0], [0.5, 1, 0], [0, 0, 1]])
        assert min_eig(B) >= 0
        # Schur complement: F'P^{-1}F + P - 2E + G'G = -0.75 <= -0.5
        assert 0.25 + 1 - 2 + 0 <= -0.5

    def test_identity_dynamics_infeasible(self):
        basis = BasisSpec(2, 1, 1)
        params = linear_model(basis, np.eye(2), np.eye(2), None, np.zeros((1, 2)), P=np.eye(2), mu=1e-3)
        assert min_eig(block_value(params, np.zeros(2), np.zeros(1))) < 0

    def test_schur_equivalence(self):
        rng = np.random.default_rng(0)
        hits = 0
        for _ in range(100):
            params = random_contracting_model(rng, n=2)
            A = rng.standard_normal((2, 2))
            params.P = A @ A.T + 0.2 * np.eye(2)
            x, u = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 1)
            from stable_sysid.model import jac_E, jac_F, jac_G

            E, F, G = jac_E(params, x), jac_F(params, x, u), jac_G(params, x, u)
            M = F.T @ np.linalg.solve(params.P, F) + params.P - E - E.T + G.T @ G + params.mu * np.eye(2)
            lhs = min_eig(block_value(params, x, u)) >= 0
            rhs = np.linalg.eigvalsh(0.5 * (M + M.T))[-1] <= 1e-9
            hits += lhs
            assert lhs == rhs
        assert 0 < hits < 100  # both branches exercised

    def test_numeric_matches_affine(self):
        rng = np.random.default_rng(1)
        params = random_contracting_model(rng, n=3)
        x, u = rng.standard_normal((5, 3)), rng.standard_normal((5, 1))
        ref = [min_eig(block_value(params, xi, ui)) for xi, ui in zip(x, u)]
        assert np.allclose(contraction_min_eig(params, x, u), ref, atol=1e-12)


class TestStateAffine:
    def embed(self, rng, n=2):
        from stable_sysid.model import quadratic_stability_embed

        A, B, C, _ = random_stable_linear(rng, n, 1, 1)
        M = lyapunov_metric(A, C)
        basis = BasisSpec(n, 1, 1)
        a = np.hstack([np.zeros((n, 1)), A, B])
        g = np.hstack([np.zeros((1, 1)), C, np.zeros((1, 1))])
        return quadratic_stability_embed(basis, a, g, M), A, B, C, M

    def test_lyapunov_embedding_feasible(self):
        params, *_ = self.embed(np.random.default_rng(0))
        b = ProblemBuilder()
        layout = Layout.allocate(b, params.basis)
        B = state_affine_stability_block(layout, np.zeros(1), params.mu).value(layout.pack(params, b.num_vars))
        assert min_eig(B) >= 0

    def test_identity_infeasible(self):
        basis = BasisSpec(1, 1, 1)
        params = linear_model(basis, [[1.0]], [[1.0]], None, [[0.0]], P=np.eye(1))
        b = ProblemBuilder()
        layout = Layout.allocate(b, basis)
        B = state_affine_stability_block(layout, np.zeros(1), 1e-3).value(layout.pack(params, b.num_vars))
        assert min_eig(B) < 0

    def test_rejects_polynomial(self):
        b = ProblemBuilder()
        layout = Layout.allocate(b, BasisSpec(1, 1, 1, deg_e=3))
        with pytest.raises(NotStateAffine):
            state_affine_stability_block(layout, np.zeros(1), 1e-3)

    def test_same_template_at_any_point(self):
        basis = BasisSpec(2, 1, 1, deg_fu=2, deg_gu=2)
        b = ProblemBuilder()
        layout = Layout.allocate(b, basis)
        rng = np.random.default_rng(3)
        u = rng.standard_normal(1)
        ref = state_affine_stability_block(layout, u, 1e-3)
        for _ in range(5):
            other = contraction_block(layout, rng.standard_normal(2) * 10, u, 1e-3)
            assert np.array_equal(ref.coef, other.coef) and np.array_equal(ref.vars, other.vars)

    def test_metric_substitution_invariance(self):
        # e -> M x, f -> M a, P -> M maps the explicit metric condition to the implicit one
        rng = np.random.default_rng(5)
        for _ in range(10):
            params, A, B, C, M = self.embed(rng)
            explicit = np.block([[M - np.eye(2) * 1e-3, A.T @ M, C.T],
                                 [M @ A, M, np.zeros((2, 1))],
                                 [C, np.zeros((1, 2)), np.eye(1)]])
            implicit = block_value(params, np.zeros(2), np.zeros(1))
            assert np.allclose(explicit, implicit, atol=1e-10)
            assert (min_eig(explicit) >= 0) == (min_eig(implicit) >= 0)


class TestSos:
    def test_wellposed_identity(self):
        basis = BasisSpec(1, 1, 1)
        params = linear_model(basis, [[1.0]], [[0.0]], None, [[0.0]], mu=0.4)
        assert check_sos(params, "wellposedness")[0]

    def test_wellposed_cubic(self):
        params = scalar_cubic(0.0, mu=0.5)
        params.theta[1] = 1.0
        ok, _ = check_sos(params, "wellposedness")
        assert ok

    def test_wellposed_square_fails(self):
        basis = BasisSpec(1, 1, 1, deg_e=2)
        Te = np.zeros((1, basis.ne))
        Te[0, 2] = 1.0
        params = ModelParameters(basis, basis.join(Te, np.zeros((1, basis.nf)), np.zeros((1, basis.ng))), mu=0.1)
        assert not check_sos(params, "wellposedness")[0]

    def test_contraction_cubic(self):
        params = scalar_cubic(0.5)
        assert check_sos(params)[0]
        grid = np.linspace(-5, 5, 1000)[:, None]
        assert contraction_min_eig(params, grid).min() >= 0

    def test_contraction_gain_two_fails(self):
        params = scalar_cubic(2.0)
        assert not check_sos(params)[0]
        # 4 + 1 - 2 (1 + 3 x^2) > -0.1 for |x| < 0.72: violated around the origin
        grid = np.linspace(-5, 5, 1000)[:, None]
        eigs = contraction_min_eig(params, grid)
        assert np.all(eigs[np.abs(grid[:, 0]) < 0.7] < 0)

    def test_linear_model_is_constant_lmi(self):
        basis = BasisSpec(2, 1, 1)
        b = ProblemBuilder()
        layout = Layout.allocate(b, basis)
        poly = contraction_poly(layout, 1e-3)
        assert list(poly.terms) == [(0, 0)] or list(poly.terms) == [(0,) * poly.nvars]
        const = poly.terms[next(iter(poly.terms))]
        ref = contraction_block(layout, np.zeros(2), np.zeros(1), 1e-3)
        z = np.random.default_rng(0).standard_normal(b.num_vars)
        assert np.allclose(const.value(z), ref.value(z))

    def test_certified_model_validates(self):
        params = planar_cubic_model()
        assert check_sos(params)[0]
        rep = validate_certificate(params, 10000, (-3 * np.ones(3), 3 * np.ones(3)))
        assert rep.passed and rep.worst_min_eig >= -1e-7 and rep.num_samples >= 10000


class TestValidation:
    def identity_model(self):
        basis = BasisSpec(2, 1, 1)
        return linear_model(basis, np.eye(2), np.eye(2), None, np.zeros((1, 2)), P=np.eye(2))

    def test_identity_fails(self):
        rep = validate_certificate(self.identity_model(), 1000, (-np.ones(3), np.ones(3)))
        assert not rep.passed and rep.worst_min_eig < 0

    def test_reproducible(self):
        params = random_contracting_model(np.random.default_rng(2))
        box = (-2 * np.ones(3), 2 * np.ones(3))
        a = validate_certificate(params, 2000, box, seed=4)
        b = validate_certificate(params, 2000, box, seed=4)
        assert a.worst_min_eig == b.worst_min_eig and np.array_equal(a.worst_point, b.worst_point)

    def test_data_points_included(self):
        params = self.identity_model()
        pts = np.zeros((3, 3))
        rep = validate_certificate(params, 3, (np.zeros(3), np.zeros(3)), data_points=pts)
        assert rep.num_samples == 3

    def test_find_metric(self):
        rng = np.random.default_rng(0)
        A, B, C, _ = random_stable_linear(rng, 2, 1, 1, radius=0.8)
        A *= 0.5 / np.linalg.norm(A, 2)
        C *= 0.1 / np.linalg.norm(C, 2)
        basis = BasisSpec(2, 1, 1)
        params = linear_model(basis, np.eye(2), A, B, C, P=np.eye(2) * 50)
        xs, us = rng.standard_normal((5, 2)), rng.standard_normal((5, 1))
        P, margin = find_metric(params, xs, us)
        assert margin > 0
        params.P = P
        assert contraction_min_eig(params, xs, us).min() >= -1e-7


class TestRescale:
    def model(self):
        # stable dynamics written with a tiny, anisotropic E
        E = np.diag([1e-3, 2.6e-2])
        A = np.array([[0.8, 0.25], [-0.25, 0.6]])
        return linear_model(BasisSpec(2, 1, 1), E, E @ A, E @ np.ones((2, 1)), [[1.5, 0.75]])

    def test_recovers_metric(self):
        params = self.model()
        rng = np.random.default_rng(0)
        xs, us = rng.uniform(-1, 1, (10, 2)), rng.uniform(-1, 1, (10, 1))
        assert find_metric(params, xs, us)[1] < 0
        out, M = rescale_for_metric(params, xs, us)
        assert out is not None
        assert contraction_min_eig(out, xs, us).min() > 0
        u = rng.uniform(-1, 1, (50, 1))
        assert np.allclose(simulate(out, [0.3, -0.2], u).y, simulate(params, [0.3, -0.2], u).y, atol=1e-9)

    def test_unstable_dynamics_rejected(self):
        E = np.eye(2)
        params = linear_model(BasisSpec(2, 1, 1), E, 1.2 * E, None, [[1.0, 0.0]])
        rng = np.random.default_rng(1)
        out, M = rescale_for_metric(params, rng.uniform(-1, 1, (5, 2)), rng.uniform(-1, 1, (5, 1)))
        assert out is None and M is None
