"""Synthetic systems and datasets for tests and benchmarks."""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.signal

from .dataio import DataSet, embed_output_history
from .model import BasisSpec, ModelParameters, monomials
from .simulate import simulate


def coefficients_for(exps, func, num_vars, rows, rng, num_points=None):
    """Coefficients of ``func`` in a monomial basis by exact interpolation.

    ``func`` maps points ``(N, num_vars)`` to ``(N, rows)`` and must lie in
    the span of the basis; least squares on random points then recovers the
    coefficients to rounding error.
    """
    num_points = num_points or 4 * len(exps) + 10
    pts = rng.uniform(-1.0, 1.0, size=(num_points, num_vars))
    Phi = monomials(exps, pts)
    coef, *_ = np.linalg.lstsq(Phi, func(pts), rcond=None)
    coef[np.abs(coef) < 1e-13] = 0.0
    return coef.T


def smooth_input(rng, T, m, amplitude=1.0, pole=0.7):
    """First-order filtered Gaussian noise, scaled to the given RMS amplitude."""
    w = rng.standard_normal((T + 1, m))
    u = scipy.signal.lfilter([1.0], [1.0, -pole], w, axis=0)
    rms = np.sqrt(np.mean(u ** 2, axis=0))
    return amplitude * u / np.where(rms > 0, rms, 1.0)


def model_dataset(params, u, x0=None):
    """Simulate ``params`` and return a dataset whose states are the true ones."""
    n = params.basis.n
    x0 = np.zeros(n) if x0 is None else x0
    sim = simulate(params, x0, u)
    return DataSet(u=u, y=sim.y, x=sim.x)


# ---------------------------------------------------------------------------
# model families


def planar_cubic_model(mu=1e-3):
    """A contracting planar model with cubic ``e`` and affine ``f``, ``g``.

    ``e(x) = x + 0.5 |x|^2 x + 0.3 (x1^3, x2^3)``, ``f = A x + B u``,
    ``g = C x``. The cubic part of ``e`` is the gradient of a convex quartic,
    so its Jacobian is ``I`` plus a positive semidefinite matrix and
    ``P = I`` certifies contraction for all ``(x, u)``.
    """
    basis = BasisSpec(n=2, m=1, p=1, deg_e=3, deg_fx=1, deg_fu=1, deg_gx=1, deg_gu=1)
    A = np.array([[0.5, 0.3], [-0.3, 0.4]])
    B = np.array([[1.0], [0.5]])
    C = np.array([[0.6, 0.4]])
    rng = np.random.default_rng(0)

    def e(x):
        return x + 0.5 * np.sum(x ** 2, axis=1, keepdims=True) * x + 0.3 * x ** 3

    Te = coefficients_for(basis.e_exps, e, 2, 2, rng)
    Tf = coefficients_for(basis.f_exps, lambda xu: xu[:, :2] @ A.T + xu[:, 2:] @ B.T, 3, 2, rng)
    Tg = coefficients_for(basis.g_exps, lambda xu: xu[:, :2] @ C.T, 3, 1, rng)
    return ModelParameters(basis, basis.join(Te, Tf, Tg), P=np.eye(2), mu=mu)


def monotone_e(rng, n, strength=1.0, skew=0.5):
    """Random strongly monotone cubic map ``e(x) = K x + sum_k w_k (c_k'x)^3 c_k``.

    The symmetric part of ``K`` is the identity and ``w_k > 0``, so
    ``E(x) + E(x)' >= 2 I`` everywhere.
    """
    S = rng.standard_normal((n, n))
    K = np.eye(n) + skew * (S - S.T) / 2
    Cs = rng.standard_normal((n + 1, n))
    w = strength * rng.uniform(0.1, 1.0, size=n + 1)

    def e(x):
        proj = x @ Cs.T
        return x @ K.T + (w * proj ** 3) @ Cs

    return e


def random_contracting_model(rng, n=2, m=1, p=1, mu=1e-3, nonlinear=0.05):
    """Random polynomial model that contracts on ``|x| <= 1.5`` with ``P = I``.

    ``e`` is strongly monotone cubic, ``f`` and ``g`` are affine plus small
    quadratic terms in ``x``. The linear parts satisfy
    ``|A|^2 + |C|^2 <= 0.5``, which leaves room for the quadratic terms.
    """
    basis = BasisSpec(n=n, m=m, p=p, deg_e=3, deg_fx=2, deg_fu=1, deg_gx=2, deg_gu=1)
    A = rng.standard_normal((n, n))
    A *= 0.55 / np.linalg.norm(A, 2)
    C = rng.standard_normal((p, n))
    C *= 0.4 / np.linalg.norm(C, 2)
    B = rng.standard_normal((n, m))
    D = 0.2 * rng.standard_normal((p, m))
    Hf = nonlinear * rng.standard_normal((n, n, n))
    Hg = nonlinear * rng.standard_normal((p, n, n))
    e = monotone_e(rng, n, strength=rng.uniform(0.2, 1.0))

    def f(xu):
        x, u = xu[:, :n], xu[:, n:]
        return x @ A.T + u @ B.T + np.einsum("ijk,nj,nk->ni", Hf, x, x)

    def g(xu):
        x, u = xu[:, :n], xu[:, n:]
        return x @ C.T + u @ D.T + np.einsum("ijk,nj,nk->ni", Hg, x, x)

    Te = coefficients_for(basis.e_exps, e, n, n, rng)
    Tf = coefficients_for(basis.f_exps, f, n + m, n, rng)
    Tg = coefficients_for(basis.g_exps, g, n + m, p, rng)
    return ModelParameters(basis, basis.join(Te, Tf, Tg), P=np.eye(n), mu=mu)


def random_state_affine_model(rng, n=2, m=1, p=1, mu=1e-3, input_degree=2):
    """Random model affine in ``x`` (polynomial in ``u``) that contracts with ``P = I``."""
    basis = BasisSpec(n=n, m=m, p=p, deg_e=1, deg_fx=1, deg_fu=input_degree, deg_gx=1,
                      deg_gu=input_degree)
    S = rng.standard_normal((n, n))
    K = np.eye(n) + 0.5 * (S - S.T) / 2
    A = rng.standard_normal((n, n))
    A *= 0.6 / np.linalg.norm(A, 2)
    C = rng.standard_normal((p, n))
    C *= 0.5 / np.linalg.norm(C, 2)
    cu = rng.standard_normal((n, m))
    du = rng.standard_normal((p, m))

    def f(xu):
        x, u = xu[:, :n], xu[:, n:]
        return x @ A.T + u @ cu.T + 0.3 * (u ** input_degree) @ cu.T

    def g(xu):
        x, u = xu[:, :n], xu[:, n:]
        return x @ C.T + 0.2 * u @ du.T + 0.1 * (u ** input_degree) @ du.T

    Te = coefficients_for(basis.e_exps, lambda x: x @ K.T, n, n, rng)
    Tf = coefficients_for(basis.f_exps, f, n + m, n, rng)
    Tg = coefficients_for(basis.g_exps, g, n + m, p, rng)
    return ModelParameters(basis, basis.join(Te, Tf, Tg), P=np.eye(n), mu=mu)


def random_dataset(rng, n, m, p, T, scale=1.0):
    """Arbitrary smooth signals; they need not come from any model."""
    x = smooth_input(rng, T, n, amplitude=0.5 * scale)
    u = smooth_input(rng, T, m, amplitude=scale)
    y = smooth_input(rng, T, p, amplitude=scale)
    return DataSet(u=u, y=y, x=x)


def random_stable_linear(rng, n, m, p, radius=0.9):
    """``(A, B, C, D)`` with spectral radius of ``A`` at most ``radius``."""
    A = rng.standard_normal((n, n))
    rho = np.max(np.abs(np.linalg.eigvals(A)))
    A *= rng.uniform(0.3, 1.0) * radius / rho
    return A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))


def lyapunov_metric(A, C):
    """``M`` solving ``A'MA - M = -I - C'C``."""
    n = A.shape[0]
    return scipy.linalg.solve_discrete_lyapunov(A.T, np.eye(n) + C.T @ C)


# ---------------------------------------------------------------------------
# Wiener system with output saturation


class WienerSystem:
    """Stable linear dynamics followed by a saturating output ``y = tanh(c'x)``."""

    def __init__(self, A, B, c, gain=1.5):
        self.A, self.B, self.c, self.gain = A, B, c, gain

    @classmethod
    def default(cls):
        A = np.array([[0.8, 0.25], [-0.25, 0.6]])
        B = np.array([[0.6], [0.3]])
        c = np.array([1.0, 0.5])
        return cls(A, B, c)

    def run(self, u, x0=None):
        u = np.asarray(u, dtype=float).reshape(-1, self.B.shape[1])
        x = np.zeros((len(u), self.A.shape[0]))
        if x0 is not None:
            x[0] = x0
        for t in range(len(u) - 1):
            x[t + 1] = self.A @ x[t] + self.B @ u[t]
        y = np.tanh(self.gain * x @ self.c)[:, None]
        return y

    def dataset(self, u, lag=2, input_lag=1):
        """Output-history embedding of a simulated run."""
        y = self.run(u)
        return embed_output_history(y, u, lag, input_lag)
