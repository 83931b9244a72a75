"""Simulation of implicit models and incremental-stability probes.

Each step solves ``e(x_{t+1}) = f(x_t, u_t)``. For well-posed models ``e``
is strongly monotone, so a damped Newton iteration with an Armijo line search
on ``0.5 |e(x) - z|^2`` converges; a fixed-step monotone iteration is kept as
a fallback when Newton stalls.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .dataio import save_csv
from .model import eval_e, eval_f, eval_g, jac_E

NEWTON_TOL = 1e-10
MAX_NEWTON = 100
ARMIJO_C = 1e-4


class NoConvergence(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class ConstantData(ValueError):
    pass


@dataclass
class ImplicitSolve:
    x: np.ndarray
    iterations: int
    residual: float
    used_fallback: bool


def solve_implicit(params, z, x_init=None, tol=NEWTON_TOL, max_iter=MAX_NEWTON):
    """Root of ``e(x) = z`` by guarded Newton.

    Converged means ``|e(x) - z| <= tol * (1 + |z|)``. At least one Newton
    step is taken, so linear ``e`` is inverted exactly.

    Returns
    -------
    ImplicitSolve

    Raises
    ------
    NoConvergence
        If neither Newton nor the monotone fallback reaches ``tol`` within
        ``max_iter`` iterations in total.
    """
    z = np.asarray(z, dtype=float)
    x = np.array(z if x_init is None else x_init, dtype=float)
    target = tol * (1.0 + np.linalg.norm(z))
    r = eval_e(params, x) - z
    nr = np.linalg.norm(r)
    it = 0
    fallback = False
    # one step is always taken: a warm start can meet the absolute tolerance
    # while still being far off in relative terms when the state is tiny
    while (nr > target or it == 0) and it < max_iter and nr > 0:
        it += 1
        E = jac_E(params, x)
        try:
            with np.errstate(divide="ignore", invalid="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                dx = -scipy.linalg.solve(E, r)
        except (np.linalg.LinAlgError, ValueError):
            dx = None
        accepted = False
        if dx is not None and np.all(np.isfinite(dx)):
            merit = 0.5 * nr ** 2
            # descent rate of the merit along a Newton step is -|r|^2
            a = 1.0
            for _ in range(40):
                r_new = eval_e(params, x + a * dx) - z
                if 0.5 * (r_new @ r_new) <= (1.0 - 2.0 * ARMIJO_C * a) * merit:
                    accepted = True
                    break
                a *= 0.5
        if accepted:
            x = x + a * dx
            r = r_new
        else:
            fallback = True
            x, r = _monotone_steps(params, x, z, r)
        nr = np.linalg.norm(r)
    if nr > target:
        raise NoConvergence(f"|e(x) - z| = {nr:.3e} after {it} iterations")
    return ImplicitSolve(x, it, float(nr), fallback)


def _monotone_steps(params, x, z, r, count=10):
    """``x <- x - alpha (e(x) - z)`` with ``alpha = mu / L^2``.

    ``L`` is a local estimate of the Lipschitz constant of ``e`` taken from
    Jacobian norms on the segment between ``x`` and a trial step.
    """
    mu = params.mu
    trial = np.stack([x, x - r])
    L = max(np.linalg.norm(J, 2) for J in jac_E(params, trial).reshape(-1, x.size, x.size))
    L = max(L, mu)
    alpha = mu / L ** 2
    for _ in range(count):
        x = x - alpha * r
        r = eval_e(params, x) - z
    return x, r


@dataclass
class SimResult:
    x: np.ndarray  # (T + 1, n)
    y: np.ndarray  # (T + 1, p)
    newton_iters: np.ndarray  # (T,)
    max_residual: float


def simulate(params, x0, u):
    """Run the model from ``x0`` under inputs ``u`` of shape ``(T + 1, m)``."""
    basis = params.basis
    u = np.asarray(u, dtype=float).reshape(-1, basis.m)
    T = u.shape[0] - 1
    x = np.zeros((T + 1, basis.n))
    x[0] = np.asarray(x0, dtype=float).reshape(basis.n)
    iters = np.zeros(T, dtype=int)
    worst = 0.0
    for t in range(T):
        z = eval_f(params, x[t], u[t])
        if not np.all(np.isfinite(z)):
            raise NoConvergence("non-finite right-hand side", step=t)
        try:
            res = solve_implicit(params, z, x[t])
        except NoConvergence as err:
            raise NoConvergence(str(err), step=t) from None
        x[t + 1] = res.x
        iters[t] = res.iterations
        worst = max(worst, res.residual / (1.0 + np.linalg.norm(z)))
    y = eval_g(params, x, u)
    return SimResult(x, y, iters, worst)


def simulation_error(params, data):
    """Output error from ``x(0) = x~(0)`` over ``t = 0..T``."""
    sim = simulate(params, data.x[0], data.u)
    return float(np.sum((sim.y - data.y) ** 2))


def j_perf(y_sim, y_data):
    """Percent normalized simulation error."""
    y_sim = np.asarray(y_sim, dtype=float)
    y_data = np.asarray(y_data, dtype=float)
    if y_sim.shape != y_data.shape:
        raise ValueError(f"shape mismatch {y_sim.shape} vs {y_data.shape}")
    dev = np.sum((y_data - y_data.mean(axis=0)) ** 2)
    if dev <= 0:
        raise ConstantData("data output is constant")
    return float(100.0 * np.sqrt(np.sum((y_data - y_sim) ** 2) / dev))


@dataclass
class ProbeResult:
    state_gap: np.ndarray
    output_gap: np.ndarray
    storage_bound: float

    @property
    def output_gap_sum(self):
        return float(np.sum(self.output_gap))

    def tail_fraction(self, frac=0.1):
        """Share of the output-gap sum contributed by the final ``frac`` of steps."""
        total = self.output_gap_sum
        if total == 0:
            return 0.0
        k = max(1, int(np.ceil(frac * self.output_gap.size)))
        return float(np.sum(self.output_gap[-k:]) / total)

    def bound_holds(self, slack=0.05):
        return self.output_gap_sum <= (1.0 + slack) * self.storage_bound + 1e-12


def stability_probe(params, x1_0, x2_0, u, num_rho=11):
    """Two simulations from different initial states under the same input.

    The storage bound is ``max_rho |E(x_rho) (x2 - x1)|^2_{P^{-1}}`` over
    ``num_rho`` points on the segment between the initial states.
    """
    s1 = simulate(params, x1_0, u)
    s2 = simulate(params, x2_0, u)
    d0 = np.asarray(x2_0, dtype=float) - np.asarray(x1_0, dtype=float)
    rho = np.linspace(0.0, 1.0, num_rho)
    pts = np.asarray(x1_0, dtype=float)[None] + rho[:, None] * d0[None]
    E = jac_E(params, pts).reshape(num_rho, d0.size, d0.size)
    v = E @ d0
    L = np.linalg.cholesky(params.P)
    w = scipy.linalg.solve_triangular(L, v.T, lower=True)
    bound = float(np.max(np.sum(w ** 2, axis=0)))
    return ProbeResult(
        state_gap=np.sum((s1.x - s2.x) ** 2, axis=1),
        output_gap=np.sum((s1.y - s2.y) ** 2, axis=1),
        storage_bound=bound,
    )


def export_trajectory(path, u, y_data, y_sim):
    """CSV with the input schema plus ``yhat1..yhatp`` columns."""
    save_csv(path, u, y_data, {"yhat": y_sim})
