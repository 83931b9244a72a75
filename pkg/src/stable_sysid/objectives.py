"""Equation errors and convex upper bounds on (linearized) simulation error.

All functionals here are built from the surrogate data ``(x~, u~, y~)``
over ``t = 0..T``. With ``Delta_0 = 0`` the linearized error dynamics are

    E(x~_{t+1}) Delta_{t+1} = F(x~_t, u~_t) Delta_t + eps_t

and the bounds satisfy ``J0 <= J0_L <= J0_V`` for every model that meets
the contraction condition at the data points. The local RIE sum ``J0_V``
runs over ``t = 0..T``; the last term uses ``eps_T = 0`` because no
successor state exists.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .affine import Affine, block
from .constraints import (
    Layout,
    add_pointwise_contraction,
    add_state_affine_stability,
    contraction_sos,
    wellposedness_sos,
)
from .linalg import (
    BlockTridiagonal,
    NotConcave,
    NotPositiveDefinite,
    block_tridiag_solve,
    cholesky,
    sup_concave_quadratic,
    symmetrize,
    unvech,
)
from .model import (
    DimensionMismatch,
    ModelKind,
    ModelParameters,
    eval_e,
    eval_f,
    eval_g,
    jac_E,
    jac_F,
    jac_G,
    theta_jacobians,
)
from .sdp import ProblemBuilder
from .sos import PolyMatrix, add_matrix_sos, block_poly, model_polys


class SingularE(np.linalg.LinAlgError):
    pass


class ModeConflict(ValueError):
    pass


class ObjectiveMode(enum.Enum):
    EE = "EE"
    LOCAL_RIE = "LocalRIE"
    SOS_RIE = "SosRIE"


class ConstraintMode(enum.Enum):
    POINTWISE = "Pointwise"
    SOS = "SOS"
    STATE_AFFINE = "StateAffine"
    WELL_POSED = "WellPosed"
    NONE = "None"


def _check_data(basis, data):
    data.require_states()
    if (data.n, data.m, data.p) != (basis.n, basis.m, basis.p):
        raise DimensionMismatch(
            f"data has (n, m, p) = {(data.n, data.m, data.p)}, basis expects {(basis.n, basis.m, basis.p)}"
        )
    if data.T < 1:
        raise DimensionMismatch("need at least two samples")


# ---------------------------------------------------------------------------
# equation error


@dataclass
class EquationErrors:
    eps: np.ndarray  # (T, n)
    eta: np.ndarray  # (T + 1, p)

    @property
    def total(self):
        return float(np.sum(self.eps ** 2) + np.sum(self.eta ** 2))


def equation_errors(params, data):
    """``eps_t = e(x~_{t+1}) - f(x~_t, u~_t)`` and ``eta_t = y~_t - g(x~_t, u~_t)``."""
    _check_data(params.basis, data)
    x, u, y = data.x, data.u, data.y
    eps = eval_e(params, x[1:]) - eval_f(params, x[:-1], u[:-1])
    eta = y - eval_g(params, x, u)
    return EquationErrors(eps, eta)


def equation_error_maps(basis, data):
    """Affine-in-theta equation errors as ``(J, r0)`` with ``residual = J theta - r0``.

    Rows are ``eps_0..eps_{T-1}`` then ``eta_0..eta_T`` (sign flipped so that
    every row is linear minus data).
    """
    _check_data(basis, data)
    maps = theta_jacobians(basis, data.x, data.u)
    Jeps = maps.e[1:] - maps.f[:-1]
    Jeta = maps.g
    J = np.concatenate([Jeps.reshape(-1, basis.num_params), Jeta.reshape(-1, basis.num_params)])
    r0 = np.concatenate([np.zeros(Jeps.shape[0] * basis.n), data.y.ravel()])
    return J, r0


def j_ee(params, data):
    return equation_errors(params, data).total


def j_ee_gradient(params, data):
    """Gradient of ``j_ee`` with respect to ``theta``."""
    J, r0 = equation_error_maps(params.basis, data)
    return 2.0 * J.T @ (J @ params.theta - r0)


# ---------------------------------------------------------------------------
# local RIE


@dataclass
class PointData:
    """Jacobians and equation errors at every data point ``t = 0..T``."""

    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    eps: np.ndarray  # eps_T = 0 appended
    eta: np.ndarray


def point_data(params, data):
    ee = equation_errors(params, data)
    b = params.basis
    E = jac_E(params, data.x).reshape(-1, b.n, b.n)
    F = jac_F(params, data.x, data.u).reshape(-1, b.n, b.n)
    G = jac_G(params, data.x, data.u).reshape(-1, b.p, b.n)
    eps = np.vstack([ee.eps, np.zeros((1, b.n))])
    return PointData(E, F, G, eps, ee.eta)


def local_rie_quadratic(P, E, F, G, eps, eta):
    """``(Q, b, c)`` of the concave quadratic whose supremum is the local RIE."""
    try:
        L = cholesky(P)
    except NotPositiveDefinite:
        raise NotPositiveDefinite("metric P must be positive definite") from None
    Pinv_F = scipy.linalg.cho_solve((L, True), F)
    Pinv_e = scipy.linalg.cho_solve((L, True), eps)
    Q = F.T @ Pinv_F + P - E - E.T + G.T @ G
    b = F.T @ Pinv_e + G.T @ eta
    c = float(eps @ Pinv_e + eta @ eta)
    return symmetrize(Q), b, c


def eval_local_rie_term(params, data, t, pd=None):
    """Local RIE at sample ``t`` in closed form.

    Raises :class:`NotConcave` when the contraction condition fails at the
    sample, in which case the supremum is infinite.
    """
    pd = pd or point_data(params, data)
    Q, b, c = local_rie_quadratic(params.P, pd.E[t], pd.F[t], pd.G[t], pd.eps[t], pd.eta[t])
    try:
        val, _ = sup_concave_quadratic(Q, b, c)
    except NotConcave:
        raise NotConcave(f"contraction fails at sample t={t}") from None
    return val


def eval_local_rie(params, data):
    """Sum of the local RIE terms over ``t = 0..T``."""
    pd = point_data(params, data)
    return float(sum(eval_local_rie_term(params, data, t, pd) for t in range(data.T + 1)))


def local_rie_block(layout, data, t, s_var):
    """Epigraph LMI for the local RIE at sample ``t``; feasible iff term <= s.

    Block layout::

        [[E + E' - P, 0,   F',  G'  ],
         [0,          s,   eps', eta'],
         [F,          eps, P,    0   ],
         [G,          eta, 0,    I   ]]
    """
    basis = layout.basis
    n, p = basis.n, basis.p
    x, u, y = data.x, data.u, data.y
    mx = theta_jacobians(basis, x[t], u[t])
    E = layout.theta_affine(mx.E)
    F = layout.theta_affine(mx.F)
    G = layout.theta_affine(mx.G)
    if t < data.T:
        mnext = theta_jacobians(basis, x[t + 1], u[t + 1])
        eps = layout.theta_affine(mnext.e - mx.f).reshape(n, 1)
    else:
        eps = Affine.constant(np.zeros((n, 1)))
    eta = (Affine.constant(y[t]) - layout.theta_affine(mx.g)).reshape(p, 1)
    P = layout.P_affine
    s = Affine.linear([s_var], np.ones((1, 1, 1)))
    return block([
        [E + E.T - P, None, F.T, G.T],
        [None, s, eps.T, eta.T],
        [F, eps, P, None],
        [G, eta, None, np.eye(p)],
    ])


# ---------------------------------------------------------------------------
# lifted bound and linearized simulation error


@dataclass
class LiftedSystem:
    """``H Delta = eps`` with ``Delta = (Delta_1..Delta_T)``.

    ``H`` has diagonal blocks ``E(x~_{t+1})`` and sub-diagonal blocks
    ``-F(x~_t, u~_t)``; ``Gbar`` holds ``G(x~_t, u~_t)`` for ``t = 1..T``.
    """

    H_diag: np.ndarray
    H_sub: np.ndarray
    Gbar: np.ndarray
    eps: np.ndarray
    eta: np.ndarray  # eta_0..eta_T

    @property
    def T(self):
        return self.H_diag.shape[0]

    def H_dense(self):
        T, n = self.T, self.H_diag.shape[1]
        H = np.zeros((n * T, n * T))
        for t in range(T):
            H[t * n:(t + 1) * n, t * n:(t + 1) * n] = self.H_diag[t]
            if t > 0:
                H[t * n:(t + 1) * n, (t - 1) * n:t * n] = -self.H_sub[t - 1]
        return H

    def A(self):
        """``H + H' - Gbar' Gbar`` as a block-tridiagonal matrix."""
        D = self.H_diag + np.swapaxes(self.H_diag, 1, 2) - np.swapaxes(self.Gbar, 1, 2) @ self.Gbar
        return BlockTridiagonal(D, -self.H_sub)


def build_lifted(params, data, pd=None):
    pd = pd or point_data(params, data)
    T = data.T
    return LiftedSystem(
        H_diag=pd.E[1:T + 1].copy(),
        H_sub=pd.F[1:T].copy(),
        Gbar=pd.G[1:T + 1].copy(),
        eps=pd.eps[:T].copy(),
        eta=pd.eta.copy(),
    )


def linearized_deltas(params, data, pd=None):
    """Forward recursion for ``Delta_0..Delta_T`` with ``Delta_0 = 0``."""
    pd = pd or point_data(params, data)
    n = params.basis.n
    D = np.zeros((data.T + 1, n))
    for t in range(data.T):
        rhs = pd.F[t] @ D[t] + pd.eps[t]
        try:
            lu = scipy.linalg.lu_factor(pd.E[t + 1], check_finite=True)
        except (np.linalg.LinAlgError, ValueError) as err:
            raise SingularE(f"E(x~_{t + 1}) is singular: {err}") from None
        if np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * max(1.0, np.abs(pd.E[t + 1]).max()):
            raise SingularE(f"E(x~_{t + 1}) is singular")
        D[t + 1] = scipy.linalg.lu_solve(lu, rhs)
    return D


def linearized_sim_error(params, data):
    """``J0 = sum_t |G_t Delta_t + eta_t|^2`` along the linearized recursion."""
    pd = point_data(params, data)
    D = linearized_deltas(params, data, pd)
    r = np.einsum("tij,tj->ti", pd.G, D) + pd.eta
    return float(np.sum(r ** 2))


def eval_lifted_bound(params, data):
    """Exact supremum ``|eta|^2 + w' A^{-1} w`` with ``w = Gbar' eta + eps``."""
    lifted = build_lifted(params, data)
    A = lifted.A()
    eta_tail = lifted.eta[1:]
    w = np.einsum("tji,tj->ti", lifted.Gbar, eta_tail) + lifted.eps
    try:
        sol = block_tridiag_solve(A, w.ravel())
    except NotPositiveDefinite:
        raise NotConcave("H + H' - Gbar'Gbar is not positive definite") from None
    return float(np.sum(lifted.eta ** 2) + w.ravel() @ sol)


# ---------------------------------------------------------------------------
# SOS RIE


def rie_poly(layout, data, t, s_var):
    """Polynomial matrix (in ``x``) whose positivity bounds the RIE term at ``t``."""
    basis = layout.basis
    n, p = basis.n, basis.p
    polys = model_polys(basis, int(layout.theta[0]))
    xt, ut, yt = data.x[t], data.u[t], data.y[t]
    keep = range(n)
    fix = np.concatenate([np.zeros(n), ut])
    e = polys["e"]
    f = polys["f"].substitute(fix, keep)
    g = polys["g"].substitute(fix, keep)

    # shift to v = x - x~_t so the polynomials are centred at the sample
    e, f, g = (_shift(q, xt) for q in (e, f, g))
    f_t = f.terms.get((0,) * n, Affine.constant(np.zeros((n, 1))))
    g_t = g.terms.get((0,) * n, Affine.constant(np.zeros((p, 1))))
    if t < data.T:
        mnext = theta_jacobians(basis, data.x[t + 1], data.u[t + 1])
        e_next = layout.theta_affine(mnext.e).reshape(n, 1)
        eps = e_next - f_t
    else:
        eps = Affine.constant(np.zeros((n, 1)))
    # entries: de = e(x) - e(x~_t), df = f(x) - f(x~_t) - eps, dg = g(x) - y~_t
    de = _drop_constant(e)
    df = _drop_constant(f) - PolyMatrix.constant(n, eps)
    dg = _drop_constant(g) + PolyMatrix.constant(n, g_t - Affine.constant(yt.reshape(p, 1)))

    # scalar corner: s + 2 v'de - v'Pv
    P = layout.P_affine
    corner = PolyMatrix(n, (1, 1))
    corner.add_term((0,) * n, Affine.linear([s_var], np.ones((1, 1, 1))))
    for mon, aff in de.terms.items():
        for i in range(n):
            k = list(mon)
            k[i] += 1
            corner.add_term(k, aff[i].reshape(1, 1) * 2.0)
    for i in range(n):
        for j in range(n):
            k = [0] * n
            k[i] += 1
            k[j] += 1
            corner.add_term(k, -P[i, j].reshape(1, 1))
    return block_poly([
        [corner, df.T, dg.T],
        [df, PolyMatrix.constant(n, P), None],
        [dg, None, PolyMatrix.constant(n, np.eye(p))],
    ])


def _drop_constant(q):
    zero = (0,) * q.nvars
    return PolyMatrix(q.nvars, q.shape, {k: v for k, v in q.terms.items() if k != zero})


def _shift(q, c):
    """Re-expand ``q(x)`` as a polynomial in ``v = x - c``."""
    from math import comb
    from itertools import product

    out = PolyMatrix(q.nvars, q.shape)
    for mon, aff in q.terms.items():
        # prod_i (v_i + c_i)^{a_i}
        ranges = [range(a + 1) for a in mon]
        for ks in product(*ranges):
            w = 1.0
            for a, k, ci in zip(mon, ks, c):
                w *= comb(a, k) * ci ** (a - k)
            if w != 0:
                out.add_term(ks, aff * w)
    return out


def rie_sos_blocks(builder, layout, data, t, s_var):
    """Matrix-SOS certificate that the RIE term at ``t`` is at most ``s``."""
    return add_matrix_sos(builder, rie_poly(layout, data, t, s_var), f"rie_sos[{t}]")


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class FitProblem:
    problem: object
    layout: Layout
    slack: np.ndarray
    objective_mode: ObjectiveMode
    constraint_mode: ConstraintMode
    mu: float
    epigraph: np.ndarray = None
    certificates: list = field(default_factory=list)

    def params(self, z):
        basis = self.layout.basis
        P = unvech(z[self.layout.P], basis.n)
        return ModelParameters(basis, z[self.layout.theta].copy(), P=symmetrize(P), mu=self.mu)


def _as_mode(value, cls):
    if isinstance(value, cls):
        return value
    for mode in cls:
        if mode.value.lower() == str(value).lower():
            return mode
    raise ModeConflict(f"unknown {cls.__name__} {value!r}")


def assemble_fit_problem(basis, data, objective_mode="LocalRIE", constraint_mode="SOS",
                         mu=1e-3, rho_reg=1e-8, indices=None):
    """Lower one identification problem to an SDP.

    Parameters
    ----------
    basis : BasisSpec
    data : DataSet
        Must carry surrogate states.
    objective_mode : {"EE", "LocalRIE", "SosRIE"}
    constraint_mode : {"Pointwise", "SOS", "StateAffine", "WellPosed", "None"}
        ``WellPosed`` only certifies ``E + E' >= 2 mu I``; it is meant for
        equation-error fits.
    mu : float
        Contraction margin.
    rho_reg : float
        Weight of ``tr P + |theta|^2`` in the objective.
    indices : array of int, optional
        Sample indices that receive an RIE term or a pointwise constraint.
        Defaults to every sample ``0..T``.

    Returns
    -------
    FitProblem
    """
    om = _as_mode(objective_mode, ObjectiveMode)
    cm = _as_mode(constraint_mode, ConstraintMode)
    _check_data(basis, data)
    if om is ObjectiveMode.SOS_RIE and basis.jacobians_depend_on_u:
        raise ModeConflict("SosRIE needs f and g affine in u")
    if cm is ConstraintMode.STATE_AFFINE and basis.kind is ModelKind.POLYNOMIAL:
        raise ModeConflict("StateAffine constraints need a model affine in x")
    if om is not ObjectiveMode.EE and cm in (ConstraintMode.WELL_POSED, ConstraintMode.NONE):
        raise ModeConflict(f"{om.value} needs a contraction constraint, not {cm.value}")
    if indices is None:
        indices = np.arange(data.T + 1)
    indices = np.asarray(indices, dtype=np.intp)

    b = ProblemBuilder()
    layout = Layout.allocate(b, basis)
    fp = FitProblem(None, layout, np.empty(0, dtype=np.intp), om, cm, mu)

    # constraints
    if cm is ConstraintMode.POINTWISE:
        add_pointwise_contraction(b, layout, data.x[indices], data.u[indices], mu)
    elif cm is ConstraintMode.STATE_AFFINE:
        add_state_affine_stability(b, layout, data.u[indices], mu)
    elif cm is ConstraintMode.SOS:
        fp.certificates.append(contraction_sos(b, layout, mu))
    elif cm is ConstraintMode.WELL_POSED:
        fp.certificates.append(wellposedness_sos(b, layout, mu))
    if cm in (ConstraintMode.WELL_POSED, ConstraintMode.NONE):
        # P only enters through contraction blocks; pin it otherwise
        b.add_equalities(layout.P_affine - Affine.constant(np.eye(basis.n)))

    # objective
    if om is ObjectiveMode.EE:
        J, r0 = equation_error_maps(basis, data)
        fp.epigraph = _add_norm_epigraph(b, layout, J, r0, rho_reg)
    else:
        s = b.add_vars(indices.size, "s")
        fp.slack = s
        b.add_cost(s, 1.0)
        for k, t in enumerate(indices):
            if om is ObjectiveMode.LOCAL_RIE:
                b.add_lmi(local_rie_block(layout, data, int(t), s[k]), f"rie[{t}]")
            else:
                fp.certificates.append(rie_sos_blocks(b, layout, data, int(t), s[k]))
        if rho_reg > 0:
            _add_regularizer(b, layout, rho_reg)
    fp.problem = b.build()
    return fp


def _add_regularizer(builder, layout, rho):
    """Epigraph ``r >= rho (tr P + |theta|^2)`` with unit cost on ``r``.

    Keeping the small weight inside the LMI rather than in the cost vector
    stops it from drowning in the solver's dual-feasibility tolerance.
    """
    q = layout.theta.size
    r = builder.add_vars(1, "reg")
    th = Affine.linear(layout.theta, np.sqrt(rho) * np.eye(q)[:, :, None]).reshape(q, 1)
    trP = layout.P_affine.coef.trace(axis1=1, axis2=2)[1:]
    corner = Affine.linear(np.append(layout.P, r), np.append(-rho * trP, 1.0)[:, None, None])
    builder.add_lmi(block([[corner, th.T], [th, np.eye(q)]]), "regularizer")
    builder.add_cost(r, 1.0)


def _add_norm_epigraph(builder, layout, J, r0, rho):
    """Minimize ``|J theta - r0|^2 + rho |theta|^2`` via its square root.

    The residual is compressed to ``q + 1`` rows with a QR factorization so the
    arrow LMI ``[[t, r'], [r, t I]] >= 0`` stays small.
    """
    q = J.shape[1]
    Jr = np.vstack([J, np.sqrt(rho) * np.eye(q)]) if rho > 0 else J
    rr = np.concatenate([r0, np.zeros(q)]) if rho > 0 else r0
    R = np.linalg.qr(np.column_stack([Jr, rr]), mode="r")
    k = R.shape[0]
    res = Affine.linear(layout.theta, R[:, :q].T[:, :, None], const=-R[:, q:q + 1]).reshape(k, 1)
    t = builder.add_vars(1, "ee_norm")
    tt = Affine.linear(t, np.ones((1, 1, 1)))
    tI = Affine.linear(t, np.eye(k)[None])
    builder.add_lmi(block([[tt, res.T], [res, tI]]), "ee_epigraph")
    builder.add_cost(t, 1.0)
    return t
