"""Contraction and well-posedness constraints as LMI blocks.

The contraction condition

    F'P^{-1}F + P - E - E' + G'G <= -mu I

is imposed in Schur-complement form

    [[E + E' - P - mu I, F', G'],
     [F,                 P,  0 ],
     [G,                 0,  I ]]  >= 0

which is affine in ``(theta, P)``. It can be enforced at sample points
(pointwise), once for state-affine models, or for all ``(x, u)`` through a
matrix sum-of-squares certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .affine import Affine, block
from .linalg import vech, vech_basis
from .model import ModelKind, ModelParameters, jac_E, jac_F, jac_G, theta_jacobians
from .sdp import ProblemBuilder, Status, solve
from .sos import PolyMatrix, add_matrix_sos, block_poly, lift_to, model_polys


class NotStateAffine(ValueError):
    pass


@dataclass
class Layout:
    """Where ``theta`` and ``vech(P)`` live in the SDP decision vector."""

    basis: object
    theta: np.ndarray
    P: np.ndarray

    @classmethod
    def allocate(cls, builder, basis, theta=True):
        th = builder.add_vars(basis.num_params, "theta") if theta else np.empty(0, dtype=np.intp)
        P = builder.add_vars(basis.n * (basis.n + 1) // 2, "P")
        return cls(basis, th, P)

    @property
    def P_affine(self):
        return Affine.linear(self.P, vech_basis(self.basis.n))

    def theta_affine(self, J):
        """``J @ theta`` for a map ``J`` with trailing ``num_params`` axis."""
        if self.theta.size == 0:
            raise ValueError("theta is not a decision variable in this layout")
        return Affine.from_matrix(J, var_offset=int(self.theta[0]))

    def pack(self, params, size):
        z = np.zeros(size)
        z[self.theta] = params.theta
        z[self.P] = vech(params.P)
        return z


def schur_contraction(E, F, G, P, mu):
    """Schur-form contraction block from affine (or constant) pieces."""
    n = P.shape[0]
    p = G.shape[0]
    top = E + E.T - P - mu * np.eye(n)
    return block([[top, F.T, G.T], [F, P, None], [G, None, np.eye(p)]])


def schur_contraction_numeric(E, F, G, P, mu):
    """Batched numeric Schur block; leading axes are broadcast."""
    E, F, G = np.asarray(E), np.asarray(F), np.asarray(G)
    lead = E.shape[:-2]
    n, p = E.shape[-1], G.shape[-2]
    k = 2 * n + p
    B = np.zeros(lead + (k, k))
    B[..., :n, :n] = E + np.swapaxes(E, -1, -2) - P - mu * np.eye(n)
    B[..., :n, n:2 * n] = np.swapaxes(F, -1, -2)
    B[..., n:2 * n, :n] = F
    B[..., :n, 2 * n:] = np.swapaxes(G, -1, -2)
    B[..., 2 * n:, :n] = G
    B[..., n:2 * n, n:2 * n] = P
    B[..., 2 * n:, 2 * n:] = np.eye(p)
    return B


def contraction_block(layout, x, u, mu):
    """Pointwise contraction LMI at ``(x, u)`` as an affine matrix."""
    maps = theta_jacobians(layout.basis, x, u)
    E = layout.theta_affine(maps.E)
    F = layout.theta_affine(maps.F)
    G = layout.theta_affine(maps.G)
    return schur_contraction(E, F, G, layout.P_affine, mu)


def state_affine_stability_block(layout, u, mu):
    """The single stability LMI of a model that is affine in the state.

    For such models ``E``, ``F`` and ``G`` do not depend on ``x``, so the
    incremental condition for all state pairs is one LMI per input value.
    """
    basis = layout.basis
    if basis.kind is ModelKind.POLYNOMIAL:
        raise NotStateAffine("basis has monomials of degree > 1 in x")
    return contraction_block(layout, np.zeros(basis.n), u, mu)


def add_pointwise_contraction(builder, layout, xs, us, mu):
    for t, (x, u) in enumerate(zip(xs, us)):
        builder.add_lmi(contraction_block(layout, x, u, mu), f"contraction[{t}]")


def add_state_affine_stability(builder, layout, us, mu):
    basis = layout.basis
    if basis.kind is ModelKind.POLYNOMIAL:
        raise NotStateAffine("basis has monomials of degree > 1 in x")
    if not basis.jacobians_depend_on_u:
        us = [np.zeros(basis.m)]
    for t, u in enumerate(us):
        builder.add_lmi(state_affine_stability_block(layout, u, mu), f"stability[{t}]")


def contraction_poly(layout, mu):
    """Schur contraction block as a polynomial matrix.

    The polynomial variables are ``x`` alone when ``F`` and ``G`` do not
    depend on ``u``, and ``(x, u)`` otherwise.
    """
    basis = layout.basis
    polys = model_polys(basis, int(layout.theta[0]))
    n, m, p = basis.n, basis.m, basis.p
    if basis.jacobians_depend_on_u:
        nv = n + m
        E = lift_to(polys["E"], nv)
        F, G = polys["F"], polys["G"]
    else:
        nv = n
        E = polys["E"]
        F = polys["F"].substitute(np.zeros(n + m), range(n))
        G = polys["G"].substitute(np.zeros(n + m), range(n))
    P = PolyMatrix.constant(nv, layout.P_affine)
    top = E + E.T - P - PolyMatrix.constant(nv, mu * np.eye(n))
    return block_poly([[top, F.T, G.T], [F, P, None], [G, None, PolyMatrix.constant(nv, np.eye(p))]])


def contraction_sos(builder, layout, mu):
    """Certify the contraction LMI for every ``(x, u)`` by matrix SOS."""
    return add_matrix_sos(builder, contraction_poly(layout, mu), "contraction_sos")


def wellposedness_sos(builder, layout, mu):
    """Certify ``E(x) + E(x)' - 2 mu I >= 0`` for all ``x`` by matrix SOS."""
    basis = layout.basis
    E = model_polys(basis, int(layout.theta[0]))["E"]
    M = E + E.T - PolyMatrix.constant(basis.n, 2.0 * mu * np.eye(basis.n))
    return add_matrix_sos(builder, M, "wellposedness_sos")


def check_sos(params, which="contraction", solver_opts=None):
    """Feasibility of the SOS certificate for a fixed model.

    Returns ``(feasible, solution)``.
    """
    basis = params.basis
    b = ProblemBuilder()
    layout = Layout.allocate(b, basis)
    b.add_equalities(Affine.linear(layout.theta, np.eye(basis.num_params), const=-params.theta))
    if which == "contraction":
        b.add_equalities(Affine.linear(layout.P, np.eye(layout.P.size), const=-vech(params.P)))
        contraction_sos(b, layout, params.mu)
    elif which == "wellposedness":
        b.add_equalities(Affine.linear(layout.P, np.eye(layout.P.size), const=-vech(np.eye(basis.n))))
        wellposedness_sos(b, layout, params.mu)
    else:
        raise ValueError(which)
    sol = solve(b.build(), **(solver_opts or {}))
    return sol.status is Status.OPTIMAL, sol


# ---------------------------------------------------------------------------
# post-hoc validation


@dataclass
class CertificateReport:
    worst_min_eig: float
    worst_point: np.ndarray
    num_samples: int
    threshold: float

    @property
    def passed(self):
        return self.worst_min_eig >= self.threshold

    def to_dict(self):
        return dict(worst_min_eig=self.worst_min_eig, worst_point=self.worst_point.tolist(),
                    num_samples=self.num_samples, threshold=self.threshold, passed=bool(self.passed))


def contraction_min_eig(params, x, u=None):
    """Smallest eigenvalue of the Schur contraction block at each point."""
    x = np.atleast_2d(x)
    if u is None:
        u = np.zeros((x.shape[0], params.basis.m))
    u = np.asarray(u, dtype=float).reshape(x.shape[0], params.basis.m)
    E = jac_E(params, x).reshape(-1, params.basis.n, params.basis.n)
    F = jac_F(params, x, u).reshape(-1, params.basis.n, params.basis.n)
    G = jac_G(params, x, u).reshape(-1, params.basis.p, params.basis.n)
    B = schur_contraction_numeric(E, F, G, params.P, params.mu)
    return np.linalg.eigvalsh(B)[:, 0]


def validate_certificate(params, sample_count, box, data_points=None, seed=0, threshold=-1e-7):
    """Worst contraction-block eigenvalue over data and Sobol samples in a box.

    ``box`` is ``(lo, hi)`` over the concatenated ``(x, u)`` coordinates. At
    least ``sample_count`` points are checked: the Sobol part is rounded up
    to a power of two.
    """
    basis = params.basis
    lo, hi = (np.asarray(b, dtype=float).ravel() for b in box)
    d = basis.n + basis.m
    if lo.size != d or hi.size != d:
        raise ValueError(f"box must have {d} coordinates (x then u)")
    pts = []
    if data_points is not None:
        pts.append(np.asarray(data_points, dtype=float).reshape(-1, d))
    remaining = sample_count - (len(pts[0]) if pts else 0)
    if remaining > 0:
        # a power-of-two count keeps the Sobol balance properties
        sobol = qmc.Sobol(d, scramble=True, seed=seed)
        unit = sobol.random_base2(int(np.ceil(np.log2(remaining))))
        pts.append(lo + (hi - lo) * unit)
    pts = np.vstack(pts)
    eigs = contraction_min_eig(params, pts[:, :basis.n], pts[:, basis.n:])
    worst = int(np.argmin(eigs))
    return CertificateReport(float(eigs[worst]), pts[worst], len(pts), threshold)


def find_metric(params, xs, us, solver_opts=None):
    """Largest contraction margin over ``P`` with ``theta`` held fixed.

    Returns ``(P, margin)``; ``margin >= mu`` means the data-point LMIs hold
    with the model's own ``mu``. ``margin`` is ``-inf`` if the solve fails.
    """
    basis = params.basis
    b = ProblemBuilder()
    Pv = b.add_vars(basis.n * (basis.n + 1) // 2, "P")
    gam = b.add_vars(1, "margin")
    Paff = Affine.linear(Pv, vech_basis(basis.n))
    gI = Affine.linear(gam, np.eye(basis.n)[None])
    E = jac_E(params, xs).reshape(-1, basis.n, basis.n)
    F = jac_F(params, xs, us).reshape(-1, basis.n, basis.n)
    G = jac_G(params, xs, us).reshape(-1, basis.p, basis.n)
    for t in range(E.shape[0]):
        top = Affine.constant(E[t] + E[t].T) - Paff - gI
        b.add_lmi(block([[top, F[t].T, G[t].T], [F[t], Paff, None], [G[t], None, np.eye(basis.p)]]),
                  f"metric[{t}]")
    # keep P bounded away from singular and the margin bounded
    b.add_lmi(Paff - Affine.constant(1e-6 * np.eye(basis.n)), "P_lower")
    b.add_cost(gam, -1.0)
    sol = solve(b.build(), **(solver_opts or {}))
    if sol.status is not Status.OPTIMAL:
        return None, -np.inf
    from .linalg import unvech
    return unvech(sol.z[Pv], basis.n), float(sol.z[gam[0]])


def rescale_for_metric(params, xs, us, margin=0.05, solver_opts=None):
    """Re-express the model so that a contraction metric exists on the data.

    Left-multiplying ``e`` and ``f`` by an invertible ``M`` leaves every
    trajectory unchanged, yet equation-error fits pick ``E`` at an arbitrary
    scale and orientation, and the LMI can fail for that reason alone. Since
    the LMI is jointly affine in ``(M, P)``, the smallest ``|M|_2`` with
    margin ``margin`` at every data point is found by one SDP, after ``E``
    is normalized to unit monotonicity on the data.

    Returns
    -------
    (ModelParameters, ndarray) or (None, None)
        The re-expressed model carrying the metric, and the applied ``M``.
    """
    basis = params.basis
    n = basis.n
    E = jac_E(params, xs).reshape(-1, n, n)
    omega = float(np.min(np.linalg.eigvalsh(E + np.swapaxes(E, 1, 2)))) / 2.0
    if not omega > 0:
        return None, None
    E = E / omega
    F = jac_F(params, xs, us).reshape(-1, n, n) / omega
    G = jac_G(params, xs, us).reshape(-1, basis.p, n)
    b = ProblemBuilder()
    Mv = b.add_vars(n * n, "M")
    Pv = b.add_vars(n * (n + 1) // 2, "P")
    tv = b.add_vars(1, "norm")
    M = Affine.linear(Mv, np.eye(n * n).reshape(n * n, n, n))
    Paff = Affine.linear(Pv, vech_basis(n))
    tI = Affine.linear(tv, np.eye(n)[None])
    delta = max(margin, 2.0 * params.mu)
    for k in range(E.shape[0]):
        ME = M @ E[k]
        MF = M @ F[k]
        top = ME + ME.T - Paff - Affine.constant(delta * np.eye(n))
        b.add_lmi(block([[top, MF.T, G[k].T], [MF, Paff, None], [G[k], None, np.eye(basis.p)]]),
                  f"rescaled_metric[{k}]")
    b.add_lmi(block([[tI, M], [M.T, tI]]), "norm(M)")
    b.add_lmi(Paff - Affine.constant(1e-6 * np.eye(n)), "P_lower")
    b.add_cost(tv, 1.0)
    sol = solve(b.build(), **(solver_opts or {}))
    if sol.status is not Status.OPTIMAL:
        return None, None
    from .linalg import unvech

    Mval = sol.z[Mv].reshape(n, n) / omega
    Te, Tf, Tg = basis.split(params.theta)
    out = ModelParameters(basis, basis.join(Mval @ Te, Mval @ Tf, Tg), P=unvech(sol.z[Pv], n), mu=params.mu)
    return out, Mval
