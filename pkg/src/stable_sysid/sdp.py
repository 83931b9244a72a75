"""Semidefinite programs in LMI form and a primal-dual interior-point solver.

Problems are stated as::

    minimize    c' z
    subject to  B_j(z) = B_j0 + sum_i z_i B_ji  >= 0     (each block j)
                A z = b

Equalities are eliminated first (:func:`preprocess`), leaving an LMI problem
in free variables ``y``. Its conic dual is::

    maximize    -<F0, X>    subject to  <F_i, X> = c_i,  X >= 0

and the solver follows the central path of this pair with Nesterov-Todd
scaling and Mehrotra predictor-corrector steps from an infeasible start.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .affine import Affine
from .linalg import symmetrize

log = logging.getLogger(__name__)


class InconsistentEqualities(ValueError):
    pass


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class LmiBlock:
    """``const + sum_k z[var_idx[k]] * coefs[k]`` (all symmetric)."""

    const: np.ndarray
    var_idx: np.ndarray
    coefs: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.const = np.atleast_2d(np.asarray(self.const, dtype=float))
        self.var_idx = np.asarray(self.var_idx, dtype=np.intp).ravel()
        k = self.const.shape[0]
        self.coefs = np.asarray(self.coefs, dtype=float).reshape(self.var_idx.size, k, k)
        for M in (self.const[None], self.coefs):
            if M.size and np.abs(M - np.swapaxes(M, 1, 2)).max() > 1e-12 * max(1.0, np.abs(M).max()):
                raise ValueError(f"LMI block {self.label!r} has non-symmetric coefficients")

    @classmethod
    def from_affine(cls, aff, label="", tol=0.0):
        if aff.ndim != 2 or aff.shape[0] != aff.shape[1]:
            raise ValueError(f"LMI block must be square, got {aff.shape}")
        coef = 0.5 * (aff.coef + np.swapaxes(aff.coef, 1, 2))
        aff = Affine(aff.vars, coef).pruned(tol)
        return cls(aff.coef[0], aff.vars, aff.coef[1:], label)

    @property
    def dim(self):
        return self.const.shape[0]

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return self.const + np.tensordot(z[self.var_idx], self.coefs, axes=(0, 0))


@dataclass
class SdpProblem:
    num_vars: int
    c: np.ndarray
    blocks: list
    A: np.ndarray = None
    b: np.ndarray = None
    names: list = None
    obj_const: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(self.num_vars)
        if self.A is None:
            self.A = np.zeros((0, self.num_vars))
            self.b = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim != 2:
            self.A = self.A.reshape(-1, self.num_vars)
        self.b = np.asarray(self.b, dtype=float).reshape(self.A.shape[0])
        if self.names is None:
            self.names = [f"z{i}" for i in range(self.num_vars)]
        for blk in self.blocks:
            if blk.var_idx.size and (blk.var_idx.max() >= self.num_vars or blk.var_idx.min() < 0):
                raise ValueError(f"block {blk.label!r} references a variable out of range")

    def objective(self, z):
        return float(self.c @ z + self.obj_const)


class ProblemBuilder:
    """Incremental construction of an :class:`SdpProblem`."""

    def __init__(self):
        self.names = []
        self.blocks = []
        self.eq_rows = []
        self.eq_rhs = []
        self.cost = {}
        self.obj_const = 0.0

    @property
    def num_vars(self):
        return len(self.names)

    def add_vars(self, count, name="v"):
        start = len(self.names)
        self.names.extend(f"{name}[{i}]" for i in range(count))
        return np.arange(start, start + count)

    def add_lmi(self, aff, label=""):
        """Require the square affine matrix ``aff`` to be positive semidefinite."""
        blk = LmiBlock.from_affine(aff, label)
        self.blocks.append(blk)
        return blk

    def add_equalities(self, aff):
        """Require every entry of the affine array ``aff`` to vanish."""
        flat = aff.reshape(-1)
        rows = np.zeros((flat.shape[0], self.num_vars))
        rows[:, flat.vars] = flat.coef[1:].T
        self.eq_rows.append(rows)
        self.eq_rhs.append(-flat.coef[0])

    def add_cost(self, vars, weights):
        for v, w in zip(np.atleast_1d(vars), np.broadcast_to(weights, np.shape(np.atleast_1d(vars)))):
            self.cost[int(v)] = self.cost.get(int(v), 0.0) + float(w)

    def build(self):
        N = self.num_vars
        c = np.zeros(N)
        for v, w in self.cost.items():
            c[v] = w
        if self.eq_rows:
            A = np.vstack([np.pad(r, ((0, 0), (0, N - r.shape[1]))) for r in self.eq_rows])
            b = np.concatenate(self.eq_rhs)
        else:
            A, b = None, None
        return SdpProblem(N, c, list(self.blocks), A, b, list(self.names), self.obj_const)


# ---------------------------------------------------------------------------
# equality elimination


@dataclass
class Reduction:
    """``z = z0 + N y`` parametrizes the solutions of ``A z = b``."""

    z0: np.ndarray
    N: sp.csr_matrix
    problem: SdpProblem

    def recover(self, y):
        return self.z0 + self.N @ np.asarray(y, dtype=float)


def preprocess(problem, tol=1e-11):
    """Eliminate linear equalities by column-pivoted QR substitution.

    Variables that appear in few LMI blocks are preferred as eliminated
    (basic) variables, so blocks that never touch them keep their sparsity.
    """
    N = problem.num_vars
    A, b = problem.A, problem.b
    if A.shape[0] == 0:
        red = Reduction(np.zeros(N), sp.identity(N, format="csr"), problem)
        return red
    row_scale = np.linalg.norm(A, axis=1)
    keep = row_scale > 0
    if np.any(np.abs(b[~keep]) > tol):
        raise InconsistentEqualities("zero equality row with nonzero right-hand side")
    A, b = A[keep] / row_scale[keep, None], b[keep] / row_scale[keep]
    counts = np.zeros(N)
    for blk in problem.blocks:
        counts[blk.var_idx] += 1
    weights = 1.0 / (1.0 + counts) ** 2
    weights[problem.c != 0] *= 1e-3
    _, R, piv = scipy.linalg.qr(A * weights, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0) * 1e3)) if diag.size else 0
    basic = np.sort(piv[:rank])
    free = np.setdiff1d(np.arange(N), basic)
    AB, AN = A[:, basic], A[:, free]
    QB, RB = np.linalg.qr(AB)
    zB = scipy.linalg.solve_triangular(RB, QB.T @ b)
    z0 = np.zeros(N)
    z0[basic] = zB
    resid = np.linalg.norm(A @ z0 - b)
    if resid > 1e-8 * (1.0 + np.linalg.norm(b)):
        raise InconsistentEqualities(f"equalities are inconsistent (residual {resid:.2e})")
    NB = -scipy.linalg.solve_triangular(RB, QB.T @ AN)
    NB[np.abs(NB) < 1e-14] = 0.0
    rows = np.concatenate([free, np.repeat(basic, free.size)])
    cols = np.concatenate([np.arange(free.size), np.tile(np.arange(free.size), basic.size)])
    vals = np.concatenate([np.ones(free.size), NB.ravel()])
    Nmat = sp.csr_matrix((vals, (rows, cols)), shape=(N, free.size))
    Nmat.eliminate_zeros()

    blocks = []
    for blk in problem.blocks:
        const = blk.const + np.tensordot(z0[blk.var_idx], blk.coefs, axes=(0, 0))
        sub = Nmat[blk.var_idx]
        sub.eliminate_zeros()
        cols_used = np.unique(sub.indices)
        dense = sub[:, cols_used].toarray()
        coefs = np.tensordot(dense.T, blk.coefs, axes=(1, 0))
        blocks.append(LmiBlock(const, cols_used, coefs, blk.label))
    c_red = Nmat.T @ problem.c
    reduced = SdpProblem(
        free.size, c_red, blocks, names=[problem.names[i] for i in free],
        obj_const=problem.obj_const + float(problem.c @ z0),
    )
    return Reduction(z0, Nmat, reduced)


# ---------------------------------------------------------------------------
# solver


@dataclass
class SolverOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 200
    step_fraction: float = 0.98
    infeas_tol: float = 1e-8
    verbose: bool = False


@dataclass
class SdpSolution:
    z: np.ndarray
    objective: float
    status: Status
    iterations: int
    block_min_eig: np.ndarray
    gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    history: list = field(default_factory=list)
    message: str = ""
    dual_blocks: list = None

    @property
    def ok(self):
        return self.status is Status.OPTIMAL


class _Group:
    """Blocks of one dimension stacked for batched linear algebra."""

    def __init__(self, blocks, num_vars):
        self.members = blocks
        k = blocks[0].dim
        nb = len(blocks)
        nvmax = max(max(b.var_idx.size for b in blocks), 1)
        self.k = k
        self.F0 = np.stack([b.const for b in blocks])
        self.idx = np.full((nb, nvmax), num_vars, dtype=np.intp)
        self.F = np.zeros((nb, nvmax, k, k))
        for j, b in enumerate(blocks):
            self.idx[j, :b.var_idx.size] = b.var_idx
            self.F[j, :b.var_idx.size] = b.coefs

    def affine(self, y_ext):
        return self.F0 + np.einsum("bv,bvkl->bkl", y_ext[self.idx], self.F)

    def linear(self, dy_ext):
        return np.einsum("bv,bvkl->bkl", dy_ext[self.idx], self.F)

    def adjoint(self, X, out):
        np.add.at(out, self.idx, np.einsum("bvkl,bkl->bv", self.F, X))


def _sym(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _max_step(X, dX):
    """Largest ``a`` with ``X + a dX >= 0`` (``X`` positive definite, batched)."""
    L = np.linalg.cholesky(X)
    Linv = np.linalg.inv(L)
    lam = np.linalg.eigvalsh(_sym(Linv @ dX @ np.swapaxes(Linv, -1, -2)))
    lo = lam[..., 0].min()
    return np.inf if lo >= 0 else -1.0 / lo


def solve(problem, opts=None, **kwargs):
    """Solve an :class:`SdpProblem`; failures are reported in ``status``."""
    opts = opts or SolverOptions(**kwargs)
    try:
        red = preprocess(problem)
    except InconsistentEqualities as err:
        return SdpSolution(np.zeros(problem.num_vars), np.nan, Status.INFEASIBLE, 0,
                           np.array([]), np.nan, np.inf, np.nan, message=str(err))
    sol = _solve_reduced(red.problem, opts)
    z = red.recover(sol.z)
    cert = certify(problem, z)
    sol.block_min_eig = cert.block_min_eig
    sol.z = z
    sol.objective = problem.objective(z)
    return sol


def _solve_reduced(prob, opts):
    N = prob.num_vars
    c = prob.c
    if not prob.blocks:
        if np.any(c != 0):
            return SdpSolution(np.zeros(N), -np.inf, Status.INFEASIBLE, 0, np.array([]), np.nan,
                               0.0, np.inf, message="unbounded: no constraints")
        return SdpSolution(np.zeros(N), prob.obj_const, Status.OPTIMAL, 0, np.array([]), 0.0, 0.0, 0.0)

    if N == 0:
        eig = min(np.linalg.eigvalsh(blk.const)[0] for blk in prob.blocks)
        status = Status.OPTIMAL if eig >= -opts.feas_tol else Status.INFEASIBLE
        return SdpSolution(np.zeros(0), prob.obj_const, status, 0, np.array([]), 0.0,
                           max(0.0, -eig), 0.0, message="" if eig >= -opts.feas_tol else "fixed point infeasible")

    used = np.zeros(N, dtype=bool)
    for blk in prob.blocks:
        used[blk.var_idx[np.any(blk.coefs.reshape(blk.var_idx.size, -1) != 0, axis=1)]] = True
    if np.any(c[~used] != 0):
        return SdpSolution(np.zeros(N), -np.inf, Status.INFEASIBLE, 0, np.array([]), np.nan,
                           0.0, np.inf, message="unbounded: cost on an unconstrained variable")

    by_dim = {}
    order = []
    for j, blk in enumerate(prob.blocks):
        by_dim.setdefault(blk.dim, []).append(j)
    groups = []
    for k in sorted(by_dim):
        members = [prob.blocks[j] for j in by_dim[k]]
        groups.append(_Group(members, N))
        order.extend(by_dim[k])
    ntot = sum(g.k * len(g.members) for g in groups)

    normF0 = np.sqrt(sum(np.sum(g.F0 ** 2) for g in groups))
    normc = np.linalg.norm(c)
    maxF = max(np.sqrt(np.sum(g.F ** 2, axis=(2, 3))).max() for g in groups)

    X, S = [], []
    for g in groups:
        k = g.k
        xi = max(10.0, np.sqrt(k), k * (1.0 + normc) / (1.0 + maxF))
        eta = max(10.0, np.sqrt(k), normF0, maxF)
        X.append(np.broadcast_to(xi * np.eye(k), g.F0.shape).copy())
        S.append(np.broadcast_to(eta * np.eye(k), g.F0.shape).copy())
    y = np.zeros(N)
    y_ext = np.zeros(N + 1)

    def adjoint(Xs):
        out = np.zeros(N + 1)
        for g, Xg in zip(groups, Xs):
            g.adjoint(Xg, out)
        return out[:N]

    def inner(As, Bs):
        return float(sum(np.sum(a * b) for a, b in zip(As, Bs)))

    history = []
    status = Status.MAX_ITER
    message = ""
    it = 0
    gap = pinf = dinf = np.inf
    for it in range(opts.max_iter + 1):
        y_ext[:N] = y
        Fy = [g.affine(y_ext) for g in groups]
        Rd = [f - s for f, s in zip(Fy, S)]
        rp = c - adjoint(X)
        pobj = float(c @ y)
        dobj = -inner([g.F0 for g in groups], X)
        mu = inner(X, S) / ntot
        pinf = np.sqrt(sum(np.sum(r ** 2) for r in Rd)) / (1.0 + normF0)
        dinf = np.linalg.norm(rp) / (1.0 + normc)
        gap = abs(pobj - dobj) / (1.0 + max(abs(pobj), abs(dobj)))
        min_eig_true = min(np.linalg.eigvalsh(f)[:, 0].min() for f in Fy)
        history.append(dict(iter=it, pobj=pobj + prob.obj_const, dobj=dobj + prob.obj_const,
                            mu=mu, pinf=pinf, dinf=dinf, gap=gap))
        if opts.verbose:
            log.info("%3d pobj %.8e dobj %.8e mu %.2e pinf %.2e dinf %.2e", it, pobj, dobj, mu, pinf, dinf)
        if (pinf <= opts.feas_tol and dinf <= opts.feas_tol and gap <= opts.gap_tol
                and min_eig_true >= -opts.feas_tol):
            status = Status.OPTIMAL
            break
        # Farkas-type certificates
        trF0X = -dobj
        if trF0X < 0:
            ax = np.linalg.norm(adjoint(X)) / abs(trF0X)
            if ax <= opts.infeas_tol * (1.0 + maxF) and dinf > opts.feas_tol:
                status, message = Status.INFEASIBLE, "primal infeasible (LMI cannot be satisfied)"
                break
        if pobj < 0 and pinf > 0:
            ydir_eig = min(np.linalg.eigvalsh(g.linear(np.append(y, 0.0)))[:, 0].min() for g in groups)
            if ydir_eig / abs(pobj) >= -opts.infeas_tol and abs(pobj) > 1e10 * (1.0 + normc):
                status, message = Status.INFEASIBLE, "dual infeasible (objective unbounded)"
                break
        if it == opts.max_iter:
            break

        try:
            scal = []
            Mmat = np.zeros((N + 1, N + 1))
            for g, Sg, Xg in zip(groups, S, X):
                L = np.linalg.cholesky(Sg)
                Linv = np.linalg.inv(L)
                om, U = np.linalg.eigh(_sym(np.swapaxes(L, -1, -2) @ Xg @ L))
                lam = np.sqrt(np.maximum(om, 1e-300))
                G = np.swapaxes(Linv, -1, -2) @ U * np.sqrt(lam)[:, None, :]
                Ginv = (np.swapaxes(U, -1, -2) @ np.swapaxes(L, -1, -2)) / np.sqrt(lam)[:, :, None]
                W = G @ np.swapaxes(G, -1, -2)
                WFW = W[:, None] @ g.F @ W[:, None]
                Mb = np.einsum("bikl,bjkl->bij", g.F, WFW)
                np.add.at(Mmat, (g.idx[:, :, None], g.idx[:, None, :]), Mb)
                scal.append((G, Ginv, W, lam))
            Mmat = Mmat[:N, :N]
            Mmat = _sym(Mmat)
            # Jacobi scaling, then a tiny ridge; refinement below removes its bias
            dsc = np.sqrt(np.diag(Mmat))
            dsc[dsc <= 0] = 1.0
            cho = scipy.linalg.cho_factor(Mmat / np.outer(dsc, dsc) + 1e-14 * np.eye(N))
        except (np.linalg.LinAlgError, ValueError) as err:
            status, message = Status.NUMERICAL_FAILURE, f"factorization failed: {err}"
            break

        def direction(D_list):
            # rhs_i = <F_i, G D G' - W Rd W> - (c_i - <F_i, X>)
            T = [G @ D @ np.swapaxes(G, -1, -2) - W @ R @ W for (G, _, W, _), D, R in zip(scal, D_list, Rd)]
            rhs = adjoint(T) - rp
            dy = scipy.linalg.cho_solve(cho, rhs / dsc) / dsc
            for _ in range(2):
                dy += scipy.linalg.cho_solve(cho, (rhs - Mmat @ dy) / dsc) / dsc
            dy_ext = np.append(dy, 0.0)
            dS = [g.linear(dy_ext) + R for g, R in zip(groups, Rd)]
            dX = [_sym(G @ D @ np.swapaxes(G, -1, -2) - W @ s @ W) for (G, _, W, _), D, s in zip(scal, D_list, dS)]
            return dy, dS, dX

        def steps(dS, dX):
            ax = min(_max_step(Xg, d) for Xg, d in zip(X, dX))
            as_ = min(_max_step(Sg, d) for Sg, d in zip(S, dS))
            return ax, as_

        try:
            X, S, y = _predictor_corrector(X, S, y, mu, ntot, scal, direction, steps, inner, opts)
        except np.linalg.LinAlgError as err:
            status, message = Status.NUMERICAL_FAILURE, f"step computation failed: {err}"
            break

    # dual blocks back in original order
    dual = [None] * len(prob.blocks)
    pos = 0
    for g, Xg in zip(groups, X):
        for j in range(len(g.members)):
            dual[order[pos]] = Xg[j]
            pos += 1
    return SdpSolution(
        y, float(c @ y) + prob.obj_const, status, it, np.array([]), gap, pinf, dinf,
        history=history, message=message, dual_blocks=dual,
    )


def _predictor_corrector(X, S, y, mu, ntot, scal, direction, steps, inner, opts):
    # predictor
    D_aff = [-np.eye(len(lam[0]))[None] * lam[:, :, None] for (_, _, _, lam) in scal]
    dy_a, dS_a, dX_a = direction(D_aff)
    ax, as_ = steps(dS_a, dX_a)
    ax = as_ = min(1.0, ax, as_)
    mu_aff = inner([Xg + ax * d for Xg, d in zip(X, dX_a)], [Sg + as_ * d for Sg, d in zip(S, dS_a)]) / ntot
    sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))

    # corrector
    D_cor = []
    for (G, Ginv, W, lam), dXa, dSa in zip(scal, dX_a, dS_a):
        k = lam.shape[1]
        Xh = Ginv @ dXa @ np.swapaxes(Ginv, -1, -2)
        Sh = np.swapaxes(G, -1, -2) @ dSa @ G
        rhs = sigma * mu * np.eye(k)[None] - lam[:, :, None] * np.eye(k)[None] * lam[:, None, :]
        rhs = rhs - _sym(Xh @ Sh)
        D_cor.append(2.0 * rhs / (lam[:, :, None] + lam[:, None, :]))
    dy, dS, dX = direction(D_cor)
    ax, as_ = steps(dS, dX)
    # a common step keeps both residuals shrinking with the gap
    a = min(1.0, opts.step_fraction * min(ax, as_))
    ax = as_ = a
    X = [_sym(Xg + ax * d) for Xg, d in zip(X, dX)]
    S = [_sym(Sg + as_ * d) for Sg, d in zip(S, dS)]
    return X, S, y + as_ * dy


# ---------------------------------------------------------------------------
# a-posteriori checks and dump/restore


@dataclass
class Certificate:
    block_min_eig: np.ndarray
    equality_residual: np.ndarray
    labels: list

    @property
    def worst_min_eig(self):
        return float(self.block_min_eig.min()) if self.block_min_eig.size else np.inf

    @property
    def max_equality_residual(self):
        return float(np.abs(self.equality_residual).max()) if self.equality_residual.size else 0.0


def certify(problem, z):
    """Minimum eigenvalue of every block and equality residuals at ``z``."""
    z = np.asarray(z, dtype=float)
    eigs = np.array([np.linalg.eigvalsh(symmetrize(b.value(z)))[0] for b in problem.blocks])
    resid = problem.A @ z - problem.b if problem.A.shape[0] else np.zeros(0)
    return Certificate(eigs, resid, [b.label for b in problem.blocks])


def dumps_problem(problem):
    """Text dump: header, objective, sparse lower-triangle triplets per block."""
    f = lambda v: f"{v:.17g}"
    out = ["# stable_sysid SDP", f"num_vars {problem.num_vars}",
           f"num_blocks {len(problem.blocks)}", f"num_equalities {problem.A.shape[0]}",
           f"obj_const {f(problem.obj_const)}"]
    nz = np.flatnonzero(problem.c)
    out.append("c " + " ".join(f"{i}:{f(problem.c[i])}" for i in nz))
    for j, blk in enumerate(problem.blocks):
        out.append(f"block {j} dim {blk.dim} label {blk.label.replace(' ', '_') or '-'}")
        mats = [(-1, blk.const)] + list(zip(blk.var_idx, blk.coefs))
        for v, Mv in mats:
            r, cidx = np.nonzero(np.tril(Mv))
            for a, bb in zip(r, cidx):
                out.append(f"{v} {a} {bb} {f(Mv[a, bb])}")
    for r in range(problem.A.shape[0]):
        nzr = np.flatnonzero(problem.A[r])
        out.append(f"eq {f(problem.b[r])} " + " ".join(f"{i}:{f(problem.A[r, i])}" for i in nzr))
    return "\n".join(out) + "\n"


def loads_problem(text):
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    head = {}
    i = 0
    while i < len(lines) and lines[i].split()[0] in ("num_vars", "num_blocks", "num_equalities", "obj_const"):
        k, v = lines[i].split()
        head[k] = v
        i += 1
    N = int(head["num_vars"])
    c = np.zeros(N)
    assert lines[i].startswith("c")
    for tok in lines[i].split()[1:]:
        a, v = tok.split(":")
        c[int(a)] = float(v)
    i += 1
    blocks, A, b = [], [], []
    cur = None
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] == "block":
            dim = int(parts[3])
            label = parts[5] if parts[5] != "-" else ""
            cur = {"dim": dim, "label": label, "mats": {}}
            blocks.append(cur)
        elif parts[0] == "eq":
            row = np.zeros(N)
            for tok in parts[2:]:
                a, v = tok.split(":")
                row[int(a)] = float(v)
            A.append(row)
            b.append(float(parts[1]))
        else:
            v, a, bb, val = int(parts[0]), int(parts[1]), int(parts[2]), float(parts[3])
            M = cur["mats"].setdefault(v, np.zeros((cur["dim"], cur["dim"])))
            M[a, bb] = val
            M[bb, a] = val
        i += 1
    out_blocks = []
    for blk in blocks:
        const = blk["mats"].pop(-1, np.zeros((blk["dim"], blk["dim"])))
        vars = sorted(blk["mats"])
        coefs = np.array([blk["mats"][v] for v in vars]).reshape(len(vars), blk["dim"], blk["dim"])
        out_blocks.append(LmiBlock(const, vars, coefs, blk["label"]))
    return SdpProblem(N, c, out_blocks, np.array(A).reshape(-1, N) if A else None,
                      np.array(b) if b else None, obj_const=float(head.get("obj_const", 0.0)))
