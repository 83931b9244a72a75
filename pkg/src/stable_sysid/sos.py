"""Polynomial matrices with decision-variable coefficients and matrix SOS.

A :class:`PolyMatrix` maps exponent tuples to :class:`Affine` matrices, so
each polynomial coefficient is affine in the SDP variables. A polynomial
matrix ``M(v)`` is certified positive semidefinite for all ``v`` by writing

    M(v) = Z(v)' Q Z(v),    Q >= 0,    Z = blockdiag(z_1(v), ..., z_k(v))

where ``z_i`` lists the monomials of degree at most half the degree of the
``i``-th diagonal entry. Coefficients of ``M`` that no product in ``Z'QZ``
can reach are constrained to vanish.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .affine import Affine, concatenate
from .model import DegreeOverflow, graded_lex_exponents

MAX_GRAM_DIM = 400


class PolyMatrix:
    def __init__(self, nvars, shape, terms=None):
        self.nvars = nvars
        self.shape = tuple(shape)
        self.terms = {}
        for k, v in (terms or {}).items():
            self.add_term(k, v)

    @classmethod
    def constant(cls, nvars, value):
        value = value if isinstance(value, Affine) else Affine.constant(value)
        return cls(nvars, value.shape, {(0,) * nvars: value})

    def add_term(self, exps, aff):
        exps = tuple(int(e) for e in exps)
        if not isinstance(aff, Affine):
            aff = Affine.constant(aff)
        if aff.shape != self.shape:
            raise ValueError(f"term shape {aff.shape} != {self.shape}")
        self.terms[exps] = self.terms[exps] + aff if exps in self.terms else aff

    def copy(self):
        return PolyMatrix(self.nvars, self.shape, dict(self.terms))

    def __add__(self, other):
        out = self.copy()
        for k, v in other.terms.items():
            out.add_term(k, v)
        return out

    def __neg__(self):
        return PolyMatrix(self.nvars, self.shape, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return PolyMatrix(self.nvars, self.shape, {k: v * s for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __rmatmul__(self, M):
        M = np.asarray(M, dtype=float)
        return PolyMatrix(self.nvars, (M.shape[0], self.shape[1]), {k: M @ v for k, v in self.terms.items()})

    def __matmul__(self, M):
        M = np.asarray(M, dtype=float)
        return PolyMatrix(self.nvars, (self.shape[0], M.shape[1]), {k: v @ M for k, v in self.terms.items()})

    @property
    def T(self):
        return PolyMatrix(self.nvars, self.shape[::-1], {k: v.T for k, v in self.terms.items()})

    def entry_degree(self, i, j):
        """Largest total degree with a structurally nonzero coefficient, -1 if none."""
        deg = -1
        for k, v in self.terms.items():
            sl = v.coef[:, i, j]
            if np.any(sl != 0):
                deg = max(deg, sum(k))
        return deg

    def substitute(self, values, keep):
        """Fix variables not in ``keep`` to ``values``; returns a poly in ``keep``."""
        keep = list(keep)
        out = PolyMatrix(len(keep), self.shape)
        values = np.asarray(values, dtype=float)
        for k, v in self.terms.items():
            w = 1.0
            for idx, e in enumerate(k):
                if idx not in keep and e:
                    w *= values[idx] ** e
            if w != 0:
                out.add_term(tuple(k[i] for i in keep), v * w)
        return out

    def evaluate(self, z, point):
        point = np.asarray(point, dtype=float)
        total = np.zeros(self.shape)
        for k, v in self.terms.items():
            total = total + v.value(z) * np.prod(point ** np.array(k))
        return total


def block_poly(rows):
    """Assemble a block :class:`PolyMatrix`; ``None`` means a zero block."""
    nvars = next(e.nvars for row in rows for e in row if e is not None)
    heights = [next(e.shape[0] for e in row if e is not None) for row in rows]
    widths = [next(row[j].shape[1] for row in rows if row[j] is not None) for j in range(len(rows[0]))]
    offs_r = np.concatenate([[0], np.cumsum(heights)])
    offs_c = np.concatenate([[0], np.cumsum(widths)])
    shape = (offs_r[-1], offs_c[-1])
    out = PolyMatrix(nvars, shape)
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            if e is None:
                continue
            for k, v in e.terms.items():
                pad = np.zeros((v.coef.shape[0],) + shape)
                pad[:, offs_r[i]:offs_r[i + 1], offs_c[j]:offs_c[j + 1]] = v.coef
                out.add_term(k, Affine(v.vars, pad))
    return out


# ---------------------------------------------------------------------------
# model functions as polynomials in (x, u)


def _model_poly(exps, rows, nb, offset, n, deriv):
    """Polynomial (in all columns of ``exps``) for ``Theta @ phi`` or its x-Jacobian."""
    nv = exps.shape[1]
    shape = (rows, n) if deriv else (rows, 1)
    out = PolyMatrix(nv, shape)
    for j, alpha in enumerate(exps):
        vars = offset + np.arange(rows) * nb + j
        if deriv:
            for c in range(n):
                if alpha[c] == 0:
                    continue
                gamma = alpha.copy()
                gamma[c] -= 1
                coefs = np.zeros((rows, rows, n))
                coefs[np.arange(rows), np.arange(rows), c] = alpha[c]
                out.add_term(gamma, Affine.linear(vars, coefs))
        else:
            coefs = np.zeros((rows, rows, 1))
            coefs[np.arange(rows), np.arange(rows), 0] = 1.0
            out.add_term(alpha, Affine.linear(vars, coefs))
    return out


def model_polys(basis, theta_offset=0):
    """``e, E`` in x and ``f, F, g, G`` in (x, u) as :class:`PolyMatrix`."""
    se, sf, sg = basis.slices
    n, p = basis.n, basis.p
    e = _model_poly(basis.e_exps, n, basis.ne, theta_offset + se.start, n, False)
    E = _model_poly(basis.e_exps, n, basis.ne, theta_offset + se.start, n, True)
    f = _model_poly(basis.f_exps, n, basis.nf, theta_offset + sf.start, n, False)
    F = _model_poly(basis.f_exps, n, basis.nf, theta_offset + sf.start, n, True)
    g = _model_poly(basis.g_exps, p, basis.ng, theta_offset + sg.start, n, False)
    G = _model_poly(basis.g_exps, p, basis.ng, theta_offset + sg.start, n, True)
    return dict(e=e, E=E, f=f, F=F, g=g, G=G)


def lift_to(poly, nvars):
    """Embed a polynomial in the first ``poly.nvars`` variables into ``nvars``."""
    pad = (0,) * (nvars - poly.nvars)
    return PolyMatrix(nvars, poly.shape, {k + pad: v for k, v in poly.terms.items()})


# ---------------------------------------------------------------------------
# matrix SOS


@dataclass
class SosCertificate:
    """Gram matrix data for one matrix-SOS constraint."""

    row_monomials: list
    gram_vars: np.ndarray
    gram_dim: int
    num_equalities: int
    label: str

    def gram(self, z):
        K = self.gram_dim
        Q = np.zeros((K, K))
        iu = np.tril_indices(K)
        Q[iu] = np.asarray(z)[self.gram_vars]
        return Q + np.tril(Q, -1).T


def add_matrix_sos(builder, M, label="sos"):
    """Constrain the symmetric polynomial matrix ``M`` to be SOS.

    Returns an :class:`SosCertificate`, or ``None`` when ``M`` is constant and
    was added as a plain LMI.
    """
    k = M.shape[0]
    if M.shape != (k, k):
        raise ValueError("matrix SOS needs a square polynomial matrix")
    nv = M.nvars
    diag_deg = [M.entry_degree(i, i) for i in range(k)]
    max_deg = max(max(M.entry_degree(i, j) for j in range(k)) for i in range(k))
    zero = (0,) * nv
    if max_deg <= 0:
        aff = M.terms.get(zero)
        builder.add_lmi(aff if aff is not None else Affine.constant(np.zeros((k, k))), label)
        return None

    row_mons = []
    for i in range(k):
        if diag_deg[i] < 0:
            row_mons.append(np.zeros((0, nv), dtype=int))
        else:
            row_mons.append(graded_lex_exponents(nv, diag_deg[i] // 2))
    sizes = [len(z) for z in row_mons]
    K = int(sum(sizes))
    if K > MAX_GRAM_DIM:
        raise DegreeOverflow(f"Gram matrix of size {K} exceeds {MAX_GRAM_DIM}")
    offs = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    gram_vars = builder.add_vars(K * (K + 1) // 2, f"{label}.gram")
    rows, cols = np.tril_indices(K)
    var_of = np.empty((K, K), dtype=np.intp)
    var_of[rows, cols] = gram_vars
    var_of[cols, rows] = gram_vars
    coefs = np.zeros((gram_vars.size, K, K))
    coefs[np.arange(gram_vars.size), rows, cols] = 1.0
    coefs[np.arange(gram_vars.size), cols, rows] = 1.0
    builder.add_lmi(Affine(gram_vars, np.concatenate([np.zeros((1, K, K)), coefs])), label)

    # coefficient of monomial gamma in entry (i, j), i <= j, from the Gram form
    gram_sum = defaultdict(list)
    for i in range(k):
        for j in range(i, k):
            for a_idx, a in enumerate(row_mons[i]):
                for b_idx, b in enumerate(row_mons[j]):
                    key = (i, j, tuple(a + b))
                    gram_sum[key].append(var_of[offs[i] + a_idx, offs[j] + b_idx])
    keys = set(gram_sum)
    for mon, aff in M.terms.items():
        for i in range(k):
            for j in range(i, k):
                if np.any(aff.coef[:, i, j] != 0):
                    keys.add((i, j, mon))

    parts = []
    for key in sorted(keys):
        i, j, mon = key
        vs = gram_sum.get(key, [])
        lhs = Affine.linear(vs, np.ones(len(vs))) if vs else Affine.constant(0.0)
        rhs = M.terms[mon][i, j] if mon in M.terms else Affine.constant(0.0)
        parts.append((lhs - rhs).reshape(1))
    eqs = concatenate(parts)
    builder.add_equalities(eqs)
    return SosCertificate(row_mons, gram_vars, K, eqs.shape[0], label)
