"""Implicit polynomial state-space models ``e(x+) = f(x, u)``, ``y = g(x, u)``.

Each of ``e``, ``f``, ``g`` is a linear combination of monomials with
coefficients stacked in a single vector ``theta``::

    theta = [vec(Theta_e), vec(Theta_f), vec(Theta_g)]      (row-major)
    e(x)    = Theta_e @ phi_e(x)
    f(x, u) = Theta_f @ phi_f(x, u)
    g(x, u) = Theta_g @ phi_g(x, u)

Monomials are listed in graded lexicographic order (total degree first, then
lexicographic with ``x_1`` highest), so indices are reproducible.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import NotPositiveDefinite, cholesky, symmetrize

MAX_STATE_DIM = 6
MAX_DEGREE = 5


class DimensionMismatch(ValueError):
    pass


class DegreeOverflow(ValueError):
    pass


class ModelKind(enum.Enum):
    LINEAR = "linear"
    STATE_AFFINE = "state_affine"
    POLYNOMIAL = "polynomial"


def graded_lex_exponents(nvars, max_degree, min_degree=0):
    """All exponent tuples with ``min_degree <= |alpha| <= max_degree``."""
    out = []
    for deg in range(min_degree, max_degree + 1):
        degree_terms = [
            a for a in itertools.product(range(deg + 1), repeat=nvars) if sum(a) == deg
        ]
        degree_terms.sort(reverse=True)
        out.extend(degree_terms)
    return np.array(out, dtype=int).reshape(-1, nvars)


def monomials(exps, points):
    """Evaluate monomials; ``points`` is ``(d,)`` or ``(N, d)``."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        return np.prod(points[None, :] ** exps, axis=1)
    return np.prod(points[:, None, :] ** exps[None, :, :], axis=2)


def monomial_gradients(exps, points):
    """Partial derivatives ``d phi_j / d v_c``; shape ``(nb, d)`` or ``(N, nb, d)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    nb, d = exps.shape
    out = np.empty((points.shape[0], nb, d))
    for c in range(d):
        shifted = exps.copy()
        shifted[:, c] = np.maximum(shifted[:, c] - 1, 0)
        out[:, :, c] = exps[:, c] * np.prod(points[:, None, :] ** shifted[None], axis=2)
    return out


def _joint_exponents(n, m, deg_x, deg_u, joint):
    if m == 0:
        return graded_lex_exponents(n, deg_x)
    if not joint:
        ex = graded_lex_exponents(n, deg_x)
        eu = graded_lex_exponents(m, deg_u, min_degree=1)
        return np.vstack([
            np.hstack([ex, np.zeros((len(ex), m), dtype=int)]),
            np.hstack([np.zeros((len(eu), n), dtype=int), eu]),
        ])
    full = graded_lex_exponents(n + m, max(deg_x, deg_u))
    keep = (full[:, :n].sum(axis=1) <= deg_x) & (full[:, n:].sum(axis=1) <= deg_u)
    return full[keep]


@dataclass(frozen=True)
class BasisSpec:
    """Monomial bases for ``e`` (in x) and ``f``, ``g`` (in (x, u)).

    With ``joint_u=False`` (default) ``f`` and ``g`` are sums of a polynomial
    in ``x`` and a polynomial in ``u`` without cross terms, so they are affine
    in ``u`` whenever the ``u`` degree is one.
    """

    n: int
    m: int
    p: int
    deg_e: int = 1
    deg_fx: int = 1
    deg_fu: int = 1
    deg_gx: int = 1
    deg_gu: int = 1
    joint_u: bool = False

    def __post_init__(self):
        if self.n < 1 or self.p < 1 or self.m < 0:
            raise DimensionMismatch("need n >= 1, p >= 1, m >= 0")
        if self.n > MAX_STATE_DIM:
            raise DegreeOverflow(f"state dimension {self.n} exceeds {MAX_STATE_DIM}")
        for name in ("deg_e", "deg_fx", "deg_gx", "deg_fu", "deg_gu"):
            deg = getattr(self, name)
            if deg < 1:
                raise ValueError(f"{name} must be >= 1 so affine functions are in span")
            if deg > MAX_DEGREE:
                raise DegreeOverflow(f"{name}={deg} exceeds {MAX_DEGREE}")

    @cached_property
    def e_exps(self):
        return graded_lex_exponents(self.n, self.deg_e)

    @cached_property
    def f_exps(self):
        return _joint_exponents(self.n, self.m, self.deg_fx, self.deg_fu, self.joint_u)

    @cached_property
    def g_exps(self):
        return _joint_exponents(self.n, self.m, self.deg_gx, self.deg_gu, self.joint_u)

    @property
    def ne(self):
        return len(self.e_exps)

    @property
    def nf(self):
        return len(self.f_exps)

    @property
    def ng(self):
        return len(self.g_exps)

    @property
    def slices(self):
        a = self.n * self.ne
        b = a + self.n * self.nf
        return slice(0, a), slice(a, b), slice(b, b + self.p * self.ng)

    @property
    def num_params(self):
        return self.n * (self.ne + self.nf) + self.p * self.ng

    @property
    def kind(self):
        x_deg = max(
            self.e_exps.sum(axis=1).max(),
            self.f_exps[:, :self.n].sum(axis=1).max(),
            self.g_exps[:, :self.n].sum(axis=1).max(),
        )
        if x_deg > 1:
            return ModelKind.POLYNOMIAL
        total = max(self.f_exps.sum(axis=1).max(), self.g_exps.sum(axis=1).max())
        return ModelKind.LINEAR if total <= 1 else ModelKind.STATE_AFFINE

    @property
    def jacobians_depend_on_u(self):
        """Whether ``F`` or ``G`` vary with ``u`` (x-u cross terms present)."""
        if self.m == 0:
            return False
        for exps in (self.f_exps, self.g_exps):
            mixed = (exps[:, :self.n].sum(axis=1) > 0) & (exps[:, self.n:].sum(axis=1) > 0)
            if mixed.any():
                return True
        return False

    def split(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.num_params,):
            raise DimensionMismatch(f"theta has shape {theta.shape}, expected ({self.num_params},)")
        se, sf, sg = self.slices
        return (
            theta[se].reshape(self.n, self.ne),
            theta[sf].reshape(self.n, self.nf),
            theta[sg].reshape(self.p, self.ng),
        )

    def join(self, Te, Tf, Tg):
        return np.concatenate([np.ravel(Te), np.ravel(Tf), np.ravel(Tg)]).astype(float)

    def linear_index(self, which, coordinate):
        """Column of the monomial equal to a single coordinate (x_i or u_j)."""
        exps = {"e": self.e_exps, "f": self.f_exps, "g": self.g_exps}[which]
        target = np.zeros(exps.shape[1], dtype=int)
        target[coordinate] = 1
        return int(np.flatnonzero((exps == target).all(axis=1))[0])

    def constant_index(self, which):
        exps = {"e": self.e_exps, "f": self.f_exps, "g": self.g_exps}[which]
        return int(np.flatnonzero(exps.sum(axis=1) == 0)[0])


@dataclass
class ModelParameters:
    basis: BasisSpec
    theta: np.ndarray
    P: np.ndarray = None
    mu: float = 1e-3

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.basis.split(self.theta)
        if self.P is None:
            self.P = np.eye(self.basis.n)
        self.P = symmetrize(np.atleast_2d(self.P))
        if self.P.shape != (self.basis.n, self.basis.n):
            raise DimensionMismatch("P must be n x n")
        if not self.mu > 0:
            raise ValueError("mu must be positive")

    @property
    def coefficients(self):
        return self.basis.split(self.theta)

    @property
    def kind(self):
        return self.basis.kind


def _check(basis, x, u=None):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != basis.n:
        raise DimensionMismatch(f"x has trailing dim {x.shape[-1]}, expected {basis.n}")
    if u is None:
        u = np.zeros(x.shape[:-1] + (basis.m,))
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != basis.m:
        raise DimensionMismatch(f"u has trailing dim {u.shape[-1]}, expected {basis.m}")
    return x, u


def eval_e(params, x):
    x, _ = _check(params.basis, x)
    Te, _, _ = params.coefficients
    return monomials(params.basis.e_exps, x) @ Te.T


def eval_f(params, x, u=None):
    x, u = _check(params.basis, x, u)
    _, Tf, _ = params.coefficients
    return monomials(params.basis.f_exps, np.concatenate([x, u], axis=-1)) @ Tf.T


def eval_g(params, x, u=None):
    x, u = _check(params.basis, x, u)
    _, _, Tg = params.coefficients
    return monomials(params.basis.g_exps, np.concatenate([x, u], axis=-1)) @ Tg.T


def _jac(coeffs, exps, points, n):
    grads = monomial_gradients(exps, points)[:, :, :n]
    J = np.einsum("rj,tjc->trc", coeffs, grads)
    return J


def jac_E(params, x):
    x, _ = _check(params.basis, x)
    Te, _, _ = params.coefficients
    J = _jac(Te, params.basis.e_exps, x, params.basis.n)
    return J[0] if x.ndim == 1 else J


def jac_F(params, x, u=None):
    x, u = _check(params.basis, x, u)
    _, Tf, _ = params.coefficients
    J = _jac(Tf, params.basis.f_exps, np.concatenate([x, u], axis=-1), params.basis.n)
    return J[0] if x.ndim == 1 else J


def jac_G(params, x, u=None):
    x, u = _check(params.basis, x, u)
    _, _, Tg = params.coefficients
    J = _jac(Tg, params.basis.g_exps, np.concatenate([x, u], axis=-1), params.basis.n)
    return J[0] if x.ndim == 1 else J


@dataclass
class ThetaMaps:
    """Linear maps from ``theta`` to model values and Jacobians at points.

    Shapes carry a leading point axis ``N``: ``e`` is ``(N, n, q)``, ``E`` is
    ``(N, n, n, q)``, and so on, so that e.g. ``E[t] @ theta`` is the
    Jacobian of ``e`` at point ``t``.
    """

    e: np.ndarray
    f: np.ndarray
    g: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray


def _selection(coeff_rows, values, offset, q):
    # values (N, nb) or (N, nb, n); row r of output uses theta[offset + r*nb : ...]
    N, nb = values.shape[:2]
    rest = values.shape[2:]
    out = np.zeros((N, coeff_rows) + rest + (q,))
    for r in range(coeff_rows):
        sl = slice(offset + r * nb, offset + (r + 1) * nb)
        out[:, r, ..., sl] = np.moveaxis(values, 1, -1)
    return out


def theta_jacobians(basis, x, u=None):
    """Linear maps ``theta -> (e, f, g, E, F, G)`` at one or many points."""
    x, u = _check(basis, x, u)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    u = np.atleast_2d(u) if basis.m else np.zeros((x.shape[0], 0))
    xu = np.concatenate([x, u], axis=1)
    q = basis.num_params
    se, sf, sg = basis.slices
    n, p = basis.n, basis.p
    maps = ThetaMaps(
        e=_selection(n, monomials(basis.e_exps, x), se.start, q),
        f=_selection(n, monomials(basis.f_exps, xu), sf.start, q),
        g=_selection(p, monomials(basis.g_exps, xu), sg.start, q),
        E=_selection(n, monomial_gradients(basis.e_exps, x), se.start, q),
        F=_selection(n, monomial_gradients(basis.f_exps, xu)[:, :, :n], sf.start, q),
        G=_selection(p, monomial_gradients(basis.g_exps, xu)[:, :, :n], sg.start, q),
    )
    if single:
        maps = ThetaMaps(*(getattr(maps, k)[0] for k in ("e", "f", "g", "E", "F", "G")))
    return maps


def linear_model(basis, E, A, B, C, D=None, P=None, mu=1e-3):
    """Model with ``e(x) = E x``, ``f = A x + B u``, ``g = C x + D u``."""
    n, m, p = basis.n, basis.m, basis.p
    Te = np.zeros((n, basis.ne))
    Tf = np.zeros((n, basis.nf))
    Tg = np.zeros((p, basis.ng))
    E, A, C = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (E, A, C))
    B = np.zeros((n, m)) if B is None else np.asarray(B, dtype=float).reshape(n, m)
    D = np.zeros((p, m)) if D is None else np.asarray(D, dtype=float).reshape(p, m)
    for i in range(n):
        Te[:, basis.linear_index("e", i)] = E[:, i]
        Tf[:, basis.linear_index("f", i)] = A[:, i]
        Tg[:, basis.linear_index("g", i)] = C[:, i]
    for j in range(m):
        Tf[:, basis.linear_index("f", n + j)] = B[:, j]
        Tg[:, basis.linear_index("g", n + j)] = D[:, j]
    return ModelParameters(basis, basis.join(Te, Tf, Tg), P=P, mu=mu)


def quadratic_stability_embed(basis, a_coeffs, g_coeffs, M, mu=1e-3):
    """Implicit form of an explicit model ``x+ = a(x, u)``, ``y = g(x, u)``.

    Uses ``e(x) = M x``, ``f = M a`` and ``P = M``. ``a_coeffs`` are the
    coefficients of ``a`` in the ``f`` basis, shape ``(n, nf)``; ``g_coeffs``
    are in the ``g`` basis, shape ``(p, ng)``.
    """
    M = symmetrize(np.atleast_2d(M))
    try:
        cholesky(M)
    except NotPositiveDefinite:
        raise NotPositiveDefinite("embedding metric M must be positive definite") from None
    a_coeffs = np.asarray(a_coeffs, dtype=float).reshape(basis.n, basis.nf)
    g_coeffs = np.asarray(g_coeffs, dtype=float).reshape(basis.p, basis.ng)
    Te = np.zeros((basis.n, basis.ne))
    for i in range(basis.n):
        Te[:, basis.linear_index("e", i)] = M[:, i]
    return ModelParameters(basis, basis.join(Te, M @ a_coeffs, g_coeffs), P=M, mu=mu)


# ---------------------------------------------------------------------------
# text serialization

_BASIS_KEYS = ("n", "m", "p", "deg_e", "deg_fx", "deg_fu", "deg_gx", "deg_gu")


def _fmt(values):
    return " ".join(f"{v:.17g}" for v in np.ravel(values))


def dumps_model(params, extra=None):
    b = params.basis
    lines = ["# stable_sysid implicit polynomial model", "format = 1"]
    lines += [f"{k} = {getattr(b, k)}" for k in _BASIS_KEYS]
    lines.append(f"joint_u = {int(b.joint_u)}")
    lines.append(f"mu = {params.mu:.17g}")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    lines.append(f"P = {_fmt(params.P)}")
    lines.append(f"theta = {_fmt(params.theta)}")
    return "\n".join(lines) + "\n"


def loads_model(text):
    """Parse :func:`dumps_model` output; returns ``(params, extra)``."""
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"malformed model line: {raw!r}")
        fields[key.strip()] = value.strip()
    if fields.pop("format", None) != "1":
        raise ValueError("unsupported model format")
    basis = BasisSpec(
        **{k: int(fields.pop(k)) for k in _BASIS_KEYS},
        joint_u=bool(int(fields.pop("joint_u", "0"))),
    )
    mu = float(fields.pop("mu"))
    P = np.array(fields.pop("P").split(), dtype=float).reshape(basis.n, basis.n)
    theta = np.array(fields.pop("theta").split(), dtype=float)
    params = ModelParameters(basis, theta, P=P, mu=mu)
    return params, fields


def save_model(path, params, extra=None):
    with open(path, "w") as fh:
        fh.write(dumps_model(params, extra))


def load_model(path):
    with open(path) as fh:
        return loads_model(fh.read())
