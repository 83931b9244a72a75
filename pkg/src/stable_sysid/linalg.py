"""Dense symmetric linear algebra helpers.

Everything here is a pure function of its inputs. Symmetric matrices are
plain ``numpy`` arrays; :func:`symmetrize` is applied before any
factorization to remove roundoff asymmetry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

TOL_PSD = 1e-9


class NotPositiveDefinite(np.linalg.LinAlgError):
    pass


class NotConcave(ValueError):
    """Quadratic form is not strictly concave, so its supremum is infinite."""


def symmetrize(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def vech(A):
    """Lower-triangle packing (column-major over the lower triangle)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    rows, cols = np.tril_indices(n)
    order = np.lexsort((rows, cols))
    return A[rows[order], cols[order]]


def unvech(v, n=None):
    v = np.asarray(v, dtype=float)
    if n is None:
        n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = np.tril_indices(n)
    order = np.lexsort((rows, cols))
    A = np.zeros((n, n))
    A[rows[order], cols[order]] = v
    A[cols[order], rows[order]] = v
    return A


def vech_basis(n):
    """Symmetric matrices ``B_k`` with ``A = sum_k vech(A)[k] * B_k``."""
    rows, cols = np.tril_indices(n)
    order = np.lexsort((rows, cols))
    basis = np.zeros((n * (n + 1) // 2, n, n))
    for k, (i, j) in enumerate(zip(rows[order], cols[order])):
        basis[k, i, j] = 1.0
        basis[k, j, i] = 1.0
    return basis


def cholesky(A):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    try:
        return np.linalg.cholesky(symmetrize(A))
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(str(err)) from None


def min_eig(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    if S.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(symmetrize(S))[0])


def max_eig(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    return float(np.linalg.eigvalsh(symmetrize(S))[-1])


def concave_quad_bound(b, c, P):
    """Convex majorant ``b'Pb - 2b'c`` of ``-c'P^{-1}c``.

    The bound is exact when ``c = P b``.

    Raises
    ------
    NotPositiveDefinite
        If ``P`` is not positive definite.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    cholesky(P)
    return float(b @ P @ b - 2.0 * b @ c)


def sup_concave_quadratic(Q, b, c, tol=TOL_PSD):
    """Supremum over ``d`` of ``d'Qd + 2b'd + c`` for negative definite ``Q``.

    Returns
    -------
    value : float
        ``c - b'Q^{-1}b``
    argmax : ndarray
        ``-Q^{-1} b``
    """
    Q = symmetrize(np.atleast_2d(Q))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if max_eig(Q) > -tol:
        raise NotConcave(f"largest eigenvalue {max_eig(Q):.3e} > -{tol:g}")
    L = cholesky(-Q)
    arg = scipy.linalg.cho_solve((L, True), b)
    return float(c + b @ arg), arg


@dataclass(frozen=True)
class BlockTridiagonal:
    """Symmetric block tridiagonal matrix.

    ``diag[t]`` is the ``t``-th diagonal block and ``offdiag[t]`` is the block
    at position ``(t + 1, t)``; the ``(t, t + 1)`` block is its transpose.
    """

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.asarray(self.diag, dtype=float)
        offdiag = np.asarray(self.offdiag, dtype=float).reshape(
            max(len(diag) - 1, 0), diag.shape[1], diag.shape[2]
        )
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def num_blocks(self):
        return self.diag.shape[0]

    @property
    def block_dim(self):
        return self.diag.shape[1]

    def to_dense(self):
        T, n = self.num_blocks, self.block_dim
        A = np.zeros((T * n, T * n))
        for t in range(T):
            A[t * n:(t + 1) * n, t * n:(t + 1) * n] = self.diag[t]
        for t in range(T - 1):
            A[(t + 1) * n:(t + 2) * n, t * n:(t + 1) * n] = self.offdiag[t]
            A[t * n:(t + 1) * n, (t + 1) * n:(t + 2) * n] = self.offdiag[t].T
        return A


def block_tridiag_cholesky(A):
    """Block Cholesky factor: lower diagonal blocks ``L_t`` and sub-blocks ``C_t``.

    ``A = L L'`` with ``L`` block lower bidiagonal, ``L[t, t] = L_t`` and
    ``L[t + 1, t] = C_t``.
    """
    T = A.num_blocks
    Ls = np.empty_like(A.diag)
    Cs = np.empty_like(A.offdiag)
    S = symmetrize(A.diag[0])
    for t in range(T):
        try:
            Ls[t] = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(f"pivot block {t} is not positive definite") from None
        if t < T - 1:
            # C_t = A_{t+1,t} L_t^{-T}
            Cs[t] = scipy.linalg.solve_triangular(Ls[t], A.offdiag[t].T, lower=True).T
            S = symmetrize(A.diag[t + 1] - Cs[t] @ Cs[t].T)
    return Ls, Cs


def block_tridiag_solve(A, rhs):
    """Solve ``A x = rhs`` for symmetric positive definite block tridiagonal ``A``."""
    T, n = A.num_blocks, A.block_dim
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    r = rhs.reshape(T, n, -1)
    Ls, Cs = block_tridiag_cholesky(A)
    w = np.empty_like(r)
    for t in range(T):
        acc = r[t] if t == 0 else r[t] - Cs[t - 1] @ w[t - 1]
        w[t] = scipy.linalg.solve_triangular(Ls[t], acc, lower=True)
    x = np.empty_like(r)
    for t in range(T - 1, -1, -1):
        acc = w[t] if t == T - 1 else w[t] - Cs[t].T @ x[t + 1]
        x[t] = scipy.linalg.solve_triangular(Ls[t], acc, lower=True, trans="T")
    x = x.reshape(T * n, -1)
    return x[:, 0] if squeeze else x
