"""Arrays that are affine in a vector of decision variables.

An :class:`Affine` stores ``value(z) = coef[0] + sum_k z[vars[k]] * coef[k + 1]``
with a sorted index array ``vars``. Only linear operations are supported;
this is all the LMI and SOS builders need.
"""

from __future__ import annotations

import numpy as np


class Affine:
    __slots__ = ("vars", "coef")
    __array_priority__ = 100

    def __init__(self, vars, coef):
        self.vars = np.asarray(vars, dtype=np.intp)
        self.coef = np.asarray(coef, dtype=float)
        if self.coef.shape[0] != self.vars.size + 1:
            raise ValueError("coef must have len(vars) + 1 leading slices")

    @classmethod
    def constant(cls, value):
        value = np.asarray(value, dtype=float)
        return cls(np.empty(0, dtype=np.intp), value[None])

    @classmethod
    def linear(cls, vars, coefs, const=None):
        """``const + sum_k z[vars[k]] * coefs[k]``; ``vars`` may repeat."""
        vars = np.asarray(vars, dtype=np.intp)
        coefs = np.asarray(coefs, dtype=float)
        shape = coefs.shape[1:]
        uniq, inv = np.unique(vars, return_inverse=True)
        out = np.zeros((uniq.size + 1,) + shape)
        np.add.at(out, inv + 1, coefs)
        if const is not None:
            out[0] = const
        return cls(uniq, out)

    @classmethod
    def from_matrix(cls, J, var_offset=0, const=None, shape=None):
        """Affine map ``z[var_offset:var_offset + J.shape[-1]] -> J @ z``."""
        J = np.asarray(J, dtype=float)
        nv = J.shape[-1]
        lead = J.shape[:-1]
        coef = np.moveaxis(J, -1, 0)
        keep = np.flatnonzero(np.any(coef.reshape(nv, -1) != 0, axis=1))
        out = np.zeros((keep.size + 1,) + lead)
        out[1:] = coef[keep]
        if const is not None:
            out[0] = const
        aff = cls(keep + var_offset, out)
        return aff.reshape(shape) if shape is not None else aff

    @property
    def shape(self):
        return self.coef.shape[1:]

    @property
    def const(self):
        return self.coef[0]

    @property
    def ndim(self):
        return self.coef.ndim - 1

    def value(self, z):
        z = np.asarray(z, dtype=float)
        return self.coef[0] + np.tensordot(z[self.vars], self.coef[1:], axes=(0, 0))

    def _aligned(self, other):
        if not isinstance(other, Affine):
            other = Affine.constant(other)
        if self.vars.size == other.vars.size and np.array_equal(self.vars, other.vars):
            return self.vars, self.coef, other.coef
        vars = np.union1d(self.vars, other.vars)
        shape_a, shape_b = self.shape, other.shape
        a = np.zeros((vars.size + 1,) + shape_a)
        b = np.zeros((vars.size + 1,) + shape_b)
        a[0] = self.coef[0]
        b[0] = other.coef[0]
        a[1 + np.searchsorted(vars, self.vars)] = self.coef[1:]
        b[1 + np.searchsorted(vars, other.vars)] = other.coef[1:]
        return vars, a, b

    def __add__(self, other):
        vars, a, b = self._aligned(other)
        return Affine(vars, a + b)

    __radd__ = __add__

    def __sub__(self, other):
        vars, a, b = self._aligned(other)
        return Affine(vars, a - b)

    def __rsub__(self, other):
        vars, a, b = self._aligned(other)
        return Affine(vars, b - a)

    def __neg__(self):
        return Affine(self.vars, -self.coef)

    def __mul__(self, scalar):
        if isinstance(scalar, Affine):
            raise TypeError("product of two affine expressions is not affine")
        s = np.asarray(scalar, dtype=float)
        return Affine(self.vars, self.coef * s)

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.asarray(M, dtype=float)
        return Affine(self.vars, np.tensordot(self.coef, M, axes=([self.coef.ndim - 1], [0])))

    def __rmatmul__(self, M):
        M = np.asarray(M, dtype=float)
        res = np.tensordot(M, self.coef, axes=([M.ndim - 1], [1]))
        return Affine(self.vars, np.moveaxis(res, M.ndim - 1, 0))

    @property
    def T(self):
        if self.ndim == 1:
            return self
        return Affine(self.vars, np.swapaxes(self.coef, 1, 2))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Affine(self.vars, self.coef.reshape((self.coef.shape[0],) + tuple(shape)))

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Affine(self.vars, self.coef[(slice(None),) + key])

    def sum(self):
        axes = tuple(range(1, self.coef.ndim))
        return Affine(self.vars, self.coef.sum(axis=axes))

    def pruned(self, tol=0.0):
        if self.vars.size == 0:
            return self
        mags = np.abs(self.coef[1:]).reshape(self.vars.size, -1).max(axis=1, initial=0.0)
        keep = mags > tol
        if keep.all():
            return self
        return Affine(self.vars[keep], np.concatenate([self.coef[:1], self.coef[1:][keep]]))

    def __repr__(self):
        return f"Affine(shape={self.shape}, nvars={self.vars.size})"


def as_affine(x):
    return x if isinstance(x, Affine) else Affine.constant(x)


def concatenate(items, axis=0):
    items = [as_affine(it) for it in items]
    vars = np.unique(np.concatenate([it.vars for it in items])) if items else np.empty(0, np.intp)
    parts = []
    for it in items:
        c = np.zeros((vars.size + 1,) + it.shape)
        c[0] = it.coef[0]
        c[1 + np.searchsorted(vars, it.vars)] = it.coef[1:]
        parts.append(c)
    return Affine(vars, np.concatenate(parts, axis=axis + 1))


def block(rows):
    """Assemble a 2-D block matrix from Affine / ndarray entries.

    ``None`` entries are zero blocks whose size is inferred from the row and
    column they sit in.
    """
    heights = []
    for row in rows:
        h = next((np.shape(as_affine(e).const)[0] for e in row if e is not None), None)
        heights.append(h)
    widths = []
    for j in range(len(rows[0])):
        w = next((np.shape(as_affine(row[j]).const)[1] for row in rows if row[j] is not None), None)
        widths.append(w)
    assembled = []
    for i, row in enumerate(rows):
        cells = [
            as_affine(np.zeros((heights[i], widths[j]))) if e is None else as_affine(e)
            for j, e in enumerate(row)
        ]
        assembled.append(concatenate(cells, axis=1))
    return concatenate(assembled, axis=0)
