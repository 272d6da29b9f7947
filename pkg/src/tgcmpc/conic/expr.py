"""Affine expressions over the scalar decision vector of a ``ConicProgram``.

An ``Expr`` is ``coef @ v + const`` reshaped (row-major) to ``shape``, where
``v`` stacks every scalar of every declared variable. Only the operations the
LMI / SOCP builders need are implemented.
"""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp


def _widen(coef: sp.csr_matrix, n: int) -> sp.csr_matrix:
    if coef.shape[1] == n:
        return coef
    return sp.csr_matrix((coef.data, coef.indices, coef.indptr), shape=(coef.shape[0], n))


def _size(shape) -> int:
    return int(np.prod(shape)) if shape else 1


class Expr:
    __array_priority__ = 100  # make numpy defer to our reflected operators

    def __init__(self, coef, const, shape):
        self.coef = sp.csr_matrix(coef)
        self.const = np.asarray(const, dtype=float).reshape(-1)
        self.shape = tuple(int(s) for s in shape)
        assert self.coef.shape[0] == self.const.size == _size(self.shape)

    # construction -----------------------------------------------------
    @staticmethod
    def constant(value, nvars=0) -> "Expr":
        value = np.asarray(value, dtype=float)
        return Expr(sp.csr_matrix((value.size, nvars)), value.reshape(-1), value.shape)

    @property
    def size(self) -> int:
        return self.const.size

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def nvars(self) -> int:
        return self.coef.shape[1]

    def value(self, v: np.ndarray):
        out = _widen(self.coef, v.size) @ v + self.const
        return out.reshape(self.shape) if self.shape else float(out[0])

    # arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        val = np.asarray(other, dtype=float)
        if val.ndim == 0:
            val = np.full(self.shape, float(val))
        return Expr.constant(val, self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        if other.shape != self.shape:
            if other.size == 1:
                other = other.broadcast(self.shape)
            elif self.size == 1:
                return self.broadcast(other.shape) + other
            else:
                raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        n = max(self.nvars, other.nvars)
        return Expr(_widen(self.coef, n) + _widen(other.coef, n), self.const + other.const, self.shape)

    __radd__ = __add__

    def __neg__(self):
        return Expr(-self.coef, -self.const, self.shape)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, numbers.Real) or (isinstance(other, np.ndarray) and other.ndim == 0):
            k = float(other)
            return Expr(self.coef * k, self.const * k, self.shape)
        other = np.asarray(other, dtype=float)
        if self.size == 1 and other.ndim > 0:
            return self.broadcast(other.shape) * other
        if other.shape != self.shape:
            raise ValueError("elementwise multiply needs matching shapes")
        d = sp.diags(other.reshape(-1))
        return Expr(d @ self.coef, other.reshape(-1) * self.const, self.shape)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def broadcast(self, shape) -> "Expr":
        if self.size != 1:
            raise ValueError("only scalars broadcast")
        n = _size(shape)
        rows = sp.csr_matrix(np.ones((n, 1)))
        return Expr(rows @ self.coef, np.full(n, self.const[0]), shape)

    def _as_matrix_shape(self):
        if self.ndim == 2:
            return self.shape
        if self.ndim == 1:
            return (self.shape[0], 1)
        return (1, 1)

    def __matmul__(self, M):
        """Expr @ constant, with numpy's 1-D promotion rules."""
        M = np.asarray(M, dtype=float)
        if self.ndim == 0:
            raise ValueError("matmul with a scalar expression")
        r, c = self.shape if self.ndim == 2 else (1, self.shape[0])
        M2 = M.reshape(-1, 1) if M.ndim == 1 else M
        if M2.shape[0] != c:
            raise ValueError(f"matmul shape mismatch {self.shape} @ {M.shape}")
        T = sp.kron(sp.identity(r, format="csr"), sp.csr_matrix(M2.T), format="csr")
        shape = [r, M2.shape[1]]
        if M.ndim == 1:
            shape.pop()
        if self.ndim == 1:
            shape.pop(0)
        return Expr(T @ self.coef, T @ self.const, shape)

    def __rmatmul__(self, M):
        """constant @ Expr."""
        M = np.asarray(M, dtype=float)
        if self.ndim == 0:
            raise ValueError("matmul with a scalar expression")
        r, c = self.shape if self.ndim == 2 else (self.shape[0], 1)
        M2 = M.reshape(1, -1) if M.ndim == 1 else M
        if M2.shape[1] != r:
            raise ValueError(f"matmul shape mismatch {M.shape} @ {self.shape}")
        T = sp.kron(sp.csr_matrix(M2), sp.identity(c, format="csr"), format="csr")
        shape = [M2.shape[0], c]
        if self.ndim == 1:
            shape.pop()
        if M.ndim == 1:
            shape.pop(0)
        return Expr(T @ self.coef, T @ self.const, shape)

    @property
    def T(self) -> "Expr":
        if self.ndim < 2:
            return self
        r, c = self.shape
        perm = np.arange(r * c).reshape(r, c).T.reshape(-1)
        return Expr(self.coef[perm], self.const[perm], (c, r))

    def __getitem__(self, key):
        idx = np.arange(self.size).reshape(self.shape)[key]
        idx = np.asarray(idx)
        flat = idx.reshape(-1)
        return Expr(self.coef[flat], self.const[flat], idx.shape)

    def reshape(self, shape) -> "Expr":
        shape = tuple(shape) if isinstance(shape, (tuple, list)) else (shape,)
        if _size(shape) != self.size:
            raise ValueError("reshape size mismatch")
        return Expr(self.coef, self.const, shape)

    def flatten(self) -> "Expr":
        return self.reshape((self.size,))

    def sum(self) -> "Expr":
        ones = sp.csr_matrix(np.ones((1, self.size)))
        return Expr(ones @ self.coef, [self.const.sum()], ())

    def trace(self) -> "Expr":
        r, c = self.shape
        return self[np.arange(r), np.arange(r)].sum()

    def __repr__(self):
        return f"Expr(shape={self.shape}, nnz={self.coef.nnz})"


def as_expr(x, nvars=0) -> Expr:
    return x if isinstance(x, Expr) else Expr.constant(x, nvars)


def _block_shape(b):
    if isinstance(b, Expr):
        return b._as_matrix_shape()
    return np.atleast_2d(np.asarray(b, dtype=float)).shape


def bmat(blocks) -> Expr:
    """Assemble a block matrix; ``None`` entries are zero blocks sized by their row/column."""
    nrows = len(blocks)
    ncols = len(blocks[0])
    heights = [None] * nrows
    widths = [None] * ncols
    nvars = 0
    for i, row in enumerate(blocks):
        if len(row) != ncols:
            raise ValueError("ragged block rows")
        for j, blk in enumerate(row):
            if blk is None:
                continue
            h, w = _block_shape(blk)
            if heights[i] not in (None, h) or widths[j] not in (None, w):
                raise ValueError(f"block ({i},{j}) has inconsistent shape {(h, w)}")
            heights[i], widths[j] = h, w
            if isinstance(blk, Expr):
                nvars = max(nvars, blk.nvars)
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one sized entry")
    H, W = sum(heights), sum(widths)
    # Scatter each block's rows into the full row-major layout.
    coef_parts, const = [], np.zeros(H * W)
    r0 = 0
    for i, row in enumerate(blocks):
        c0 = 0
        for j, blk in enumerate(row):
            h, w = heights[i], widths[j]
            if blk is not None:
                e = as_expr(blk, nvars)
                if e.ndim < 2:
                    e = e.reshape((h, w))
                rr, cc = np.meshgrid(np.arange(h) + r0, np.arange(w) + c0, indexing="ij")
                target = (rr * W + cc).reshape(-1)
                P = sp.csr_matrix((np.ones(h * w), (target, np.arange(h * w))), shape=(H * W, h * w))
                coef_parts.append(P @ _widen(e.coef, nvars))
                const[target] += e.const
            c0 += w
        r0 += heights[i]
    coef = sum(coef_parts[1:], coef_parts[0]) if coef_parts else sp.csr_matrix((H * W, nvars))
    return Expr(coef, const, (H, W))


def hstack(items) -> Expr:
    return bmat([list(items)])


def vstack(items) -> Expr:
    return bmat([[it] for it in items])


def concat(items) -> Expr:
    """Concatenate scalars / vectors into one flat vector expression."""
    exprs = [as_expr(it) for it in items]
    n = max(e.nvars for e in exprs)
    coef = sp.vstack([_widen(e.coef, n) for e in exprs], format="csr")
    const = np.concatenate([e.const for e in exprs])
    return Expr(coef, const, (const.size,))
