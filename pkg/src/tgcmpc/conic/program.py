from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .expr import Expr, _widen, as_expr

ZERO, NONNEG, SOC, PSD = "zero", "nonneg", "soc", "psd"
LP_CONES = frozenset({ZERO, NONNEG})
LEAN_CONES = frozenset({ZERO, NONNEG, SOC})
FULL_CONES = frozenset({ZERO, NONNEG, SOC, PSD})
SQRT2 = math.sqrt(2.0)


@dataclass
class Variable:
    name: str
    shape: tuple
    offset: int
    size: int  # number of free scalars (n(n+1)/2 for symmetric)
    symmetric: bool = False


@dataclass
class Constraint:
    cone: str
    expr: Expr  # cone member: expr in K  (zero: expr == 0)
    name: str | None = None
    pin: str | None = None  # zero-cone rows ``expr == value`` with a runtime value
    value: np.ndarray | None = None


def svec_index(n: int):
    """Row/col pairs of the upper triangle, column by column (Clarabel's ordering)."""
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def svec_matrix(n: int) -> sp.csr_matrix:
    """Linear map from row-major vec(M) to the scaled upper-triangle svec(M)."""
    rows, cols = svec_index(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    # Average the (i,j)/(j,i) entries so non-exactly-symmetric inputs are symmetrised.
    r = np.concatenate([np.arange(rows.size), np.arange(rows.size)])
    c = np.concatenate([rows * n + cols, cols * n + rows])
    v = np.concatenate([scale * 0.5, scale * 0.5])
    return sp.csr_matrix((v, (r, c)), shape=(rows.size, n * n))


def smat(s: np.ndarray, n: int) -> np.ndarray:
    rows, cols = svec_index(n)
    M = np.zeros((n, n))
    vals = np.where(rows == cols, s, s / SQRT2)
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


@dataclass
class StandardForm:
    """``min 1/2 v'Pv + q'v + offset  s.t.  A v + s = b, s in K``."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list  # [(kind, dim)]
    offset: float
    pins: dict = field(default_factory=dict)  # name -> (row slice, base rhs)

    def rhs(self, **values) -> np.ndarray:
        b = self.b.copy()
        for name, val in values.items():
            rows, base = self.pins[name]
            b[rows] = base + np.asarray(val, dtype=float).reshape(-1)
        return b

    @property
    def cone_kinds(self) -> frozenset:
        return frozenset(kind for kind, _ in self.cones)


class ConicProgram:
    """Container of variables, cone constraints and a (convex quadratic) objective."""

    def __init__(self, name: str = ""):
        self.name = name
        self.variables: dict[str, Variable] = {}
        self.constraints: list[Constraint] = []
        self.nvars = 0
        self._linear: Expr | None = None
        self._squares: list[Expr] = []

    # variables --------------------------------------------------------
    def variable(self, name: str, shape=(), symmetric: bool = False) -> Expr:
        if name in self.variables:
            raise ValueError(f"duplicate variable {name!r}")
        shape = tuple(shape) if isinstance(shape, (tuple, list)) else (int(shape),)
        if symmetric:
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ValueError("symmetric variables must be square")
            n = shape[0]
            size = n * (n + 1) // 2
            iu, ju = np.triu_indices(n)
            k = np.empty((n, n), dtype=int)
            k[iu, ju] = np.arange(size)
            k[ju, iu] = np.arange(size)
            cols = self.nvars + k.reshape(-1)
            coef = sp.csr_matrix((np.ones(n * n), (np.arange(n * n), cols)), shape=(n * n, self.nvars + size))
        else:
            size = int(np.prod(shape)) if shape else 1
            coef = sp.csr_matrix(
                (np.ones(size), (np.arange(size), self.nvars + np.arange(size))), shape=(size, self.nvars + size)
            )
        self.variables[name] = Variable(name, shape, self.nvars, size, symmetric)
        self.nvars += size
        return Expr(coef, np.zeros(coef.shape[0]), shape)

    # constraints ------------------------------------------------------
    def _check(self, expr: Expr):
        if expr.nvars > self.nvars:
            raise ValueError("expression references undeclared variables")

    def add_zero(self, expr, name=None):
        expr = as_expr(expr)
        self._check(expr)
        self.constraints.append(Constraint(ZERO, expr.flatten(), name))

    def add_nonneg(self, expr, name=None):
        """Constrain ``expr >= 0`` elementwise."""
        expr = as_expr(expr)
        self._check(expr)
        self.constraints.append(Constraint(NONNEG, expr.flatten(), name))

    def add_soc(self, t, x, name=None):
        """Constrain ``||x||_2 <= t``."""
        from .expr import concat

        stacked = concat([t, as_expr(x).flatten()])
        self._check(stacked)
        self.constraints.append(Constraint(SOC, stacked, name))

    def add_psd(self, M, name=None, sym_tol: float = 1e-12):
        """Constrain the square affine matrix ``M`` to be positive semidefinite."""
        M = as_expr(M)
        self._check(M)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("PSD constraint needs a square matrix expression")
        asym = M - M.T
        n = self.nvars
        coef_asym = np.abs(asym.coef.data).max() if asym.coef.nnz else 0.0
        if coef_asym > sym_tol or np.abs(asym.const).max(initial=0.0) > sym_tol:
            raise ValueError(f"PSD constraint {name!r} is not symmetric")
        self.constraints.append(Constraint(PSD, M, name))

    def add_nsd(self, M, name=None):
        """Constrain ``M <= 0`` in the semidefinite order."""
        self.add_psd(-as_expr(M), name)

    def pin(self, name: str, expr: Expr, value):
        """``expr == value`` where ``value`` can be replaced at solve time."""
        expr = as_expr(expr).flatten()
        self._check(expr)
        value = np.asarray(value, dtype=float).reshape(-1)
        if value.size != expr.size:
            raise ValueError(f"pin {name!r}: value has {value.size} entries, expression {expr.size}")
        self.constraints.append(Constraint(ZERO, expr, name, pin=name, value=value))

    # objective --------------------------------------------------------
    def minimize(self, linear=None, squares=()):
        """Objective ``linear + sum_i ||squares_i||^2``."""
        self._linear = as_expr(linear) if linear is not None else None
        if self._linear is not None and self._linear.size != 1:
            raise ValueError("linear objective must be scalar")
        self._squares = [as_expr(s).flatten() for s in squares]

    def objective_value(self, v: np.ndarray) -> float:
        val = self._linear.value(v) if self._linear is not None else 0.0
        for s in self._squares:
            r = s.value(v)
            val += float(r @ r)
        return float(val)

    # compilation ------------------------------------------------------
    @property
    def cone_kinds(self) -> frozenset:
        return frozenset(c.cone for c in self.constraints)

    def compile(self) -> StandardForm:
        n = self.nvars
        A_parts, b_parts, cones, pins = [], [], [], {}
        row = 0
        for c in self.constraints:
            coef = _widen(c.expr.coef, n)
            const = c.expr.const
            if c.cone == ZERO:
                A, b = coef, -const
                if c.pin is not None:
                    pins[c.pin] = (slice(row, row + b.size), b.copy())
                    b = b + c.value
            elif c.cone in (NONNEG, SOC):
                A, b = -coef, const
            else:
                S = svec_matrix(c.expr.shape[0])
                A, b = -(S @ coef), S @ const
            m = b.size
            A_parts.append(A)
            b_parts.append(b)
            cones.append((c.cone, c.expr.shape[0] if c.cone == PSD else m))
            row += m
        A = sp.vstack(A_parts, format="csc") if A_parts else sp.csc_matrix((0, n))
        b = np.concatenate(b_parts) if b_parts else np.zeros(0)

        q = np.zeros(n)
        offset = 0.0
        if self._linear is not None:
            q += _widen(self._linear.coef, n).toarray().reshape(-1)
            offset += float(self._linear.const[0])
        P = sp.csc_matrix((n, n))
        for s in self._squares:
            F = _widen(s.coef, n)
            P = P + 2.0 * (F.T @ F)
            q += 2.0 * (F.T @ s.const)
            offset += float(s.const @ s.const)
        return StandardForm(P=sp.triu(P, format="csc"), q=q, A=A, b=b, cones=cones, offset=offset, pins=pins)

    # debugging --------------------------------------------------------
    def dump(self) -> str:
        """Human-readable listing of variables and constraints."""
        lines = [f"program {self.name!r}: {self.nvars} scalars"]
        for v in self.variables.values():
            kind = "sym" if v.symmetric else "var"
            lines.append(f"  {kind} {v.name}{list(v.shape)} @ {v.offset}")
        for i, c in enumerate(self.constraints):
            label = c.name or f"c{i}"
            lines.append(f"  [{c.cone}] {label}: shape={c.expr.shape} nnz={c.expr.coef.nnz}")
        if self._linear is not None or self._squares:
            lines.append(f"  minimize linear + {len(self._squares)} sum-of-squares terms")
        return "\n".join(lines)

    def unpack(self, v: np.ndarray) -> dict:
        out = {}
        for var in self.variables.values():
            raw = v[var.offset : var.offset + var.size]
            if var.symmetric:
                n = var.shape[0]
                M = np.zeros((n, n))
                iu, ju = np.triu_indices(n)
                M[iu, ju] = raw
                M[ju, iu] = raw
                out[var.name] = M
            else:
                out[var.name] = raw.reshape(var.shape) if var.shape else float(raw[0])
        return out

    def set_pin(self, name: str, value):
        for c in self.constraints:
            if c.pin == name:
                c.value = np.asarray(value, dtype=float).reshape(-1)
                return
        raise KeyError(name)

    def max_violation(self, v: np.ndarray) -> float:
        """Largest cone violation of ``v`` (PSD: most negative eigenvalue)."""
        worst = 0.0
        for c in self.constraints:
            val = c.expr.value(v)
            if c.cone == ZERO:
                if c.value is not None:
                    val = np.asarray(val).reshape(-1) - c.value
                viol = float(np.max(np.abs(val), initial=0.0))
            elif c.cone == NONNEG:
                viol = float(max(0.0, -np.min(val)))
            elif c.cone == SOC:
                viol = float(max(0.0, np.linalg.norm(val[1:]) - val[0]))
            else:
                M = 0.5 * (val + val.T)
                viol = float(max(0.0, -np.linalg.eigvalsh(M)[0]))
            worst = max(worst, viol)
        return worst

