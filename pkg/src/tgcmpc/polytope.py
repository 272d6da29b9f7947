"""H-representation polytopes ``{x | H x <= g}``.

Only what the backward reachability recursion needs: intersection, affine
preimage, projection by Fourier-Motzkin elimination, LP-based redundancy
removal and containment tests. Rows are kept normalized to unit length so
every tolerance below is in units of Euclidean distance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatchError, EmptySetError

REDUNDANCY_TOL = 1e-8
EQUALITY_TOL = 1e-7
_ZERO_ROW = 1e-12


def _lp_max(c, H, g):
    """max c.x s.t. H x <= g. Returns (value, x); value is +inf if unbounded, None if infeasible."""
    res = linprog(-c, A_ub=H, b_ub=g, bounds=[(None, None)] * H.shape[1], method="highs")
    if res.status == 0:
        return -res.fun, res.x
    if res.status == 3:
        return np.inf, None
    return None, None


class Polytope:
    __slots__ = ("H", "g", "labels", "minimal")

    def __init__(self, H, g, labels=None, minimal=False, normalize=True):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        g = np.asarray(g, dtype=float).reshape(-1)
        if H.shape[0] != g.size:
            raise DimensionMismatchError(f"H has {H.shape[0]} rows but g has {g.size}")
        norms = np.linalg.norm(H, axis=1)
        zero = norms <= _ZERO_ROW
        if np.any(g[zero] < -REDUNDANCY_TOL):
            # 0 <= negative: the set is empty; keep a canonical infeasible pair.
            n = H.shape[1]
            e = np.zeros(n)
            e[0] = 1.0
            H, g = np.vstack([e, -e]), np.array([-1.0, -1.0])
        else:
            H, g, norms = H[~zero], g[~zero], norms[~zero]
            if normalize:
                H, g = H / norms[:, None], g / norms
        self.H = H
        self.g = g
        self.labels = list(labels) if labels is not None else None
        self.minimal = minimal

    # basics -----------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.H.shape[0]

    @classmethod
    def box(cls, lower, upper, labels=None) -> "Polytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.size
        H = np.vstack([np.eye(n), -np.eye(n)])
        return cls(H, np.concatenate([upper, -lower]), labels)

    def contains(self, x, tol: float = EQUALITY_TOL):
        """Membership of one point (1-D) or many points (rows of a 2-D array)."""
        x = np.asarray(x, dtype=float)
        inside = np.all(x @ self.H.T <= self.g + tol, axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    contains_point = contains

    def support(self, d) -> float:
        """max d.x over the set (+inf if unbounded)."""
        val, _ = _lp_max(np.asarray(d, dtype=float), self.H, self.g)
        if val is None:
            raise EmptySetError("support of an empty polytope")
        return val

    def chebyshev(self):
        """Center and radius of the largest inscribed ball; radius < 0 means empty."""
        n = self.dim
        c = np.zeros(n + 1)
        c[-1] = 1.0
        A = np.hstack([self.H, np.ones((self.n_constraints, 1))])
        res = linprog(-c, A_ub=A, b_ub=self.g, bounds=[(None, None)] * n + [(None, 1e6)], method="highs")
        if res.status != 0:
            return np.zeros(n), -np.inf
        return res.x[:n], res.x[-1]

    def is_empty(self, tol: float = 0.0) -> bool:
        _, r = self.chebyshev()
        return r < -tol or r == -np.inf

    def bounding_box(self):
        n = self.dim
        lo, hi = np.empty(n), np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            hi[i] = self.support(e)
            lo[i] = -self.support(-e)
        return lo, hi

    def scaled(self, factor: float, center=None) -> "Polytope":
        """Homothety about ``center`` (default origin)."""
        center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=float)
        g = factor * (self.g - self.H @ center) + self.H @ center
        return Polytope(self.H, g, self.labels, self.minimal)

    def lift(self, n_total: int, columns) -> "Polytope":
        """Cylindrical extension into ``n_total`` dims; own coordinates map to ``columns``."""
        H = np.zeros((self.n_constraints, n_total))
        H[:, list(columns)] = self.H
        return Polytope(H, self.g, minimal=self.minimal, normalize=False)

    # serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"H": self.H.tolist(), "g": self.g.tolist(), "dim": self.dim, "labels": self.labels or []}

    @classmethod
    def from_dict(cls, d) -> "Polytope":
        H = np.asarray(d["H"], dtype=float).reshape(-1, int(d["dim"]))
        # Stored rows are already normalized; re-dividing could perturb the last bit.
        return cls(H, d["g"], d.get("labels") or None, normalize=False)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Polytope":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_constraints})"


def _dedupe(H, g, tol=1e-12):
    """Collapse parallel rows (same normalized direction), keeping the tightest."""
    order = np.lexsort(np.round(H, 12).T[::-1])
    H, g = H[order], g[order]
    keep = []
    for i in range(H.shape[0]):
        if keep and np.max(np.abs(H[i] - H[keep[-1]])) <= tol:
            if g[i] < g[keep[-1]]:
                keep[-1] = i
            continue
        keep.append(i)
    return H[keep], g[keep]


def reduce(P: Polytope, tol: float = REDUNDANCY_TOL) -> Polytope:
    """Drop every row implied by the others (one LP per row)."""
    if P.minimal:
        return P
    H, g = _dedupe(P.H, P.g)
    keep = np.ones(H.shape[0], dtype=bool)
    for i in range(H.shape[0]):
        keep[i] = False
        if not keep.any():
            keep[i] = True
            continue
        val, _ = _lp_max(H[i], H[keep], g[keep])
        if val is None:
            # Remaining rows already infeasible; the set is empty regardless of row i.
            keep[i] = True
            continue
        if val > g[i] + tol:
            keep[i] = True
    return Polytope(H[keep], g[keep], P.labels, minimal=True)


def _check_dims(P: Polytope, Q: Polytope):
    if P.dim != Q.dim:
        raise DimensionMismatchError(f"dimension mismatch {P.dim} vs {Q.dim}")


def intersect(P: Polytope, Q: Polytope, reduce_result: bool = True) -> Polytope:
    _check_dims(P, Q)
    R = Polytope(np.vstack([P.H, Q.H]), np.concatenate([P.g, Q.g]), P.labels)
    return reduce(R) if reduce_result else R


def preimage(P: Polytope, A, B) -> Polytope:
    """``{(x, u) | A x + B u in P}``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    if A.shape[0] != P.dim:
        raise DimensionMismatchError(f"map has {A.shape[0]} outputs but polytope has dimension {P.dim}")
    return Polytope(P.H @ np.hstack([A, B]), P.g)


def fm_eliminate_last(H: np.ndarray, g: np.ndarray, eps: float = 1e-12):
    """Eliminate the last coordinate by Fourier-Motzkin combination."""
    col = H[:, -1]
    pos, neg, zer = col > eps, col < -eps, np.abs(col) <= eps
    Hp, gp = H[pos] / col[pos, None], g[pos] / col[pos]
    Hn, gn = H[neg] / -col[neg, None], g[neg] / -col[neg]
    # every (p, n) pair: Hp + Hn, the last column cancels
    Hpn = (Hp[:, None, :-1] + Hn[None, :, :-1]).reshape(-1, H.shape[1] - 1)
    gpn = (gp[:, None] + gn[None, :]).reshape(-1)
    return np.vstack([H[zer, :-1], Hpn]), np.concatenate([g[zer], gpn])


def project(P: Polytope, n_keep: int, order=None) -> Polytope:
    """Orthogonal projection onto the first ``n_keep`` coordinates.

    ``order`` lists the dropped coordinates in elimination order (default:
    last to first). Rows are reduced after every elimination.
    """
    if P.is_empty():
        raise EmptySetError("projection of an empty polytope")
    drop = list(range(P.dim - 1, n_keep - 1, -1)) if order is None else list(order)
    if sorted(drop) != list(range(n_keep, P.dim)):
        raise ValueError("order must be a permutation of the dropped coordinates")
    H, g = P.H, P.g
    cols = list(range(P.dim))
    for c in drop:
        k = cols.index(c)
        perm = [j for j in range(len(cols)) if j != k] + [k]
        H = H[:, perm]
        cols = [cols[j] for j in perm][:-1]
        if not np.any(np.abs(H[:, -1]) > 1e-12):
            H = H[:, :-1]
        else:
            H, g = fm_eliminate_last(H, g)
        Q = reduce(Polytope(H, g))
        H, g = Q.H, Q.g
    return Polytope(H, g, P.labels[:n_keep] if P.labels else None, minimal=True)


def is_subset(P: Polytope, Q: Polytope, tol: float = EQUALITY_TOL) -> bool:
    """P subset of Q, checked by maximizing each row of Q over P."""
    _check_dims(P, Q)
    for h, gi in zip(Q.H, Q.g):
        val, _ = _lp_max(h, P.H, P.g)
        if val is None:
            return True  # empty P
        if val > gi + tol:
            return False
    return True


def equals(P: Polytope, Q: Polytope, tol: float = EQUALITY_TOL) -> bool:
    return is_subset(P, Q, tol) and is_subset(Q, P, tol)


def vertices_2d(P: Polytope, tol: float = 1e-9) -> np.ndarray:
    """Counter-clockwise vertices of a bounded 2-D polytope (pairwise row intersections)."""
    if P.dim != 2:
        raise DimensionMismatchError("vertices_2d needs a 2-D polytope")
    pts = []
    H, g = P.H, P.g
    for i in range(len(g)):
        for j in range(i + 1, len(g)):
            M = H[[i, j]]
            if abs(np.linalg.det(M)) < 1e-12:
                continue
            x = np.linalg.solve(M, g[[i, j]])
            if np.all(H @ x <= g + tol):
                pts.append(x)
    if not pts:
        return np.zeros((0, 2))
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    return pts[np.argsort(ang)]


def slice_2d(P: Polytope, dims, fixed: dict | None = None) -> Polytope:
    """Restrict to the plane spanned by ``dims``; other coordinates set by ``fixed`` (default 0)."""
    fixed = fixed or {}
    others = [k for k in range(P.dim) if k not in dims]
    x_fixed = np.array([fixed.get(k, 0.0) for k in others])
    g = P.g - (P.H[:, others] @ x_fixed if others else 0.0)
    return Polytope(P.H[:, list(dims)], g)


def polygon_area(v: np.ndarray) -> float:
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def sample_uniform(P: Polytope, n: int, rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    """Rejection sampling from the bounding box."""
    lo, hi = P.bounding_box()
    out = []
    for _ in range(max_tries):
        pts = rng.uniform(lo, hi, size=(4 * n, P.dim))
        out.extend(pts[P.contains(pts, tol=0.0)])
        if len(out) >= n:
            return np.array(out[:n])
    raise EmptySetError("rejection sampling failed; the polytope may be flat")


def sample_boundary(P: Polytope, n: int, rng: np.random.Generator, center=None) -> np.ndarray:
    """Ray-shoot from ``center`` (default Chebyshev center) in random directions."""
    if center is None:
        center, _ = P.chebyshev()
    d = rng.normal(size=(n, P.dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    slack = P.g - P.H @ center
    rate = d @ P.H.T
    with np.errstate(divide="ignore"):
        t = np.where(rate > 1e-15, slack[None, :] / rate, np.inf).min(axis=1)
    return center + t[:, None] * d
