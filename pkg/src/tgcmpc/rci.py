"""Maximal robust controllable invariant sets for the lateral envelope.

The recursion runs in the ``(v_y, r)`` plane with the steering angle as the
input: the slip and actuator constraints involve no path-error states, and the
lateral dynamics do not depend on them. The result is lifted cylindrically to
the four-state tracking model where needed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import polytope as pt
from .errors import EmptySetError, InvalidParameterError
from .polytope import Polytope
from .vehicle import (
    VehicleParams,
    build_uncertain_model,
    discretize,
    enumerate_vertices,
)

log = logging.getLogger(__name__)

LATERAL = slice(2, 4)  # (v_y, r) inside [e_y, e_psi, v_y, r]
LABELS = ["v_y", "r"]
MAX_ITER = 200
SET_TOL = 1e-6


@dataclass(frozen=True)
class EnvelopeSpec:
    alpha_f_peak: float
    alpha_r_peak: float
    delta_max: float
    vx: float
    a: float
    b: float

    def __post_init__(self):
        for name in ("alpha_f_peak", "alpha_r_peak", "delta_max", "vx", "a", "b"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")

    @classmethod
    def from_vehicle(cls, p: VehicleParams, vx: float) -> "EnvelopeSpec":
        tf, tr = p.tires()
        return cls(tf.alpha_peak, tr.alpha_peak, p.delta_max, vx, p.a, p.b)


@dataclass
class RciResult:
    set: Polytope
    iterations: int
    converged: bool
    vx: float = float("nan")
    monotone: bool = True
    sizes: list = field(default_factory=list)


def envelope_constraints(spec: EnvelopeSpec):
    """Linearized slip and steering limits ``H_x [v_y, r] + H_u delta <= g``."""
    a, b, vx = spec.a, spec.b, spec.vx
    H_x = np.array([[1.0, a], [1.0, -b], [0.0, 0.0], [-1.0, -a], [-1.0, b], [0.0, 0.0]])
    H_u = np.array([[-vx], [0.0], [1.0], [vx], [0.0], [-1.0]])
    g = np.array(
        [
            vx * spec.alpha_f_peak,
            vx * spec.alpha_r_peak,
            spec.delta_max,
            vx * spec.alpha_f_peak,
            vx * spec.alpha_r_peak,
            spec.delta_max,
        ]
    )
    return H_x, H_u, g


def lateral_vertices(p: VehicleParams, vx: float, Ts: float):
    """Discrete vertex systems restricted to ``(v_y, r)``."""
    d = discretize(build_uncertain_model(p, vx), Ts)
    return [(A[LATERAL, LATERAL], B[LATERAL]) for A, B in enumerate_vertices(d)]


def maximal_rci(vertices, H_x, H_u, g, max_iter: int = MAX_ITER, tol: float = SET_TOL, vx=float("nan")) -> RciResult:
    """Backward recursion ``R_{k+1} = Proj_x(C  ∩  ⋂_i [A_i B_i]^{-1} R_k)`` from ``R_0 = Proj_x(C)``."""
    H_x = np.atleast_2d(H_x)
    H_u = np.asarray(H_u, dtype=float).reshape(H_x.shape[0], -1)
    nx = H_x.shape[1]
    C = Polytope(np.hstack([H_x, H_u]), g)
    if C.is_empty():
        raise EmptySetError("constraint set is empty")
    R = pt.project(C, nx)
    R.labels = LABELS if nx == 2 else None
    sizes = [R.n_constraints]
    monotone = True
    for k in range(1, max_iter + 1):
        parts = [C] + [pt.preimage(R, A, B) for A, B in vertices]
        S_hat = Polytope(np.vstack([P.H for P in parts]), np.concatenate([P.g for P in parts]))
        S_hat = pt.reduce(S_hat)
        if S_hat.is_empty():
            raise EmptySetError(f"iterate {k} is empty")
        R_next = pt.project(S_hat, nx)
        R_next.labels = R.labels
        sizes.append(R_next.n_constraints)
        monotone &= pt.is_subset(R_next, R, tol)
        if pt.equals(R_next, R, tol):
            return RciResult(R_next, k, True, vx, monotone, sizes)
        R = R_next
    log.warning("RCI recursion hit the %d-iteration cap at vx=%s", max_iter, vx)
    return RciResult(R, max_iter, False, vx, monotone, sizes)


def vehicle_rci(p: VehicleParams, vx: float, Ts: float = 0.025, **kw) -> RciResult:
    spec = EnvelopeSpec.from_vehicle(p, vx)
    H_x, H_u, g = envelope_constraints(spec)
    return maximal_rci(lateral_vertices(p, vx, Ts), H_x, H_u, g, vx=vx, **kw)


def one_step_feasible(x, vertices, target: Polytope, H_x, H_u, g, margin: float = 0.0) -> bool:
    """Is there an input keeping ``x`` admissible and every vertex successor in ``target``?"""
    x = np.asarray(x, dtype=float)
    H_u = np.asarray(H_u, dtype=float).reshape(len(g), -1)
    rows = [H_u]
    rhs = [g - H_x @ x]
    for A, B in vertices:
        rows.append(target.H @ B)
        rhs.append(target.g - target.H @ (A @ x) - margin)
    A_ub = np.vstack(rows)
    b_ub = np.concatenate(rhs)
    res = linprog(np.zeros(H_u.shape[1]), A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * H_u.shape[1], method="highs")
    return res.status == 0


def beal_rmax(p: VehicleParams, mu: float, vx: float) -> float:
    """Steady-state yaw-rate bound with the gravity factor restored."""
    a, b = p.a, p.b
    return (mu * p.g / vx) * (a * b + max(a, b) ** 2) / (min(a, b) * (a + b))


def beal_envelope(p: VehicleParams, mu: float, vx: float) -> Polytope:
    """Rear-slip and steady-state yaw-rate envelope over ``(v_y, r)``."""
    if not vx > 0:
        raise InvalidParameterError("vx must be positive")
    _, tr = p.tires()
    rmax = beal_rmax(p, mu, vx)
    H = np.array([[1.0, -p.b], [-1.0, p.b], [0.0, 1.0], [0.0, -1.0]])
    g = np.array([vx * tr.alpha_peak, vx * tr.alpha_peak, rmax, rmax])
    return Polytope(H, g, LABELS)


def build_rci_bank(p: VehicleParams, speeds, Ts: float = 0.025, **kw):
    """One RCI per grid speed. Returns ``(bank, failures)``; failures map speed to message."""
    speeds = list(speeds)
    if not speeds:
        raise InvalidParameterError("speed grid is empty")
    bank, failures = {}, {}
    for vx in speeds:
        try:
            bank[float(vx)] = vehicle_rci(p, float(vx), Ts, **kw)
        except EmptySetError as exc:
            failures[float(vx)] = str(exc)
            log.warning("RCI at vx=%s failed: %s", vx, exc)
    return bank, failures


def active_rows(R: Polytope, H_x, H_u, g, spec_names=("front+", "rear+", "steer+", "front-", "rear-", "steer-")):
    """Names of envelope rows whose direction appears among the facets of ``R``.

    A slip row is a facet of the RCI when its state part (the input column
    projected out) is parallel to a facet normal within 1e-6 rad.
    """
    out = []
    for name, hx, hu, gi in zip(spec_names, H_x, np.asarray(H_u).reshape(-1), g):
        n = np.linalg.norm(hx)
        if n == 0:
            continue
        d = hx / n
        cos = np.clip(R.H @ d, -1.0, 1.0)
        if np.any(np.arccos(cos) < 1e-6):
            out.append(name)
    return out


def row_angle(R: Polytope, direction) -> float:
    """Smallest angle between a facet normal of ``R`` and ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    return float(np.min(np.arccos(np.clip(R.H @ d, -1.0, 1.0))))


def max_abs_coordinate(R: Polytope, i: int) -> float:
    e = np.zeros(R.dim)
    e[i] = 1.0
    return max(R.support(e), R.support(-e))


def lift_to_tracking(R: Polytope) -> Polytope:
    """Cylindrical extension of a ``(v_y, r)`` set to ``[e_y, e_psi, v_y, r]``."""
    return R.lift(4, [2, 3])


def degrees(x):
    return x * 180.0 / math.pi
