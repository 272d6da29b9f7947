"""Nonlinear bicycle truth model and the uncertain Frenet-frame linear model.

State ordering of every linear model is ``[e_y, e_psi, v_y, r]`` (cross-track
error, heading error, lateral velocity, yaw rate); the single input is the
front steering angle and the reference input is the path curvature.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import expm

from .errors import InvalidParameterError, LowSpeedError, SpeedOutOfRangeError
from .tire import TireDerived, TireParams, derive, lateral_force

STATE_ORDER = "e_y,e_psi,v_y,r"
GRAVITY = 9.81
MIN_TRUTH_SPEED = 0.1
MIN_SCHEDULE_SPEED = 3.0


@dataclass(frozen=True)
class VehicleParams:
    m: float
    Iz: float
    a: float
    b: float
    front: TireParams
    rear: TireParams
    delta_max: float
    d_m: float = 0.0
    g: float = GRAVITY
    # Optional published peak values, injected verbatim instead of the formula path.
    alpha_f_peak: float | None = None
    C_f_peak: float | None = None
    alpha_r_peak: float | None = None
    C_r_peak: float | None = None

    def __post_init__(self):
        for name in ("m", "Iz", "a", "b", "delta_max"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        L = self.a + self.b
        for tire, expected in ((self.front, self.m * self.g * self.b / L), (self.rear, self.m * self.g * self.a / L)):
            if abs(tire.Fz - expected) > 1e-9 * expected:
                raise InvalidParameterError(f"normal load {tire.Fz} inconsistent with static split {expected}")

    @classmethod
    def from_axles(cls, m, Iz, a, b, C_f, C_r, mu, R_mu, delta_max, g=GRAVITY, **kw):
        L = a + b
        front = TireParams(C=C_f, mu=mu, R_mu=R_mu, Fz=m * g * b / L)
        rear = TireParams(C=C_r, mu=mu, R_mu=R_mu, Fz=m * g * a / L)
        return cls(m=m, Iz=Iz, a=a, b=b, front=front, rear=rear, delta_max=delta_max, g=g, **kw)

    @property
    def mu(self) -> float:
        return self.front.mu

    def tires(self) -> tuple[TireDerived, TireDerived]:
        return (
            derive(self.front, self.alpha_f_peak, self.C_f_peak),
            derive(self.rear, self.alpha_r_peak, self.C_r_peak),
        )

    def with_friction(self, mu: float) -> "VehicleParams":
        return replace(self, front=replace(self.front, mu=mu), rear=replace(self.rear, mu=mu))


TABLE_I = dict(
    m=1231.0,
    Iz=2034.5,
    a=1.07,
    b=1.40,
    C_f=100000.0,
    C_r=130000.0,
    mu=0.8,
    R_mu=0.85,
    alpha_f_peak=math.radians(7.5760),
    C_f_peak=41171.0,
    alpha_r_peak=math.radians(4.4711),
    C_r_peak=53522.0,
)
# Not given in the table; ~29 deg road-wheel lock.
DEFAULT_DELTA_MAX = 0.5


def table1_vehicle(**overrides) -> VehicleParams:
    kw = dict(TABLE_I)
    kw.setdefault("delta_max", DEFAULT_DELTA_MAX)
    kw.update(overrides)
    return VehicleParams.from_axles(**kw)


@dataclass
class NonlinearState:
    vx: float
    vy: float = 0.0
    r: float = 0.0
    X: float = 0.0
    Y: float = 0.0
    psi: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.r, self.X, self.Y, self.psi])


def slip_angles(p: VehicleParams, s: NonlinearState, delta: float) -> tuple[float, float]:
    if s.vx <= MIN_TRUTH_SPEED:
        raise LowSpeedError(f"slip angles are ill-defined at vx={s.vx}")
    alpha_f = math.atan((s.vy + p.a * s.r) / s.vx) - delta
    alpha_r = math.atan((s.vy - p.b * s.r) / s.vx)
    return alpha_f, alpha_r


def nonlinear_derivative(p: VehicleParams, s: NonlinearState, delta: float, Fxf: float, tires=None):
    """Return ``(dvx, dvy, dr)`` of the bicycle model with brush tires."""
    tf, tr = tires if tires is not None else p.tires()
    alpha_f, alpha_r = slip_angles(p, s, delta)
    Fyf = lateral_force(tf, alpha_f)
    Fyr = lateral_force(tr, alpha_r)
    sd, cd = math.sin(delta), math.cos(delta)
    dvx = (Fxf * cd - Fyf * sd) / p.m + s.r * s.vy
    dvy = (Fxf * sd + Fyf * cd + Fyr) / p.m - s.r * s.vx
    dr = (p.a * Fxf * sd + p.a * Fyf * cd - p.b * Fyr) / p.Iz
    return dvx, dvy, dr


@dataclass(frozen=True)
class UncertaintyStructure:
    n_q: tuple[int, ...] = (1, 1)  # block output sizes
    n_p: tuple[int, ...] = (1, 1)  # block input sizes

    @property
    def s(self) -> int:
        return len(self.n_q)

    def q_slices(self):
        return _block_slices(self.n_q)

    def p_slices(self):
        return _block_slices(self.n_p)


def _block_slices(sizes):
    out, start = [], 0
    for n in sizes:
        out.append(slice(start, start + n))
        start += n
    return out


@dataclass(frozen=True)
class UncertainLinearModel:
    A: np.ndarray
    Bu: np.ndarray
    Bw: np.ndarray
    Br: np.ndarray
    Cy: np.ndarray
    Dyu: np.ndarray
    vx_design: float
    structure: UncertaintyStructure = field(default_factory=UncertaintyStructure)
    state_order: str = STATE_ORDER

    def certain_matrices(self, delta_diag):
        """``(A + Bw D Cy, Bu + Bw D Dyu)`` for a fixed diagonal uncertainty."""
        D = np.diag(delta_diag)
        return self.A + self.Bw @ D @ self.Cy, self.Bu + self.Bw @ D @ self.Dyu


@dataclass(frozen=True)
class DiscreteModel:
    Ad: np.ndarray
    Bdu: np.ndarray
    Bdw: np.ndarray
    Bdr: np.ndarray
    Cy: np.ndarray
    Dyu: np.ndarray
    Ts: float
    vx_design: float
    structure: UncertaintyStructure = field(default_factory=UncertaintyStructure)
    state_order: str = STATE_ORDER

    def certain_matrices(self, delta_diag):
        D = np.diag(delta_diag)
        return self.Ad + self.Bdw @ D @ self.Cy, self.Bdu + self.Bdw @ D @ self.Dyu


def build_uncertain_model(
    p: VehicleParams,
    vx: float,
    tf: TireDerived | None = None,
    tr: TireDerived | None = None,
    consistent_dyu: bool = False,
) -> UncertainLinearModel:
    """Linear Frenet-frame bicycle model with cone-bounded tire uncertainty.

    ``Dyu = [-dC_f, 0]`` by default. Combined with the ``1 / vx`` scaling of
    ``Bw`` this understates the steering-channel uncertainty by a factor
    ``vx``; ``consistent_dyu=True`` uses ``-vx * dC_f`` so that the vertex
    ``gamma_f = +1`` reproduces the certain model with stiffness ``C_f`` in
    the input channel too.
    """
    if vx < MIN_SCHEDULE_SPEED:
        raise SpeedOutOfRangeError(f"vx={vx} is below the {MIN_SCHEDULE_SPEED} m/s scheduling floor")
    if tf is None or tr is None:
        tf, tr = p.tires()
    m, Iz, a, b = p.m, p.Iz, p.a, p.b
    Cf, Cr = tf.C_bar, tr.C_bar
    dCf, dCr = tf.dC, tr.dC
    A = np.array(
        [
            [0.0, vx, 1.0, p.d_m],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, -(Cf + Cr) / (m * vx), -(a * Cf - b * Cr) / (m * vx) - vx],
            [0.0, 0.0, -(a * Cf - b * Cr) / (Iz * vx), -(a * a * Cf + b * b * Cr) / (Iz * vx)],
        ]
    )
    Bu = np.array([[0.0], [0.0], [Cf / m], [a * Cf / Iz]])
    Bw = np.array(
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [-1.0 / (m * vx), 1.0 / (m * vx)],
            [-a / (Iz * vx), -b / (Iz * vx)],
        ]
    )
    Br = np.array([[0.0], [-vx], [0.0], [0.0]])
    Cy = np.array([[0.0, 0.0, dCf, a * dCf], [0.0, 0.0, -dCr, b * dCr]])
    steer = -vx * dCf if consistent_dyu else -dCf
    Dyu = np.array([[steer], [0.0]])
    return UncertainLinearModel(A=A, Bu=Bu, Bw=Bw, Br=Br, Cy=Cy, Dyu=Dyu, vx_design=float(vx))


VERTEX_SIGNS = tuple(itertools.product((-1.0, 1.0), repeat=2))  # (--, -+, +-, ++)


def enumerate_vertices(mdl) -> list[tuple[np.ndarray, np.ndarray]]:
    """Vertex systems for ``Delta = diag(+-1, +-1)`` in the order --, -+, +-, ++."""
    return [mdl.certain_matrices(signs) for signs in VERTEX_SIGNS]


def discretize(mdl: UncertainLinearModel, Ts: float) -> DiscreteModel:
    """Zero-order-hold discretization of all input channels via one matrix exponential."""
    if not Ts > 0:
        raise InvalidParameterError("Ts must be positive")
    n = mdl.A.shape[0]
    B = np.hstack([mdl.Bu, mdl.Bw, mdl.Br])
    M = np.zeros((n + B.shape[1], n + B.shape[1]))
    M[:n, :n] = mdl.A
    M[:n, n:] = B
    E = expm(M * Ts)
    Ad = E[:n, :n]
    Bd = E[:n, n:]
    nu, nw = mdl.Bu.shape[1], mdl.Bw.shape[1]
    return DiscreteModel(
        Ad=Ad,
        Bdu=Bd[:, :nu],
        Bdw=Bd[:, nu : nu + nw],
        Bdr=Bd[:, nu + nw :],
        Cy=mdl.Cy.copy(),
        Dyu=mdl.Dyu.copy(),
        Ts=float(Ts),
        vx_design=mdl.vx_design,
        structure=mdl.structure,
        state_order=mdl.state_order,
    )
