"""Hot loops: truth-model integration and Monte-Carlo rollouts.

Every kernel exists twice: a numba-compiled loop and a numpy implementation
(vectorized over rollouts where that is possible). ``USE_NUMBA`` from
``_accel`` selects which one the public names point to.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# Layout of the flat vehicle parameter vector consumed by the kernels.
VEH_M, VEH_IZ, VEH_A, VEH_B = 0, 1, 2, 3
TIRE_F, TIRE_R = 4, 9  # each tire: a_coef, b_coef, c_coef, alpha_sat, F_sliding
VEH_LEN = 14

# Status codes returned by the integrator.
OK, LOW_SPEED = 0, 1


def pack_vehicle(p, tires=None) -> np.ndarray:
    """Flatten ``VehicleParams`` (and optionally perturbed tires) for the kernels."""
    tf, tr = tires if tires is not None else p.tires()
    v = np.empty(VEH_LEN)
    v[VEH_M], v[VEH_IZ], v[VEH_A], v[VEH_B] = p.m, p.Iz, p.a, p.b
    for off, t in ((TIRE_F, tf), (TIRE_R, tr)):
        v[off : off + 5] = (t.a_coef, t.b_coef, t.c_coef, t.alpha_sat, t.F_sliding)
    return v


# ---------------------------------------------------------------------------
# tire + truth model


def _build_truth(jit):
    """Define the truth-model kernels with decorator ``jit`` (numba or identity)."""

    @jit
    def brush(veh, off, alpha):
        asat = veh[off + 3]
        if alpha > asat:
            return veh[off + 4]
        if alpha < -asat:
            return -veh[off + 4]
        f = math.tan(alpha)
        return veh[off] * f + veh[off + 1] * abs(f) * f + veh[off + 2] * f * f * f

    @jit
    def deriv(s, veh, delta, Fxf, Mz, Fy, out):
        vx, vy, r, psi = s[0], s[1], s[2], s[5]
        a, b, m, Iz = veh[2], veh[3], veh[0], veh[1]
        af = math.atan((vy + a * r) / vx) - delta
        ar = math.atan((vy - b * r) / vx)
        Fyf = brush(veh, 4, af)
        Fyr = brush(veh, 9, ar)
        sd, cd = math.sin(delta), math.cos(delta)
        out[0] = (Fxf * cd - Fyf * sd) / m + r * vy
        out[1] = (Fxf * sd + Fyf * cd + Fyr + Fy) / m - r * vx
        out[2] = (a * Fxf * sd + a * Fyf * cd - b * Fyr + Mz) / Iz
        cp, sp_ = math.cos(psi), math.sin(psi)
        out[3] = vx * cp - vy * sp_
        out[4] = vx * sp_ + vy * cp
        out[5] = r

    @jit
    def integrate(s, veh, delta, Fxf, Mz, Fy, dt, n_steps, min_speed):
        """Advance ``s`` in place by ``n_steps`` RK4 steps; returns a status code."""
        k1 = np.empty(6)
        k2 = np.empty(6)
        k3 = np.empty(6)
        k4 = np.empty(6)
        tmp = np.empty(6)
        for _ in range(n_steps):
            if s[0] <= min_speed:
                return 1
            deriv(s, veh, delta, Fxf, Mz, Fy, k1)
            for i in range(6):
                tmp[i] = s[i] + 0.5 * dt * k1[i]
            deriv(tmp, veh, delta, Fxf, Mz, Fy, k2)
            for i in range(6):
                tmp[i] = s[i] + 0.5 * dt * k2[i]
            deriv(tmp, veh, delta, Fxf, Mz, Fy, k3)
            for i in range(6):
                tmp[i] = s[i] + dt * k3[i]
            deriv(tmp, veh, delta, Fxf, Mz, Fy, k4)
            for i in range(6):
                s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        return 0

    return brush, deriv, integrate


def _identity(fn):
    return fn


_brush, _deriv, _integrate = _build_truth(_identity)
_brush_nb, _deriv_nb, _integrate_nb = _build_truth(njit(cache=False))


def _slips(s, veh, delta):
    a, b = veh[VEH_A], veh[VEH_B]
    return math.atan((s[1] + a * s[2]) / s[0]) - delta, math.atan((s[1] - b * s[2]) / s[0])


def brush_force_numpy(veh: np.ndarray, off: int, alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    asat = veh[off + 3]
    f = np.tan(np.clip(alpha, -asat, asat))
    poly = veh[off] * f + veh[off + 1] * np.abs(f) * f + veh[off + 2] * f**3
    return np.where(np.abs(alpha) <= asat, poly, veh[off + 4] * np.sign(alpha))


def integrate_numpy(s, veh, delta, Fxf, Mz, Fy, dt, n_steps, min_speed):
    return _integrate(s, veh, float(delta), float(Fxf), float(Mz), float(Fy), float(dt), int(n_steps), float(min_speed))


def integrate_numba(s, veh, delta, Fxf, Mz, Fy, dt, n_steps, min_speed):
    return int(_integrate_nb(s, veh, float(delta), float(Fxf), float(Mz), float(Fy), float(dt), int(n_steps), float(min_speed)))


# ---------------------------------------------------------------------------
# Monte-Carlo rollouts of the uncertain linear model


@njit(cache=True)
def _gcc_rollouts_nb(Ad, Bu, Bw, Cy, Dyu, K, Cc, Dc, X0, G):
    R, T, s = G.shape
    n, nc = Ad.shape[0], Cc.shape[0]
    costs = np.zeros(R)
    final = np.zeros(R)
    x = np.empty(n)
    xn = np.empty(n)
    w = np.empty(s)
    for j in range(R):
        for i in range(n):
            x[i] = X0[j, i]
        total = 0.0
        for k in range(T):
            u = 0.0
            for i in range(n):
                u -= K[0, i] * x[i]
            for r in range(nc):
                c = Dc[r, 0] * u
                for i in range(n):
                    c += Cc[r, i] * x[i]
                total += c * c
            for r in range(s):
                y = Dyu[r, 0] * u
                for i in range(n):
                    y += Cy[r, i] * x[i]
                w[r] = G[j, k, r] * y
            for r in range(n):
                v = Bu[r, 0] * u
                for i in range(n):
                    v += Ad[r, i] * x[i]
                for i in range(s):
                    v += Bw[r, i] * w[i]
                xn[r] = v
            for i in range(n):
                x[i] = xn[i]
        costs[j] = total
        nrm = 0.0
        for i in range(n):
            nrm += x[i] * x[i]
        final[j] = math.sqrt(nrm)
    return costs, final


def _gcc_rollouts_np(Ad, Bu, Bw, Cy, Dyu, K, Cc, Dc, X0, G):
    R, T, _ = G.shape
    x = X0.copy()
    costs = np.zeros(R)
    for k in range(T):
        u = -(x @ K[0])
        c = x @ Cc.T + np.outer(u, Dc[:, 0])
        costs += np.einsum("ij,ij->i", c, c)
        y = x @ Cy.T + np.outer(u, Dyu[:, 0])
        x = x @ Ad.T + np.outer(u, Bu[:, 0]) + (G[:, k] * y) @ Bw.T
    return costs, np.linalg.norm(x, axis=1)


@njit(cache=True)
def _tube_rollouts_nb(Ad, Bu, Bw, Cy, Dyu, K, K_R, E, Z, NU, FF, X0, G):
    """Apply ``u = -K z + nu - K_R (x - z)`` along fixed plans; return ``e' E e`` per step."""
    R, N, s = G.shape
    n = Ad.shape[0]
    out = np.zeros((R, N + 1))
    x = np.empty(n)
    xn = np.empty(n)
    e = np.empty(n)
    w = np.empty(s)
    for j in range(R):
        for i in range(n):
            x[i] = X0[j, i]
        for k in range(N + 1):
            for i in range(n):
                e[i] = x[i] - Z[j, k, i]
            q = 0.0
            for r in range(n):
                for i in range(n):
                    q += e[r] * E[r, i] * e[i]
            out[j, k] = q
            if k == N:
                break
            u = NU[j, k]
            for i in range(n):
                u -= K[0, i] * Z[j, k, i] + K_R[0, i] * e[i]
            for r in range(s):
                y = Dyu[r, 0] * u
                for i in range(n):
                    y += Cy[r, i] * x[i]
                w[r] = G[j, k, r] * y
            for r in range(n):
                v = Bu[r, 0] * u + FF[j, k, r]
                for i in range(n):
                    v += Ad[r, i] * x[i]
                for i in range(s):
                    v += Bw[r, i] * w[i]
                xn[r] = v
            for i in range(n):
                x[i] = xn[i]
    return out


def _tube_rollouts_np(Ad, Bu, Bw, Cy, Dyu, K, K_R, E, Z, NU, FF, X0, G):
    R, N, _ = G.shape
    out = np.zeros((R, N + 1))
    x = X0.copy()
    for k in range(N + 1):
        e = x - Z[:, k]
        out[:, k] = np.einsum("ij,jk,ik->i", e, E, e)
        if k == N:
            break
        u = -(Z[:, k] @ K[0]) + NU[:, k] - e @ K_R[0]
        y = x @ Cy.T + np.outer(u, Dyu[:, 0])
        x = x @ Ad.T + np.outer(u, Bu[:, 0]) + (G[:, k] * y) @ Bw.T + FF[:, k]
    return out


def _f(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def gcc_rollouts(Ad, Bu, Bw, Cy, Dyu, K, Cc, Dc, X0, G, use_numba: bool | None = None):
    """Realized quadratic costs of ``u = -K x`` under per-step diagonal gains ``G``.

    ``G[j, k]`` holds the diagonal of ``Delta`` for rollout ``j`` at step ``k``.
    Returns ``(costs, final_state_norms)``.
    """
    fn = _gcc_rollouts_nb if (USE_NUMBA if use_numba is None else use_numba) else _gcc_rollouts_np
    args = [_f(a) for a in (Ad, Bu, Bw, Cy, Dyu, np.atleast_2d(K), Cc, Dc, X0, G)]
    return fn(*args)


def tube_rollouts(Ad, Bu, Bw, Cy, Dyu, K, K_R, E, Z, NU, X0, G, FF=None, use_numba: bool | None = None):
    """Ellipsoidal error ``e' E e`` along planned ``(Z, NU)`` for every rollout and step.

    ``FF[j, k]`` is an additive known input (curvature feedforward) applied to
    both the plan and the uncertain system; zero when omitted.
    """
    fn = _tube_rollouts_nb if (USE_NUMBA if use_numba is None else use_numba) else _tube_rollouts_np
    if FF is None:
        FF = np.zeros(Z[:, 1:].shape)
    args = [_f(a) for a in (Ad, Bu, Bw, Cy, Dyu, np.atleast_2d(K), np.atleast_2d(K_R), E, Z, NU, FF, X0, G)]
    return fn(*args)


integrate = integrate_numba if USE_NUMBA else integrate_numpy
slips = _slips
