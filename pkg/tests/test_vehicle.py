import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgcmpc import kernels
from tgcmpc.errors import InvalidParameterError, LowSpeedError, SpeedOutOfRangeError
from tgcmpc.tire import conic_bound_check, lateral_force
from tgcmpc.vehicle import (
    NonlinearState,
    UncertainLinearModel,
    build_uncertain_model,
    discretize,
    enumerate_vertices,
    nonlinear_derivative,
    slip_angles,
    table1_vehicle,
)


def certain(td):
    return replace(td, C_bar=td.C, dC=0.0)


def test_straight_running_is_an_equilibrium(vehicle):
    assert nonlinear_derivative(vehicle, NonlinearState(20.0), 0.0, 0.0) == (0.0, 0.0, 0.0)


def test_slip_angle_examples(vehicle):
    assert slip_angles(vehicle, NonlinearState(10.0), 0.0) == (0.0, 0.0)
    af, ar = slip_angles(vehicle, NonlinearState(10.0), 0.05)
    assert (af, ar) == (pytest.approx(-0.05), 0.0)
    af, ar = slip_angles(vehicle, NonlinearState(10.0, vy=1.0, r=0.2), 0.0)
    assert af == pytest.approx(math.atan(1.214 / 10), abs=1e-12)
    assert ar == pytest.approx(math.atan(0.72 / 10), abs=1e-12)
    assert af == pytest.approx(0.12081, abs=1e-5)
    assert ar == pytest.approx(0.07188, abs=1e-5)


def test_low_speed_guard(vehicle):
    with pytest.raises(LowSpeedError):
        slip_angles(vehicle, NonlinearState(0.05), 0.0)


def test_normal_load_must_match_static_split(vehicle):
    with pytest.raises(InvalidParameterError):
        replace(vehicle, front=replace(vehicle.front, Fz=vehicle.front.Fz * 1.01))


@given(st.floats(-2, 2), st.floats(-0.5, 0.5), st.floats(-0.1, 0.1))
def test_mirror_symmetry(vy, r, delta):
    p = table1_vehicle()
    a = nonlinear_derivative(p, NonlinearState(15.0, vy, r), delta, 300.0)
    b = nonlinear_derivative(p, NonlinearState(15.0, -vy, -r), -delta, 300.0)
    np.testing.assert_allclose(b, (a[0], -a[1], -a[2]), atol=1e-9)


def test_model_blocks(vehicle):
    tf, tr = vehicle.tires()
    for vx in (3.0, 12.5, 40.0):
        mdl = build_uncertain_model(vehicle, vx)
        assert mdl.A[0, 1] == vx
        np.testing.assert_array_equal(mdl.Br[:, 0], [0.0, -vx, 0.0, 0.0])
        np.testing.assert_allclose(mdl.Cy[0], [0, 0, tf.dC, vehicle.a * tf.dC])
        np.testing.assert_allclose(mdl.Cy[1], [0, 0, -tr.dC, vehicle.b * tr.dC])
        assert mdl.Dyu[0, 0] == -tf.dC and mdl.Dyu[1, 0] == 0.0
        assert mdl.state_order == "e_y,e_psi,v_y,r"


def test_speed_floor(vehicle):
    with pytest.raises(SpeedOutOfRangeError):
        build_uncertain_model(vehicle, 2.9)


def test_zero_cone_width_removes_uncertainty(vehicle, rng):
    tf, tr = (certain(t) for t in vehicle.tires())
    mdl = build_uncertain_model(vehicle, 15.0, tf, tr)
    for _ in range(20):
        x, u, D = rng.normal(size=4), rng.normal(size=1), np.diag(rng.uniform(-1, 1, 2))
        np.testing.assert_allclose(mdl.Bw @ D @ (mdl.Cy @ x + mdl.Dyu @ u), 0.0, atol=0)
    verts = enumerate_vertices(mdl)
    for A, B in verts[1:]:
        np.testing.assert_array_equal(A, verts[0][0])
        np.testing.assert_array_equal(B, verts[0][1])


def test_extreme_vertices_are_certain_models(vehicle):
    tf, tr = vehicle.tires()
    vx = 15.0
    verts = enumerate_vertices(build_uncertain_model(vehicle, vx, consistent_dyu=True))
    hi = build_uncertain_model(vehicle, vx, certain(tf), certain(tr))
    lo = build_uncertain_model(vehicle, vx, replace(tf, C_bar=tf.C_peak, dC=0.0), replace(tr, C_bar=tr.C_peak, dC=0.0))
    np.testing.assert_allclose(verts[3][0], hi.A, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(verts[3][1], hi.Bu, rtol=1e-12)
    np.testing.assert_allclose(verts[0][0], lo.A, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(verts[0][1], lo.Bu, rtol=1e-12)
    # The printed steering entry understates the input-channel spread by vx.
    default = enumerate_vertices(build_uncertain_model(vehicle, vx))
    np.testing.assert_allclose(default[3][0], hi.A, rtol=1e-12, atol=1e-12)
    assert not np.allclose(default[3][1], hi.Bu)


def test_uncertain_model_is_bilinear_in_delta(vehicle, rng):
    mdl = build_uncertain_model(vehicle, 20.0)
    V = enumerate_vertices(mdl)  # --, -+, +-, ++
    for _ in range(20):
        gf, gr = rng.uniform(-1, 1, 2)
        A, B = mdl.certain_matrices([gf, gr])
        wf, wr = (1 + gf) / 2, (1 + gr) / 2
        w = [(1 - wf) * (1 - wr), (1 - wf) * wr, wf * (1 - wr), wf * wr]
        np.testing.assert_allclose(A, sum(wi * Vi[0] for wi, Vi in zip(w, V)), atol=1e-12)
        np.testing.assert_allclose(B, sum(wi * Vi[1] for wi, Vi in zip(w, V)), atol=1e-12)


@settings(max_examples=200)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(5, 40))
def test_cone_covers_tire_forces_at_model_level(svy, sr, sd, vx):
    p = table1_vehicle()
    tf, tr = p.tires()
    vy, r, delta = 0.05 * vx * svy, 0.3 * sr, 0.05 * sd
    af = (vy + p.a * r) / vx - delta
    ar = (vy - p.b * r) / vx
    if not (1e-6 < abs(af) < tf.alpha_peak and 1e-6 < abs(ar) < tr.alpha_peak):
        return
    g = [conic_bound_check(tf, af), conic_bound_check(tr, ar)]
    assert max(abs(v) for v in g) <= 1 + 1e-9
    A, B = build_uncertain_model(p, vx, consistent_dyu=True).certain_matrices(g)
    xdot = A @ [0.0, 0.0, vy, r] + B[:, 0] * delta
    Ff, Fr = lateral_force(tf, af), lateral_force(tr, ar)
    np.testing.assert_allclose(xdot[2], (Ff + Fr) / p.m - r * vx, rtol=1e-9, atol=1e-9)
    np.testing.assert_allclose(xdot[3], (p.a * Ff - p.b * Fr) / p.Iz, rtol=1e-9, atol=1e-9)


def test_small_angle_slip_error_below_one_percent():
    x = np.linspace(1e-6, 0.15, 1000)
    assert np.max(np.abs(np.arctan(x) - x) / np.arctan(x)) < 0.01


def test_discretize_nilpotent_case():
    mdl = UncertainLinearModel(
        A=np.zeros((4, 4)), Bu=np.ones((4, 1)), Bw=np.zeros((4, 2)), Br=np.zeros((4, 1)),
        Cy=np.zeros((2, 4)), Dyu=np.zeros((2, 1)), vx_design=1.0,
    )
    d = discretize(mdl, 0.3)
    np.testing.assert_allclose(d.Ad, np.eye(4), atol=1e-15)
    np.testing.assert_allclose(d.Bdu, 0.3 * np.ones((4, 1)), rtol=1e-14)


def test_discretize_first_order_consistency(vehicle):
    mdl = build_uncertain_model(vehicle, 10.0)
    Ts = 1e-5
    d = discretize(mdl, Ts)
    assert np.linalg.norm(d.Ad - (np.eye(4) + mdl.A * Ts)) <= 10 * (np.linalg.norm(mdl.A) * Ts) ** 2
    np.testing.assert_array_equal(d.Cy, mdl.Cy)


def test_discretize_against_rk4(vehicle, rng):
    mdl = build_uncertain_model(vehicle, 10.0)
    d = discretize(mdl, 0.025)
    A, Bu = mdl.A, mdl.Bu[:, 0]
    for _ in range(5):
        x0, u = rng.normal(size=4), rng.normal() * 0.05
        f = lambda x: A @ x + Bu * u  # noqa: E731
        x, h = x0.copy(), 0.025 / 2000
        for _ in range(2000):
            k1 = f(x)
            k2 = f(x + h / 2 * k1)
            k3 = f(x + h / 2 * k2)
            k4 = f(x + h * k3)
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        assert np.linalg.norm(d.Ad @ x0 + d.Bdu[:, 0] * u - x) < 1e-9


def test_discretize_semigroup(vehicle, rng):
    mdl = build_uncertain_model(vehicle, 25.0)
    d1, d5 = discretize(mdl, 0.025), discretize(mdl, 0.125)
    x0, u, k = rng.normal(size=4), 0.02, 0.01
    x = x0.copy()
    for _ in range(5):
        x = d1.Ad @ x + d1.Bdu[:, 0] * u + d1.Bdr[:, 0] * k
    np.testing.assert_allclose(x, d5.Ad @ x0 + d5.Bdu[:, 0] * u + d5.Bdr[:, 0] * k, atol=1e-9)


def test_discretize_rejects_nonpositive_step(vehicle):
    with pytest.raises(InvalidParameterError):
        discretize(build_uncertain_model(vehicle, 10.0), 0.0)


def test_kinetic_energy_never_grows_without_inputs(vehicle):
    veh = kernels.pack_vehicle(vehicle)
    s = np.array([20.0, 1.5, 0.6, 0.0, 0.0, 0.0])

    def energy(s):
        return 0.5 * vehicle.m * (s[0] ** 2 + s[1] ** 2) + 0.5 * vehicle.Iz * s[2] ** 2

    e = [energy(s)]
    for _ in range(300):
        kernels.integrate(s, veh, 0.0, 0.0, 0.0, 0.0, 0.001, 10, 0.1)
        e.append(energy(s))
    assert np.all(np.diff(e) <= 1e-9 * e[0])
    assert e[-1] < e[0]


def test_numpy_and_numba_truth_agree(vehicle):
    veh = kernels.pack_vehicle(vehicle)
    a = np.array([18.0, 0.4, 0.3, 1.0, 2.0, 0.1])
    b = a.copy()
    kernels.integrate_numpy(a, veh, 0.05, 800.0, 10.0, 5.0, 0.001, 200, 0.1)
    kernels.integrate_numba(b, veh, 0.05, 800.0, 10.0, 5.0, 0.001, 200, 0.1)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_truth_kernel_matches_reference_derivative(vehicle):
    veh = kernels.pack_vehicle(vehicle)
    s = np.array([15.0, 0.3, 0.2, 0.0, 0.0, 0.0])
    out = np.empty(6)
    kernels._deriv(s, veh, 0.04, 500.0, 0.0, 0.0, out)
    ref = nonlinear_derivative(vehicle, NonlinearState(15.0, 0.3, 0.2), 0.04, 500.0)
    np.testing.assert_allclose(out[:3], ref, rtol=1e-12)
