import numpy as np
import pytest

from tgcmpc import polytope as pt
from tgcmpc import rci
from tgcmpc.errors import EmptySetError, InvalidParameterError
from tgcmpc.polytope import Polytope
from tgcmpc.vehicle import table1_vehicle

SCALAR = (np.array([[1.0], [-1.0], [0.0], [0.0]]), np.array([0.0, 0.0, 1.0, -1.0]), np.ones(4))


@pytest.fixture(scope="module")
def rci10(vehicle):
    return rci.vehicle_rci(vehicle, 10.0)


def test_scalar_system_keeps_the_whole_box():
    res = rci.maximal_rci([(np.array([[0.5]]), np.array([[1.0]]))], *SCALAR)
    assert res.converged and res.iterations == 1
    assert pt.equals(res.set, Polytope.box([-1], [1]))


def test_uncertain_scalar_system():
    verts = [(np.array([[a]]), np.array([[1.0]])) for a in (1.5, 2.5)]
    res = rci.maximal_rci(verts, SCALAR[0], SCALAR[1], np.array([1.0, 1.0, 0.5, 0.5]))
    # at the fixed point R the worst vertex needs 2.5 R - 0.5 <= R
    assert pt.equals(res.set, Polytope.box([-1 / 3], [1 / 3]), 1e-6)


def test_unstabilizable_system_empties():
    with pytest.raises(EmptySetError):
        # x >= 0.5 forces 3 x + u >= 1.4, outside the state bound
        rci.maximal_rci([(np.array([[3.0]]), np.array([[1.0]]))], *SCALAR[:2], np.array([1.0, -0.5, 0.1, 0.1]))


def test_envelope_rows(vehicle):
    spec = rci.EnvelopeSpec.from_vehicle(vehicle, 12.0)
    H_x, H_u, g = rci.envelope_constraints(spec)
    tf, tr = vehicle.tires()
    np.testing.assert_allclose(H_x[:3], [[1, vehicle.a], [1, -vehicle.b], [0, 0]])
    np.testing.assert_allclose(H_u[:3, 0], [-12.0, 0.0, 1.0])
    np.testing.assert_allclose(g[:3], [12 * tf.alpha_peak, 12 * tr.alpha_peak, vehicle.delta_max])
    np.testing.assert_allclose(H_x[3:], -H_x[:3])
    np.testing.assert_allclose(H_u[3:], -H_u[:3])
    np.testing.assert_array_equal(g[:3], g[3:])
    assert np.all(H_x @ np.zeros(2) + H_u[:, 0] * 0 <= g)


def test_envelope_spec_validation():
    with pytest.raises(InvalidParameterError):
        rci.EnvelopeSpec(0.1, 0.1, 0.5, -1.0, 1.0, 1.0)


def test_one_step_oracle_inside_and_outside(vehicle, rci10, rng):
    R = rci10.set
    assert rci10.converged and rci10.monotone
    spec = rci.EnvelopeSpec.from_vehicle(vehicle, 10.0)
    H_x, H_u, g = rci.envelope_constraints(spec)
    verts = rci.lateral_vertices(vehicle, 10.0, 0.025)
    inside = pt.sample_uniform(R, 200, rng)
    assert all(rci.one_step_feasible(x, verts, R, H_x, H_u, g) for x in inside)
    outside = 1.05 * pt.sample_boundary(R, 200, rng, center=np.zeros(2))
    infeasible = sum(not rci.one_step_feasible(x, verts, R, H_x, H_u, g) for x in outside)
    assert infeasible >= 190


def test_rci_inside_state_constraints(vehicle, rci10):
    spec = rci.EnvelopeSpec.from_vehicle(vehicle, 10.0)
    H_x, H_u, g = rci.envelope_constraints(spec)
    Cx = pt.project(Polytope(np.hstack([H_x, H_u]), g), 2)
    assert pt.is_subset(rci10.set, Cx)
    assert rci10.sizes[0] >= 1


def test_rear_slip_row_is_a_facet(vehicle, rci10):
    assert rci.row_angle(rci10.set, [1.0, -vehicle.b]) < 1e-6
    assert rci.row_angle(rci10.set, [-1.0, vehicle.b]) < 1e-6
    spec = rci.EnvelopeSpec.from_vehicle(vehicle, 10.0)
    assert {"rear+", "rear-"} <= set(rci.active_rows(rci10.set, *rci.envelope_constraints(spec)))


def test_set_is_symmetric(rci10):
    V = pt.vertices_2d(rci10.set)
    assert np.all(rci10.set.contains(-V, tol=1e-7))


def test_beal_rmax_value(vehicle):
    assert rci.beal_rmax(vehicle, 0.8, 10.0) == pytest.approx(1.027, abs=1e-3)
    B = rci.beal_envelope(vehicle, 0.8, 10.0)
    assert B.n_constraints == 4
    V = pt.vertices_2d(B)
    assert np.all(B.contains(-V))
    with pytest.raises(InvalidParameterError):
        rci.beal_envelope(vehicle, 0.8, 0.0)


def test_proposed_set_reaches_higher_yaw_rate(vehicle, rci10):
    assert rci.max_abs_coordinate(rci10.set, 1) > rci.beal_rmax(vehicle, vehicle.mu, 10.0)


def test_actuator_limit_binds_only_at_low_speed():
    tight, free = table1_vehicle(delta_max=0.2), table1_vehicle(delta_max=50.0)
    low_t, low_f = rci.vehicle_rci(tight, 5.0).set, rci.vehicle_rci(free, 5.0).set
    assert pt.is_subset(low_t, low_f)
    assert pt.polygon_area(pt.vertices_2d(low_t)) < 0.8 * pt.polygon_area(pt.vertices_2d(low_f))
    assert pt.equals(rci.vehicle_rci(tight, 30.0).set, rci.vehicle_rci(free, 30.0).set, 1e-6)


def test_bank_of_one_speed(vehicle):
    bank, failures = rci.build_rci_bank(vehicle, [20.0])
    assert list(bank) == [20.0] and failures == {}
    with pytest.raises(InvalidParameterError):
        rci.build_rci_bank(vehicle, [])


def test_lift_to_tracking(rci10):
    L = rci.lift_to_tracking(rci10.set)
    assert L.dim == 4
    np.testing.assert_array_equal(L.H[:, :2], 0.0)
    assert L.contains(np.array([100.0, -3.0, 0.0, 0.0]))
