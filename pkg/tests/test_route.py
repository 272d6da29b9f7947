import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tgcmpc.errors import ConfigError, InvalidParameterError
from tgcmpc.route import EndOfRoute, Route, Segment, _wrap, frenet_errors, project, straight, two_left_turns


@pytest.fixture(scope="module")
def route():
    return Route([Segment(50, 0.0, 15), Segment(40, 0.02, 10), Segment(60, -0.01, 15)])


def test_frenet_examples(route):
    x, y, th = route.pose(70.0)
    assert frenet_errors((x, y, th), route, 70.0) == (pytest.approx(0.0, abs=1e-12), pytest.approx(0.0, abs=1e-12), 0.02)
    assert frenet_errors((10.0, 1.0, 0.0), straight(), 10.0) == (1.0, 0.0, 0.0)
    # right-continuous at a joint: the entered segment's curvature
    assert frenet_errors(route.pose(50.0), route, 50.0)[2] == 0.02
    assert route.curvature(90.0) == -0.01


def test_progress_outside_route(route):
    with pytest.raises(EndOfRoute):
        frenet_errors((0, 0, 0), route, route.length + 1)
    with pytest.raises(EndOfRoute):
        route.index(-0.1)


@given(st.floats(-50, 50))
def test_heading_wrap(a):
    w = _wrap(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9) and math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)


def test_pose_is_continuous_and_arcs_turn(route):
    for s in route.start[1:-1]:
        a, b = np.array(route.pose(s - 1e-7)), np.array(route.pose(s))
        np.testing.assert_allclose(a, b, atol=1e-6)
    assert route.pose(90.0)[2] == pytest.approx(0.8)


@given(st.floats(1, 149), st.floats(-2, 2))
def test_projection_recovers_progress(s, offset):
    r = Route([Segment(50, 0.0, 15), Segment(40, 0.02, 10), Segment(60, -0.01, 15)])
    x, y, th = r.pose(s)
    px, py = x - offset * math.sin(th), y + offset * math.cos(th)
    s_hat = project(r, px, py, s + 0.5)
    assert s_hat == pytest.approx(s, abs=1e-6)
    assert frenet_errors((px, py, th), r, s_hat)[0] == pytest.approx(offset, abs=1e-6)


def test_mirrored_route(route):
    m = route.mirrored()
    for s in (10.0, 60.0, 120.0):
        x, y, th = route.pose(s)
        np.testing.assert_allclose(m.pose(s), (x, -y, -th), atol=1e-12)


def test_two_left_turns_shape():
    r = two_left_turns()
    assert r.length == pytest.approx(750.0)
    kinds = [s.curvature for s in r.segments]
    assert kinds[0] == kinds[2] == kinds[4] == 0.0
    assert r.segments[3].curvature * r.segments[3].speed ** 2 == pytest.approx(8.0)
    assert r.segments[1].curvature * r.segments[1].speed ** 2 == pytest.approx(3.0)
    assert r.pose(r.length)[2] == pytest.approx(math.pi)
    with pytest.raises(InvalidParameterError):
        two_left_turns(length=200.0)


def test_speed_profile_ramps(route):
    v, dv = route.speed_ref(0.0)
    assert v == 15.0 and dv == 0.0
    # braking ramp ahead of the 10 m/s segment
    v, dv = route.speed_ref(45.0)
    assert v == pytest.approx(math.sqrt(100 + 2 * 4.0 * 5.0)) and dv < 0
    v, dv = route.speed_ref(60.0)
    assert v == 10.0
    v, dv = route.speed_ref(95.0)
    assert v == pytest.approx(math.sqrt(100 + 2 * 2.0 * 5.0)) and dv > 0


def test_preview_holds_last_segment(route):
    k = route.curvature_preview(140.0, [0.0, 5.0, 50.0])
    np.testing.assert_array_equal(k, [-0.01, -0.01, -0.01])


def test_json_round_trip(route, tmp_path):
    route.save(tmp_path / "r.json")
    r = Route.load(tmp_path / "r.json")
    assert r.to_list() == route.to_list()
    with pytest.raises(ConfigError):
        Route.from_list([{"length": 1.0}])


def test_invalid_segments():
    with pytest.raises(InvalidParameterError):
        Route([])
    with pytest.raises(InvalidParameterError):
        Route([Segment(-1.0, 0.0, 10.0)])
    with pytest.raises(InvalidParameterError):
        Route([Segment(1.0, 0.0, 0.0)])
