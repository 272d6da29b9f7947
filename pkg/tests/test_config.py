import json
import math

import pytest

from tgcmpc.config import Config, default_config, parse_speeds
from tgcmpc.errors import ConfigError


def test_defaults_build_everything():
    cfg = default_config()
    p = cfg.vehicle()
    assert p.delta_max == 0.5
    assert cfg.speeds() == [float(v) for v in range(7, 41)]
    assert cfg.route().segments
    assert cfg.sim_config().Ts == cfg.data["mpc"]["Ts"]
    assert cfg.weights().W_imf == pytest.approx(0.087)


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": {}},
        {"vehicle": {"mass": 1.0}},
        {"vehicle": {"m": float("nan")}},
        {"vehicle": {"m": -1.0}},
        {"vehicle": {"m": "heavy"}},
        {"vehicle": {"m": True}},
        {"tires": {"mu": math.inf}},
        {"cost": {"W_imf": -0.1}},
        {"mpc": {"horizon": 0}},
        {"mpc": {"horizon": 2.5}},
        {"mpc": {"speeds": []}},
        {"mpc": {"speeds": "  "}},
        {"route": {"kind": "figure_eight"}},
        {"sim": {"warp_factor": 2}},
        {"sim": {"dt_truth": 0.007}},
        {"tires": {"R_mu": 1.5}},
    ],
)
def test_rejects(data):
    with pytest.raises(ConfigError):
        Config(data)


def test_root_must_be_object():
    with pytest.raises(ConfigError):
        Config([1, 2])


def test_overrides_merge(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"vehicle": {"delta_max": 0.3}, "mpc": {"speeds": [20, 10]}, "route": {"kind": "straight", "length": 50.0}}))
    cfg = Config.load(path)
    assert cfg.vehicle().delta_max == 0.3
    assert cfg.vehicle().m == default_config().vehicle().m
    assert cfg.speeds() == [10.0, 20.0]
    assert cfg.route().length == pytest.approx(50.0)


def test_bad_files(tmp_path):
    with pytest.raises(ConfigError):
        Config.load(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        Config.load(bad)


def test_route_bad_arguments():
    cfg = Config({"route": {"kind": "straight", "curviness": 3}})
    with pytest.raises(ConfigError):
        cfg.route()


@pytest.mark.parametrize(
    "spec, expected",
    [
        ("10,15,20", [10.0, 15.0, 20.0]),
        ("20, 10", [10.0, 20.0]),
        ("7:10:1", [7.0, 8.0, 9.0, 10.0]),
        ("7:8", [7.0, 8.0]),
        ("5:6:0.5", [5.0, 5.5, 6.0]),
        ({"start": 1, "stop": 1.9, "step": 0.3}, [1.0, 1.3, 1.6, 1.9]),
        ([3], [3.0]),
    ],
)
def test_parse_speeds(spec, expected):
    assert parse_speeds(spec) == pytest.approx(expected)


@pytest.mark.parametrize(
    "spec", ["", "a,b", "10:5", "1:2:0", "1:x", [], [0.0], [-3.0], [10, 10], {"start": 1}, [float("nan")], 7]
)
def test_parse_speeds_rejects(spec):
    with pytest.raises(ConfigError):
        parse_speeds(spec)
