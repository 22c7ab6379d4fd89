import json

import numpy as np
import pytest

from manikin.errors import SchemaError
from manikin.scenario import (
    WaypointSchedule,
    apply_overrides,
    bundled_scenario_path,
    load_scenario,
    parse_gain,
    scenario_from_dict,
)


MINIMAL_CHAIN = {
    "version": 1,
    "joints": [{"kind": "revolute", "axis": [0, 0, 1]}],
    "links": [{"parent": -1}],
    "damping": 1.0,
}


def _minimal(**extra):
    raw = {"version": 1, "name": "t", "chain": dict(MINIMAL_CHAIN),
           "dt": 0.01, "duration": 1.0}
    raw.update(extra)
    return raw


def test_minimal_scenario_loads():
    s = scenario_from_dict(_minimal())
    assert s.name == "t"
    assert s.chain.nv == 1
    assert s.config_hash


def test_missing_version_reports_path():
    raw = _minimal()
    del raw["version"]
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(raw)
    assert "$" in str(err.value)


def test_unknown_field_rejected():
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(typo_field=3))
    assert "typo_field" in str(err.value)


def test_duration_shorter_than_dt():
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(duration=0.001))
    assert "duration" in str(err.value)


def test_duplicate_task_names():
    task = {"name": "a", "frame": {"link": 0},
            "waypoints": [{"t": 0, "position": [0, 0, 0]}]}
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(tasks=[task, dict(task)]))
    assert "duplicate" in str(err.value)


def test_bad_obstacle_kind_path():
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(obstacles=[{"kind": "torus"}]))
    assert "obstacles" in str(err.value)


def test_halfspace_requires_normal_offset():
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(obstacles=[{"kind": "half_space"}]))
    assert "half_space" in str(err.value)


def test_gravity_dimension_checked():
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(gravity_torque=[1.0, 2.0]))
    assert "gravity" in str(err.value)


def test_parse_gain_forms():
    assert np.array_equal(parse_gain(3.0, 1.0), 3.0 * np.eye(6))
    assert np.array_equal(parse_gain([1, 2, 3, 4, 5, 6], 1.0), np.diag([1, 2, 3, 4, 5, 6]))
    full = np.arange(36.0).reshape(6, 6)
    full = 0.5 * (full + full.T)
    assert np.array_equal(parse_gain(full.tolist(), 1.0), full)
    with pytest.raises(SchemaError):
        parse_gain([1, 2, 3], 1.0)


def test_waypoint_interpolation():
    sched = WaypointSchedule.from_config([
        {"t": 1.0, "position": [0, 0, 0]},
        {"t": 3.0, "position": [2, 0, 0]},
    ])
    assert np.array_equal(sched.at(0.0)[0], [0, 0, 0])   # holds before first
    assert np.array_equal(sched.at(2.0)[0], [1, 0, 0])   # linear midpoint
    assert np.array_equal(sched.at(9.0)[0], [2, 0, 0])   # holds after last


def test_waypoint_orientation_slerp():
    sched = WaypointSchedule.from_config([
        {"t": 0.0, "position": [0, 0, 0], "rpy": [0, 0, 0]},
        {"t": 2.0, "position": [0, 0, 0], "rpy": [0, 0, np.pi / 2]},
    ])
    _, quat = sched.at(1.0)
    from manikin.se3 import quat_exp

    assert np.abs(quat - quat_exp(np.array([0, 0, np.pi / 4]))).max() < 1e-12


def test_waypoint_times_strictly_increasing():
    with pytest.raises(SchemaError):
        WaypointSchedule.from_config([
            {"t": 1.0, "position": [0, 0, 0]},
            {"t": 1.0, "position": [1, 0, 0]},
        ])


def test_overrides_dotted_paths():
    raw = {"a": {"b": [10, {"c": 1}]}, "dt": 0.01}
    out = apply_overrides(raw, ["a.b.1.c=5", "dt=0.02", 'a.b.0="x"'])
    assert out["a"]["b"][1]["c"] == 5
    assert out["dt"] == 0.02
    assert out["a"]["b"][0] == "x"
    assert raw["dt"] == 0.01  # original untouched


def test_override_bad_path():
    with pytest.raises(SchemaError):
        apply_overrides({"a": 1}, ["b.c=2"])
    with pytest.raises(SchemaError):
        apply_overrides({"a": 1}, ["no_equals_sign"])


def test_config_hash_tracks_overrides():
    path = bundled_scenario_path("table_lean")
    a = load_scenario(path)
    b = load_scenario(path, ["dt=0.005"])
    c = load_scenario(path)
    assert a.config_hash == c.config_hash
    assert a.config_hash != b.config_hash
    assert b.dt == 0.005


def test_bundled_scenarios_all_load():
    for name in ["table_lean", "drill_guided", "drill_free", "energy_drain"]:
        s = load_scenario(bundled_scenario_path(name))
        assert s.raw["version"] == 1
        assert s.duration >= s.dt


def test_internal_control_unknown_task():
    task = {"name": "a", "frame": {"link": 0},
            "waypoints": [{"t": 0, "position": [0, 0, 0]}]}
    with pytest.raises(SchemaError) as err:
        scenario_from_dict(_minimal(
            tasks=[task],
            internal_control={"enabled": True, "project_against": "ghost"},
        ))
    assert "project_against" in str(err.value)
