"""Scenario files: schema, validation, and parsing into engine objects.

A scenario bundles a chain, task targets with waypoint schedules (scripted
stand-ins for motion capture, with optional seeded operator jitter), guides,
obstacles, optional posture control, and solver settings. Files are JSON
with a required version field; validation errors carry the field path.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from manikin import chain as chain_mod
from manikin.chain import FrameRef, KinematicChain
from manikin.errors import SchemaError
from manikin.guides import GuideCoupling, VirtualMechanism
from manikin.se3 import Transform, quat_normalize, slerp

NAME_PATTERN = "^[A-Za-z0-9_.-]+$"

_FRAME = {
    "type": "object",
    "required": ["link"],
    "additionalProperties": False,
    "properties": {
        "link": {"type": "integer", "minimum": 0},
        "point": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
    },
}

_GAIN = {}  # scalar | 6-vector | 6x6 rows; checked structurally in code

_WAYPOINT = {
    "type": "object",
    "required": ["t", "position"],
    "additionalProperties": False,
    "properties": {
        "t": {"type": "number", "minimum": 0},
        "position": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "rpy": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "quaternion": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
    },
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["version", "name", "chain", "dt", "duration"],
    "additionalProperties": False,
    "properties": {
        "version": {"const": 1},
        "name": {"type": "string", "pattern": NAME_PATTERN},
        "description": {"type": "string"},
        "chain": {"type": ["string", "object"]},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "duration": {"type": "number", "exclusiveMinimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "beta_sq": {"type": ["number", "null"], "minimum": 0},
        "gravity_torque": {"type": ["array", "null"], "items": {"type": "number"}},
        "initial_q": {"type": "array", "items": {"type": "number"}},
        "tasks": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "frame", "waypoints"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": NAME_PATTERN},
                    "frame": _FRAME,
                    "stiffness": _GAIN,
                    "damping": _GAIN,
                    "waypoints": {"type": "array", "minItems": 1, "items": _WAYPOINT},
                    "noise": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "position": {"type": "number", "minimum": 0},
                            "rotation": {"type": "number", "minimum": 0},
                            "correlation_time": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                },
            },
        },
        "internal_control": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "alpha": {"type": "number", "minimum": 0},
                "q_ref": {"type": "array", "items": {"type": "number"}},
                "weights": {"type": ["array", "number"]},
                "project_against": {"type": ["string", "null"]},
            },
        },
        "guides": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["name", "chain", "tool", "coupling"],
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string", "pattern": NAME_PATTERN},
                    "chain": {"type": ["string", "object"]},
                    "tool": _FRAME,
                    "coupling": {
                        "type": "object",
                        "required": ["frame"],
                        "additionalProperties": False,
                        "properties": {
                            "frame": _FRAME,
                            "stiffness": _GAIN,
                            "damping": _GAIN,
                        },
                    },
                    "initial_q": {"type": ["array", "string"]},
                    "schedule": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["t", "on"],
                            "additionalProperties": False,
                            "properties": {"t": {"type": "number"}, "on": {"type": "boolean"}},
                        },
                    },
                },
            },
        },
        "obstacles": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["kind"],
                "additionalProperties": False,
                "properties": {
                    "kind": {"enum": ["half_space", "sphere"]},
                    "normal": {"type": "array", "items": {"type": "number"},
                               "minItems": 3, "maxItems": 3},
                    "offset": {"type": "number"},
                    "center": {"type": "array", "items": {"type": "number"},
                               "minItems": 3, "maxItems": 3},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                    "name": {"type": "string", "pattern": NAME_PATTERN},
                },
            },
        },
        "contact": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "margin": {"type": "number", "exclusiveMinimum": 0},
                "gamma": {"type": "number", "minimum": 0, "maximum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
            },
        },
        "counterexample": {
            "type": "object",
            "required": ["port", "w2"],
            "additionalProperties": False,
            "properties": {
                "port": _FRAME,
                "w2": {"type": "array", "items": {"type": "number"},
                       "minItems": 6, "maxItems": 6},
            },
        },
        "metrics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "axis_error": {
                    "type": "object",
                    "required": ["frame", "tool_axis", "ideal_axis"],
                    "additionalProperties": False,
                    "properties": {
                        "frame": _FRAME,
                        "tool_axis": {"type": "array", "items": {"type": "number"},
                                      "minItems": 3, "maxItems": 3},
                        "ideal_axis": {"type": "array", "items": {"type": "number"},
                                       "minItems": 3, "maxItems": 3},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "columns": {"type": ["string", "array"]},
            },
        },
    },
}


def parse_gain(value, default_scale: float) -> np.ndarray:
    """Gains accept scalar, 6-vector diagonal, or full 6x6 forms."""
    if value is None:
        value = default_scale
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.eye(6) * float(arr)
    if arr.shape == (6,):
        return np.diag(arr)
    if arr.shape == (6, 6):
        return arr
    raise SchemaError(f"gain must be a scalar, 6-vector, or 6x6 matrix; got shape {arr.shape}")


@dataclass(frozen=True)
class WaypointSchedule:
    """Piecewise-linear position / slerp orientation target schedule."""

    times: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray

    @staticmethod
    def from_config(waypoints) -> "WaypointSchedule":
        pts = sorted(waypoints, key=lambda wp: wp["t"])
        times = np.array([wp["t"] for wp in pts], dtype=float)
        if len(times) > 1 and np.any(np.diff(times) <= 0):
            raise SchemaError("waypoint times must be strictly increasing")
        positions = np.array([wp["position"] for wp in pts], dtype=float)
        quats = []
        for wp in pts:
            if "quaternion" in wp:
                quats.append(quat_normalize(np.asarray(wp["quaternion"], dtype=float)))
            elif "rpy" in wp:
                quats.append(chain_mod.se3.rot_to_quat(Transform.from_rpy(wp["rpy"], (0, 0, 0)).R))
            else:
                quats.append(np.array([1.0, 0.0, 0.0, 0.0]))
        return WaypointSchedule(times, positions, np.array(quats))

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        times = self.times
        if t <= times[0]:
            return self.positions[0], self.quaternions[0]
        if t >= times[-1]:
            return self.positions[-1], self.quaternions[-1]
        i = int(np.searchsorted(times, t, side="right")) - 1
        s = (t - times[i]) / (times[i + 1] - times[i])
        pos = (1.0 - s) * self.positions[i] + s * self.positions[i + 1]
        quat = slerp(self.quaternions[i], self.quaternions[i + 1], s)
        return pos, quat


@dataclass(frozen=True)
class NoiseConfig:
    position: float = 0.0
    rotation: float = 0.0
    correlation_time: float = 0.5


@dataclass(frozen=True)
class TaskConfig:
    name: str
    frame: FrameRef
    stiffness: np.ndarray
    damping: np.ndarray
    schedule: WaypointSchedule
    noise: NoiseConfig


@dataclass(frozen=True)
class GuideConfig:
    mechanism: VirtualMechanism
    initial_q: np.ndarray | None  # None => relax onto the manikin frame at load
    schedule: tuple  # ((t, on), ...) piecewise-constant


@dataclass(frozen=True)
class AxisMetric:
    frame: FrameRef
    tool_axis: np.ndarray
    ideal_axis: np.ndarray


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: engine objects plus the effective raw dict."""

    name: str
    chain: KinematicChain
    dt: float
    duration: float
    seed: int
    beta_sq: float | None
    tasks: tuple[TaskConfig, ...]
    guides: tuple[GuideConfig, ...]
    obstacles: tuple
    contact: dict
    internal: dict | None
    counterexample: dict | None
    axis_metric: AxisMetric | None
    gravity_torque: np.ndarray | None
    initial_q: np.ndarray | None
    output_columns: object
    raw: dict = field(repr=False)
    config_hash: str = ""


def _frame_ref(cfg) -> FrameRef:
    return FrameRef(cfg["link"], np.asarray(cfg.get("point", (0.0, 0.0, 0.0)), dtype=float))


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``key.path=value`` overrides; values parse as JSON, else strings."""
    raw = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise SchemaError(f"override {item!r} must look like key.path=value")
        path, _, text = item.partition("=")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        node = raw
        parts = path.split(".")
        for i, part in enumerate(parts[:-1]):
            key = int(part) if isinstance(node, list) else part
            try:
                node = node[key]
            except (KeyError, IndexError, TypeError):
                raise SchemaError(f"override path {path!r} has no element {part!r}") from None
        last = parts[-1]
        key = int(last) if isinstance(node, list) else last
        node[key] = value
    return raw


def _load_chain_field(value, base_dir: str) -> KinematicChain:
    if isinstance(value, str):
        return chain_mod.load_chain(os.path.join(base_dir, value))
    return chain_mod.chain_from_dict(value)


def scenario_from_dict(raw: dict, base_dir: str = ".") -> Scenario:
    import jsonschema

    try:
        jsonschema.validate(raw, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as err:
        raise SchemaError(f"scenario invalid at {err.json_path}: {err.message}") from None
    if raw["duration"] < raw["dt"]:
        raise SchemaError("scenario invalid at $.duration: duration must be at least dt")

    chain = _load_chain_field(raw["chain"], base_dir)

    tasks = []
    for cfg in raw.get("tasks", ()):
        noise_cfg = cfg.get("noise", {})
        tasks.append(
            TaskConfig(
                name=cfg["name"],
                frame=_frame_ref(cfg["frame"]),
                stiffness=parse_gain(cfg.get("stiffness"), 100.0),
                damping=parse_gain(cfg.get("damping"), 10.0),
                schedule=WaypointSchedule.from_config(cfg["waypoints"]),
                noise=NoiseConfig(
                    position=noise_cfg.get("position", 0.0),
                    rotation=noise_cfg.get("rotation", 0.0),
                    correlation_time=noise_cfg.get("correlation_time", 0.5),
                ),
            )
        )
    names = [t.name for t in tasks]
    if len(set(names)) != len(names):
        raise SchemaError("scenario invalid at $.tasks: duplicate task names")

    guides = []
    for cfg in raw.get("guides", ()):
        gchain = _load_chain_field(cfg["chain"], base_dir)
        coupling = GuideCoupling(
            manikin_frame=_frame_ref(cfg["coupling"]["frame"]),
            stiffness=parse_gain(cfg["coupling"].get("stiffness"), 1e3),
            damping=parse_gain(cfg["coupling"].get("damping"), 50.0),
        )
        mech = VirtualMechanism(gchain, _frame_ref(cfg["tool"]), coupling, cfg["name"])
        init = cfg.get("initial_q", "auto")
        initial_q = None if init == "auto" else np.asarray(init, dtype=float)
        schedule = tuple((s["t"], s["on"]) for s in cfg.get("schedule", [{"t": 0.0, "on": True}]))
        guides.append(GuideConfig(mech, initial_q, schedule))
    gnames = [g.mechanism.name for g in guides]
    if len(set(gnames)) != len(gnames):
        raise SchemaError("scenario invalid at $.guides: duplicate guide names")

    obstacles = []
    from manikin.constraints import HalfSpace, Sphere

    for i, cfg in enumerate(raw.get("obstacles", ())):
        name = cfg.get("name", f"obstacle{i}")
        if cfg["kind"] == "half_space":
            if "normal" not in cfg or "offset" not in cfg:
                raise SchemaError(
                    f"scenario invalid at $.obstacles[{i}]: half_space needs normal and offset"
                )
            normal = np.asarray(cfg["normal"], dtype=float)
            norm = np.linalg.norm(normal)
            if norm == 0:
                raise SchemaError(f"scenario invalid at $.obstacles[{i}]: zero normal")
            obstacles.append(HalfSpace(normal / norm, cfg["offset"], name))
        else:
            if "center" not in cfg or "radius" not in cfg:
                raise SchemaError(
                    f"scenario invalid at $.obstacles[{i}]: sphere needs center and radius"
                )
            obstacles.append(Sphere(np.asarray(cfg["center"], dtype=float), cfg["radius"], name))

    contact = {
        "margin": 0.05,
        "gamma": 0.2,
        "tol": 1e-10,
        "max_iter": 2000,
    }
    contact.update(raw.get("contact", {}))

    internal = raw.get("internal_control")
    if internal is not None and not internal.get("enabled", False):
        internal = None
    if internal is not None and tasks:
        target = internal.get("project_against", tasks[0].name)
        if target is not None and target not in names:
            raise SchemaError(
                f"scenario invalid at $.internal_control.project_against: unknown task {target!r}"
            )

    metric = None
    if "axis_error" in raw.get("metrics", {}):
        mcfg = raw["metrics"]["axis_error"]
        tool_axis = np.asarray(mcfg["tool_axis"], dtype=float)
        ideal_axis = np.asarray(mcfg["ideal_axis"], dtype=float)
        for label, v in (("tool_axis", tool_axis), ("ideal_axis", ideal_axis)):
            if np.linalg.norm(v) == 0:
                raise SchemaError(f"scenario invalid at $.metrics.axis_error.{label}: zero axis")
        metric = AxisMetric(
            _frame_ref(mcfg["frame"]),
            tool_axis / np.linalg.norm(tool_axis),
            ideal_axis / np.linalg.norm(ideal_axis),
        )

    gravity = raw.get("gravity_torque")
    if gravity is not None:
        gravity = np.asarray(gravity, dtype=float)
        if gravity.shape != (chain.nv,):
            raise SchemaError(
                f"scenario invalid at $.gravity_torque: needs {chain.nv} entries"
            )

    initial_q = raw.get("initial_q")
    if initial_q is not None:
        initial_q = np.asarray(initial_q, dtype=float)
        if initial_q.shape != (chain.nq,):
            raise SchemaError(f"scenario invalid at $.initial_q: needs {chain.nq} entries")

    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return Scenario(
        name=raw["name"],
        chain=chain,
        dt=float(raw["dt"]),
        duration=float(raw["duration"]),
        seed=int(raw.get("seed", 0)),
        beta_sq=raw.get("beta_sq"),
        tasks=tuple(tasks),
        guides=tuple(guides),
        obstacles=tuple(obstacles),
        contact=contact,
        internal=internal,
        counterexample=raw.get("counterexample"),
        axis_metric=metric,
        gravity_torque=gravity,
        initial_q=initial_q,
        output_columns=raw.get("output", {}).get("columns", "all"),
        raw=raw,
        config_hash=hashlib.sha256(canonical).hexdigest()[:12],
    )


def load_scenario(path, overrides=()) -> Scenario:
    with open(path) as fh:
        raw = json.load(fh)
    raw = apply_overrides(raw, overrides)
    return scenario_from_dict(raw, base_dir=os.path.dirname(os.path.abspath(path)))


def bundled_scenario_path(name: str) -> str:
    """Path of a scenario shipped with the package (name without .json)."""
    here = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(here, "scenarios", f"{name}.json")
