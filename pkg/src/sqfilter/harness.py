"""Kinematic simulation harness: scripted obstacles, scripted nominal
controllers, forward-Euler integration of the filtered command, and run
metrics.

Scenario files are JSON; see :func:`scenario_from_dict` for the schema.
Obstacle motion scripts produce poses together with their exact chart rates
(derivatives of the pose 6-vector), which is what the filter's obstacle
terms consume.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .filter import FilterConfig, SafetyFilter
from .geometry import Pose, Superquadric
from .kinematics import (
    ObstacleState,
    RobotModel,
    ee_jacobian,
    forward_kinematics,
    planar_2r_model,
    robot_from_json,
    seven_dof_model,
)

__all__ = [
    "Scenario",
    "RunMetrics",
    "dynamic_obstacle_script",
    "build_basket",
    "insertion_scenario",
    "scenario_from_dict",
    "scenario_from_json",
    "load_scenario",
    "run",
    "write_cycle_log",
]

_BUILTIN_ROBOTS = {
    "seven_dof": seven_dof_model,
    "planar_2r": planar_2r_model,
}


# ---------------------------------------------------------------------------
# Obstacle motion scripts
# ---------------------------------------------------------------------------


def dynamic_obstacle_script(kind: str, params: dict) -> Callable[[float], Tuple[Pose, np.ndarray]]:
    """Time-parameterized pose with analytically consistent chart rate.

    kinds:
      static   {pose}
      sinusoid {pose, amplitude: 6-vector, frequency: Hz, phase: rad}
      waypoint {times: [...], poses: [6-vector, ...]}  (piecewise linear)
    """
    if kind == "static":
        pose = _pose_from(params["pose"])
        zero = np.zeros(6)

        def static(t: float):
            return pose, zero

        return static

    if kind == "sinusoid":
        x0 = _pose_from(params["pose"]).as_vector()
        amp = np.asarray(params["amplitude"], dtype=float).reshape(6)
        freq = float(params["frequency"])
        phase = float(params.get("phase", 0.0))
        w = 2.0 * math.pi * freq

        def sinusoid(t: float):
            s = math.sin(w * t + phase)
            c = math.cos(w * t + phase)
            return Pose.from_vector(x0 + amp * s), amp * (w * c)

        return sinusoid

    if kind == "waypoint":
        times = np.asarray(params["times"], dtype=float)
        poses = np.asarray(params["poses"], dtype=float)
        if poses.shape != (times.shape[0], 6) or times.shape[0] < 2:
            raise ValueError("waypoint script needs >= 2 poses of 6 numbers")
        if np.any(np.diff(times) <= 0):
            raise ValueError("waypoint times must be increasing")

        def waypoint(t: float):
            if t <= times[0]:
                return Pose.from_vector(poses[0]), np.zeros(6)
            if t >= times[-1]:
                return Pose.from_vector(poses[-1]), np.zeros(6)
            k = int(np.searchsorted(times, t, side="right") - 1)
            dt = times[k + 1] - times[k]
            rate = (poses[k + 1] - poses[k]) / dt
            x = poses[k] + rate * (t - times[k])
            return Pose.from_vector(x), rate

        return waypoint

    raise ValueError(f"unknown obstacle script kind {kind!r}")


def _pose_from(d: dict) -> Pose:
    return Pose.from_axis_angle(np.asarray(d["t"], dtype=float),
                                np.asarray(d.get("aa", [0, 0, 0]), dtype=float))


def _pose_dict(center, aa=(0.0, 0.0, 0.0)) -> dict:
    return {"t": list(map(float, center)), "aa": list(map(float, aa))}


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass
class ScriptedObstacle:
    sq: Superquadric
    script: Callable[[float], Tuple[Pose, np.ndarray]]

    def state(self, t: float) -> ObstacleState:
        pose, rate = self.script(t)
        return ObstacleState(self.sq, pose, rate)


@dataclass
class Scenario:
    name: str
    model: RobotModel
    q0: np.ndarray
    obstacles: List[ScriptedObstacle]
    controller: dict
    duration: float
    period: float = 0.01
    seed: int = 0
    filter_overrides: dict = field(default_factory=dict)

    def filter_config(self) -> FilterConfig:
        return FilterConfig(**self.filter_overrides)


@dataclass
class RunMetrics:
    d_min: float
    d_min_env: float
    d_min_self: float
    t_end: float
    intervention_ratio: float
    violations: int
    halted: bool
    cycles: int
    mean_cycle_ms: float
    max_cycle_ms: float

    def to_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        return {k: clean(v) for k, v in dataclasses.asdict(self).items()}


# ---------------------------------------------------------------------------
# Basket world
# ---------------------------------------------------------------------------


def build_basket(
    l: float,
    center: Sequence[float] = (0.45, 0.0, 0.0),
    thickness: float = 0.02,
    height: float = 0.15,
) -> List[dict]:
    """Open-top box with inner side lengths l x l/2: four walls plus a floor.
    Returns obstacle dicts (static scripts) with the floor top at center z."""
    if l <= 0:
        raise ValueError("basket side length must be positive")
    cx, cy, cz = map(float, center)
    ht = thickness / 2.0
    hz = height / 2.0
    wall_e = (0.2, 0.2)
    out: List[dict] = []

    def box(a, pose_center):
        return {
            "a": list(map(float, a)),
            "e": list(wall_e),
            "script": {"kind": "static", "pose": _pose_dict(pose_center)},
        }

    # floor (top face at z = cz)
    out.append(box((l / 2 + thickness, l / 4 + thickness, ht),
                   (cx, cy, cz - ht)))
    zc = cz + hz
    # walls normal to x at inner faces x = cx +/- l/2
    for sgn in (+1, -1):
        out.append(box((ht, l / 4 + thickness, hz),
                       (cx + sgn * (l / 2 + ht), cy, zc)))
    # walls normal to y at inner faces y = cy +/- l/4
    for sgn in (+1, -1):
        out.append(box((l / 2 + thickness, ht, hz),
                       (cx, cy + sgn * (l / 4 + ht), zc)))
    return out


def insertion_scenario(
    l: float,
    margin: float,
    name: Optional[str] = None,
    seed: int = 0,
    center: Sequence[float] = (0.47, 0.06, 0.1),
    duration: float = 2.0,
    aggressive: bool = True,
) -> dict:
    """Scenario dict: scripted aggressive insertion of the EE into a basket
    whose pose is randomized per seed in a +/-0.05 m box.

    The start configuration keeps manipulability near its workspace maximum
    (~0.09) so the barrier on mu does not dominate the run; collision rows
    are then the active constraints during descent.
    """
    return {
        "name": name or f"basket_l{int(round(l * 100)):03d}",
        "robot": "seven_dof",
        "q0": [-1.67, -1.22, 1.24, -1.98, 0.77, 1.14, -0.08],
        "duration": duration,
        "period": 0.01,
        "seed": seed,
        "filter": {"margin": margin, "mesh_n": 24},
        "basket": {"l": l, "center": list(map(float, center)),
                   "randomize": 0.05},
        "controller": {
            "kind": "insertion",
            "center": list(map(float, center)),
            "l": l,
            "descend_speed": 0.5,
            "wiggle": 0.3 * l if aggressive else 0.0,
        },
        "obstacles": [],
    }


# ---------------------------------------------------------------------------
# Scenario loading
# ---------------------------------------------------------------------------


def scenario_from_dict(doc: dict, base_dir: Optional[Path] = None) -> Scenario:
    robot = doc.get("robot", "seven_dof")
    if robot in _BUILTIN_ROBOTS:
        model = _BUILTIN_ROBOTS[robot]()
    else:
        path = Path(robot)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        model = robot_from_json(path.read_text())

    seed = int(doc.get("seed", 0))
    rng = np.random.default_rng(seed)

    obstacle_docs = list(doc.get("obstacles", []))
    if "basket" in doc:
        b = doc["basket"]
        center = np.asarray(b["center"], dtype=float)
        jitter = float(b.get("randomize", 0.0))
        if jitter > 0:
            center = center + rng.uniform(-jitter, jitter, 3) * np.array([1, 1, 0])
        obstacle_docs.extend(build_basket(
            float(b["l"]), center,
            thickness=float(b.get("thickness", 0.02)),
            height=float(b.get("height", 0.15)),
        ))

    obstacles = [
        ScriptedObstacle(
            Superquadric(*o["a"], *o["e"]),
            dynamic_obstacle_script(o["script"]["kind"], o["script"]),
        )
        for o in obstacle_docs
    ]
    return Scenario(
        name=doc.get("name", "scenario"),
        model=model,
        q0=np.asarray(doc["q0"], dtype=float),
        obstacles=obstacles,
        controller=dict(doc.get("controller", {"kind": "hold"})),
        duration=float(doc["duration"]),
        period=float(doc.get("period", 0.01)),
        seed=seed,
        filter_overrides=dict(doc.get("filter", {})),
    )


def scenario_from_json(text: str, base_dir: Optional[Path] = None) -> Scenario:
    return scenario_from_dict(json.loads(text), base_dir)


def load_scenario(path) -> Scenario:
    path = Path(path)
    return scenario_from_json(path.read_text(), base_dir=path.parent)


# ---------------------------------------------------------------------------
# Nominal controllers
# ---------------------------------------------------------------------------


def _dls(J: np.ndarray, twist: np.ndarray, damping: float = 1e-3) -> np.ndarray:
    """Damped least-squares joint velocity for a 6-vector task twist."""
    JT = J.T
    return JT @ np.linalg.solve(J @ JT + damping * np.eye(J.shape[0]), twist)


def make_controller(spec: dict, model: RobotModel):
    """Returns u_cmd(t, q) plus a completion predicate done(t, q)."""
    kind = spec.get("kind", "hold")

    if kind == "hold":
        return (lambda t, q: np.zeros(model.n)), (lambda t, q: False)

    if kind == "twist_script":
        segments = sorted(spec["segments"], key=lambda s: s[0])

        def u_twist(t: float, q: np.ndarray) -> np.ndarray:
            twist = np.zeros(6)
            for t0, tw in segments:
                if t >= t0:
                    twist = np.asarray(tw, dtype=float)
            return _clip(_dls(ee_jacobian(model, q), twist), model)

        return u_twist, (lambda t, q: False)

    if kind == "servo":
        goal = np.asarray(spec["goal"], dtype=float)
        gain = float(spec.get("gain", 2.0))
        tol = float(spec.get("tol", 0.01))

        def ee_pos(q):
            links, _ = forward_kinematics(model, q)
            return (links[-1] @ model.ee_offset).t

        def u_servo(t: float, q: np.ndarray) -> np.ndarray:
            err = goal - ee_pos(q)
            twist = np.concatenate([gain * err, np.zeros(3)])
            return _clip(_dls(ee_jacobian(model, q), twist), model)

        return u_servo, (lambda t, q: bool(np.linalg.norm(goal - ee_pos(q)) < tol))

    if kind == "insertion":
        center = np.asarray(spec["center"], dtype=float)
        l = float(spec["l"])
        speed = float(spec.get("descend_speed", 0.5))
        wiggle = float(spec.get("wiggle", 0.0))
        hover = center + np.array([0.0, 0.0, 0.28])
        target_z = center[2] + 0.06  # below the wall tops

        def ee_pos(q):
            links, _ = forward_kinematics(model, q)
            return (links[-1] @ model.ee_offset).t

        def u_insert(t: float, q: np.ndarray) -> np.ndarray:
            p = ee_pos(q)
            if np.linalg.norm(p[:2] - hover[:2]) > 0.02 and p[2] > hover[2] - 0.05:
                # phase 1: servo above the nominal opening
                twist = np.concatenate([2.0 * (hover - p), np.zeros(3)])
            else:
                # phase 2: aggressive descent with lateral wiggle
                v = np.array([
                    wiggle * math.sin(2.0 * math.pi * 1.5 * t),
                    0.5 * wiggle * math.cos(2.0 * math.pi * 1.1 * t),
                    -speed,
                ])
                if p[2] <= target_z:
                    v[2] = 0.0
                twist = np.concatenate([v, np.zeros(3)])
            return _clip(_dls(ee_jacobian(model, q), twist), model)

        return u_insert, (lambda t, q: bool(ee_pos(q)[2] <= target_z))

    raise ValueError(f"unknown controller kind {kind!r}")


def _clip(u: np.ndarray, model: RobotModel) -> np.ndarray:
    return np.clip(u, -model.velocity_limits, model.velocity_limits)


# ---------------------------------------------------------------------------
# Run loop
# ---------------------------------------------------------------------------


def run(scenario: Scenario, filter_on: bool = True,
        progress: Optional[Callable[[int, dict], None]] = None):
    """Simulate the scenario; returns (RunMetrics, cycle log list)."""
    cfg = scenario.filter_config()
    filt = SafetyFilter(scenario.model, cfg)
    controller, done = make_controller(scenario.controller, scenario.model)

    q = scenario.q0.astype(float).copy()
    dt = scenario.period
    n_cycles = int(round(scenario.duration / dt))
    log: List[dict] = []
    d_min_env = d_min_self = math.inf
    interventions = 0
    violations = 0
    halted = False
    t_end = scenario.duration
    cycle_ms: List[float] = []

    for k in range(n_cycles):
        t = k * dt
        tick0 = time.perf_counter()
        obstacles = [o.state(t) for o in scenario.obstacles]
        u_cmd = controller(t, q)
        res = filt.step(q, obstacles, u_cmd)
        u = res.u_star if filter_on else u_cmd
        if not filter_on:
            filt.u_prev = u_cmd.copy()
        cycle_ms.append((time.perf_counter() - tick0) * 1e3)

        d_env = res.d_min.get("env", math.inf)
        d_self = res.d_min.get("self", math.inf)
        d_min_env = min(d_min_env, d_env)
        d_min_self = min(d_min_self, d_self)
        if np.linalg.norm(u - u_cmd) > 1e-6:
            interventions += 1
        if min(d_env, d_self) < 0.0:
            violations += 1

        record = {
            "t": round(t, 9),
            "q": q.tolist(),
            "u_cmd": u_cmd.tolist(),
            "u_star": u.tolist(),
            "status": res.status if filter_on else "off",
            "d_min_env": d_env,
            "d_min_self": d_self,
            "mu": res.mu,
            "solve_ms": res.solve_time * 1e3,
            "eval_ms": res.eval_time * 1e3,
        }
        log.append(record)
        if progress is not None:
            progress(k, record)

        if filter_on and res.status == "halted":
            halted = True
            t_end = t
            break
        q = q + u * dt
        if done(t, q):
            t_end = t + dt
            break

    metrics = RunMetrics(
        d_min=min(d_min_env, d_min_self),
        d_min_env=d_min_env,
        d_min_self=d_min_self,
        t_end=t_end,
        intervention_ratio=interventions / max(len(log), 1),
        violations=violations,
        halted=halted,
        cycles=len(log),
        mean_cycle_ms=float(np.mean(cycle_ms)) if cycle_ms else 0.0,
        max_cycle_ms=float(np.max(cycle_ms)) if cycle_ms else 0.0,
    )
    return metrics, log


def write_cycle_log(log: Sequence[dict], path) -> None:
    """JSONL for .jsonl paths, CSV otherwise."""
    path = Path(path)
    if path.suffix == ".jsonl":
        with path.open("w") as fh:
            for rec in log:
                fh.write(json.dumps(rec) + "\n")
        return
    if not log:
        path.write_text("")
        return
    flat = []
    for rec in log:
        row = dict(rec)
        for key in ("q", "u_cmd", "u_star"):
            vals = row.pop(key)
            row.update({f"{key}{i}": v for i, v in enumerate(vals)})
        flat.append(row)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(flat[0]))
        writer.writeheader()
        writer.writerows(flat)
