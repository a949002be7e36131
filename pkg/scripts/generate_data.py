#!/usr/bin/env python3
"""Regenerate the shipped robot description and scenario JSON files."""

import json
from pathlib import Path

from sqfilter.harness import insertion_scenario
from sqfilter.kinematics import robot_to_json, seven_dof_model

DATA = Path(__file__).resolve().parent.parent / "src" / "sqfilter" / "data"


def main() -> None:
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "scenarios").mkdir(exist_ok=True)

    (DATA / "robot_7dof.json").write_text(robot_to_json(seven_dof_model()) + "\n")

    scenarios = {}

    scenarios["empty"] = {
        "name": "empty",
        "robot": "seven_dof",
        "q0": [0.0, -0.6, 0.0, -2.0, 0.0, 1.6, 0.8],
        "duration": 3.0,
        "period": 0.01,
        "seed": 0,
        # zero input-smoothing weight: with w > 0 the smoothing term alone
        # moves u* off a time-varying command even with no obstacles
        "filter": {"mesh_n": 32, "smoothing_weight": 0.0},
        "controller": {"kind": "servo", "goal": [0.42, -0.06, 0.62],
                       "gain": 1.0, "tol": 0.005},
        "obstacles": [],
    }

    # basket difficulty ladder; only the smallest size is from the source
    # protocol, the larger two are our warm-up levels
    for l, margin in ((0.40, 0.01), (0.32, 0.005), (0.24, 0.0025)):
        doc = insertion_scenario(l, margin)
        scenarios[doc["name"]] = doc

    scenarios["wall_crash"] = {
        "name": "wall_crash",
        "robot": "seven_dof",
        "q0": [0.0, -0.6, 0.0, -2.0, 0.0, 1.6, 0.8],
        "duration": 2.0,
        "period": 0.01,
        "seed": 0,
        "filter": {"mesh_n": 32},
        "controller": {"kind": "twist_script",
                       "segments": [[0.0, [0.5, 0.0, -0.1, 0.0, 0.0, 0.0]]]},
        "obstacles": [
            {"a": [0.01, 0.4, 0.3], "e": [0.2, 0.2],
             "script": {"kind": "static",
                        "pose": {"t": [0.62, 0.0, 0.55], "aa": [0, 0, 0]}}}
        ],
    }

    scenarios["swing"] = {
        "name": "swing",
        "robot": "seven_dof",
        "q0": [0.0, -0.6, 0.0, -2.0, 0.0, 1.6, 0.8],
        "duration": 4.0,
        "period": 0.01,
        "seed": 0,
        "filter": {"mesh_n": 32},
        "controller": {"kind": "hold"},
        "obstacles": [
            {"a": [0.35, 0.03, 0.03], "e": [0.5, 1.0],
             "script": {"kind": "sinusoid",
                        "pose": {"t": [0.55, 0.0, 0.65], "aa": [0, 0, 0]},
                        "amplitude": [0.0, 0.35, 0.1, 0.0, 0.0, 0.9],
                        "frequency": 0.4,
                        # start at the far end of the swing so t=0 is
                        # collision-free; the bar still crosses the held
                        # arm's space within the first half period
                        "phase": -1.5707963267948966}}
        ],
    }

    for name, doc in scenarios.items():
        path = DATA / "scenarios" / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n")
        print("wrote", path)


if __name__ == "__main__":
    main()
