"""Configuration file handling (YAML) and demonstration file loading.

The config is a fixed key tree: unknown keys are rejected so typos cannot be
silently ignored, and missing keys fall back to defaults. Demonstrations are
stored as JSON: {"trajectories": [[{"t":..., "p":[3], "q":[4]}, ...], ...]}.
"""

from __future__ import annotations

import copy
import json
import logging

import numpy as np
import yaml

from .camera import CameraModel
from .fileio import atomic_write_text
from .geometry import InvalidInputError, Pose
from .perception import Primitive, Scene
from .recovery import RecoveryParams
from .safeset import GoalSpec, PerturbationParams
from .sim import SimConfig

log = logging.getLogger("viewsafe")


class ConfigError(ValueError):
    """Raised for malformed or unknown configuration content."""


DEFAULT_CONFIG: dict = {
    "rng_seed": 0,
    "camera": {
        "fx": 48.0, "fy": 48.0, "c_u": 24.0, "c_v": 24.0,
        "width": 48, "height": 48, "sigma": 12.0,
        "t_ec_p": [0.0, 0.0, 0.0],
        "t_ec_q": [0.5, 0.5, 0.5, 0.5],
    },
    "scene": {
        "z_table": 0.0,
        "goal": {"kind": "sphere", "center": [0.5, 0.0, 0.03], "size": [0.03]},
        "distractors": [],
    },
    "goal": {
        "position": [0.5, 0.0, 0.15],
        "quaternion": [0.7071067811865476, 0.0, 0.7071067811865476, 0.0],
        "radius": 0.03,
    },
    "perturbation": {
        "dtheta_max": 0.2617993877991494,  # 15 deg
        "dphi_max": 0.2617993877991494,
        "deuler_max": 0.04,
        "delta_cube": 0.03,
        "samples_per_point": 5,
        "near_goal_radius": 0.15,
        "near_goal_multiplier": 3,
    },
    "constraint": {"margin": 0.1, "eps": 0.01},
    "field": {"lambda_q": 0.3, "k": 4, "fd_step_pos": 0.02,
              "fd_step_rot": 0.1, "tau": 0.05, "support_factor": 0.6},
    "perception": {"lambda_reg": 0.2},
    "recovery": {"alpha": 1.0, "grad_eps": 0.3, "fallback": "retreat"},
    "sim": {
        "dt": 0.02, "horizon": 1300, "max_speed": 0.5, "max_omega": 1.5,
        "gain": 1.0, "noise_std": 0.05, "conf_threshold": 0.03,
        "lost_radius": 0.5, "start": None,
    },
    "eval": {
        "impulse_magnitude": 0.12,
        "trigger_step": 30,
        "distractor": {"kind": "box", "center": [0.56, 0.06, 0.03],
                       "size": [0.02, 0.02, 0.03]},
    },
}

# keys whose values are free-form lists/objects rather than sub-trees to merge
_LEAF_DICTS = {("scene", "goal"), ("eval", "distractor")}


def _merge(defaults, override, path=()):
    if not isinstance(override, dict):
        raise ConfigError(f"section {'.'.join(path) or '<root>'} must be a mapping")
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {'.'.join(path + (key,))!r}")
        sub = defaults[key]
        if isinstance(sub, dict) and path + (key,) not in _LEAF_DICTS:
            out[key] = _merge(sub, value, path + (key,))
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    return _merge(DEFAULT_CONFIG, raw)


def save_config(cfg: dict, path: str) -> None:
    atomic_write_text(path, yaml.safe_dump(cfg, sort_keys=True))


def _primitive(doc: dict) -> Primitive:
    return Primitive(doc["kind"], np.array(doc["center"]), np.array(doc["size"]))


def build_camera(cfg: dict) -> CameraModel:
    c = cfg["camera"]
    return CameraModel(
        fx=c["fx"], fy=c["fy"], c_u=c["c_u"], c_v=c["c_v"],
        width=c["width"], height=c["height"], sigma=c["sigma"],
        t_ec=Pose(np.array(c["t_ec_p"]), np.array(c["t_ec_q"])),
    )


def build_scene(cfg: dict, extra_distractor: bool = False) -> Scene:
    s = cfg["scene"]
    distractors = [_primitive(d) for d in s["distractors"]]
    if extra_distractor:
        distractors = distractors + [_primitive(cfg["eval"]["distractor"])]
    return Scene(_primitive(s["goal"]), distractors, float(s["z_table"]))


def build_goal(cfg: dict) -> GoalSpec:
    g = cfg["goal"]
    return GoalSpec(np.array(g["position"]), np.array(g["quaternion"]), g["radius"])


def build_perturbation(cfg: dict) -> PerturbationParams:
    p = cfg["perturbation"]
    return PerturbationParams(
        dtheta_max=p["dtheta_max"], dphi_max=p["dphi_max"],
        deuler_max=p["deuler_max"], delta_cube=p["delta_cube"],
        samples_per_point=p["samples_per_point"],
        near_goal_radius=p["near_goal_radius"],
        near_goal_multiplier=p["near_goal_multiplier"],
        rng_seed=cfg["rng_seed"],
    )


def build_recovery(cfg: dict) -> RecoveryParams:
    r = cfg["recovery"]
    return RecoveryParams(alpha=r["alpha"], grad_eps=r["grad_eps"], fallback=r["fallback"])


def build_sim_config(cfg: dict, scene: Scene | None = None) -> SimConfig:
    s = cfg["sim"]
    return SimConfig(
        goal=build_goal(cfg), scene=scene or build_scene(cfg),
        dt=s["dt"], horizon=s["horizon"],
        max_speed=s["max_speed"], max_omega=s["max_omega"],
    )


def load_demos(path: str) -> list[list[Pose]]:
    """Load and validate demonstration trajectories from JSON."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed demo file {path}: {exc}") from exc
    trajectories = doc.get("trajectories")
    if not isinstance(trajectories, list):
        raise ConfigError(f"{path}: missing 'trajectories' list")
    demos = []
    for i, traj in enumerate(trajectories):
        poses = []
        last_t = -np.inf
        for j, point in enumerate(traj):
            t = float(point["t"])
            if t <= last_t:
                raise ConfigError(
                    f"{path}: trajectory {i} point {j}: time {t} not strictly increasing"
                )
            last_t = t
            q = np.asarray(point["q"], dtype=float)
            norm = np.linalg.norm(q)
            if not norm > 1e-12:
                raise ConfigError(
                    f"{path}: trajectory {i} point {j}: degenerate quaternion {q}"
                )
            if abs(norm - 1.0) > 1e-6:
                log.warning(
                    "trajectory %d point %d: quaternion norm %.8f, renormalizing",
                    i, j, norm,
                )
            try:
                poses.append(Pose(np.asarray(point["p"], dtype=float), q / norm))
            except (InvalidInputError, ZeroDivisionError) as exc:
                raise ConfigError(f"{path}: trajectory {i} point {j}: {exc}") from exc
        demos.append(poses)
    return demos


def save_demos(demos: list[list[Pose]], path: str) -> None:
    doc = {
        "trajectories": [
            [
                {"t": float(j) * 0.1, "p": list(map(float, pose.p)),
                 "q": list(map(float, pose.q))}
                for j, pose in enumerate(traj)
            ]
            for traj in demos
        ]
    }
    atomic_write_text(path, json.dumps(doc, sort_keys=True) + "\n")
