"""Desk-scale benchmark scenario: a tabletop reach task with an eye-in-hand
camera looking along the gripper approach axis, plus a synthetic demonstration
generator. Used by the CLI demo path, the test suite, and the acceptance runs.
"""

from __future__ import annotations

import copy

import numpy as np

from .config import DEFAULT_CONFIG
from .geometry import Pose, quat_from_axis_angle, quat_multiply
from .safeset import GoalSpec

# local x-axis pointing straight down (rotation of +90 deg about y)
DOWN_QUAT = np.array([np.sqrt(0.5), 0.0, np.sqrt(0.5), 0.0])


def default_config() -> dict:
    return copy.deepcopy(DEFAULT_CONFIG)


def make_demos(goal: GoalSpec, n_traj: int = 3, points_per_traj: int = 12,
               descent_height: float = 0.25, lateral_spread: float = 0.04,
               wobble_max: float = 0.14, rng_seed: int = 7) -> list[list[Pose]]:
    """Straight-line descents onto the goal pose with per-trajectory lateral
    start offsets and a smooth orientation wobble about the approach axis."""
    rng = np.random.default_rng(rng_seed)
    demos = []
    for _ in range(n_traj):
        offset = np.array(
            [rng.uniform(-lateral_spread, lateral_spread),
             rng.uniform(-lateral_spread, lateral_spread),
             descent_height]
        )
        wobble_axis = rng.normal(size=3)
        wobble_axis /= np.linalg.norm(wobble_axis)
        traj = []
        for j in range(points_per_traj):
            frac = j / (points_per_traj - 1)
            p = goal.g_pos + (1.0 - frac) * offset
            angle = wobble_max * np.sin(np.pi * frac) * rng.uniform(0.5, 1.0)
            q = quat_multiply(DOWN_QUAT, quat_from_axis_angle(wobble_axis, angle))
            traj.append(Pose(p, q))
        demos.append(traj)
    return demos
