"""Pinhole projection and the continuous goal-visibility score.

The visibility score is a Gaussian falloff in pixel distance from the
principal point, hard-zeroed whenever the goal projects outside the image
bounds or behind the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import InvalidInputError, Pose, quat_to_matrix


@dataclass
class CameraModel:
    """Pinhole intrinsics plus the end-effector -> camera extrinsic."""

    fx: float = 64.0
    fy: float = 64.0
    c_u: float = 32.0
    c_v: float = 32.0
    width: int = 64
    height: int = 64
    sigma: float = 0.0  # 0 means "use min(W, H) / 4"
    t_ec: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidInputError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidInputError("image size must be positive")
        if not (0 < self.c_u < self.width and 0 < self.c_v < self.height):
            raise InvalidInputError("principal point must lie inside the image")
        if self.sigma <= 0:
            self.sigma = min(self.width, self.height) / 4.0
        self._r_ec = quat_to_matrix(self.t_ec.q)


@dataclass
class Projection:
    u: float
    v: float
    z: float


def camera_pose(cam: CameraModel, eef_pose: Pose) -> Pose:
    """World pose of the camera frame for a given end-effector pose."""
    return eef_pose.compose(cam.t_ec)


def camera_frame(cam: CameraModel, eef_pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Camera origin and world rotation matrix, without Pose construction."""
    r_e = quat_to_matrix(eef_pose.q)
    return eef_pose.p + r_e @ cam.t_ec.p, r_e @ cam._r_ec


def project(cam: CameraModel, eef_pose: Pose, point_world) -> Projection:
    """Project a world point through the eye-in-hand camera.

    A point at |z| < 1e-9 gets signed-infinity pixel sentinels; the depth is
    preserved so callers can still reason about the sign.
    """
    origin, rot = camera_frame(cam, eef_pose)
    x, y, z = rot.T @ (np.asarray(point_world, dtype=float) - origin)
    if abs(z) < 1e-9:
        sentinel = np.inf
        return Projection(np.copysign(sentinel, x), np.copysign(sentinel, y), float(z))
    return Projection(
        float(cam.fx * x / z + cam.c_u), float(cam.fy * y / z + cam.c_v), float(z)
    )


def fov_score(cam: CameraModel, eef_pose: Pose, goal_point) -> float:
    """Gaussian visibility score in [0, 1]; exactly 0 out of frustum or behind."""
    prj = project(cam, eef_pose, goal_point)
    if not (prj.z > 0.0 and 0.0 < prj.u < cam.width and 0.0 < prj.v < cam.height):
        return 0.0
    du = prj.u - cam.c_u
    dv = prj.v - cam.c_v
    return float(np.exp(-(du * du + dv * dv) / (cam.sigma * cam.sigma)))
