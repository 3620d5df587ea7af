"""SE(3) pose algebra: unit quaternions, Euler conversion, spherical coordinates.

Conventions used repo-wide:
  * quaternions are scalar-first (w, x, y, z), Hamilton product, canonical
    sign w >= 0
  * Euler angles are intrinsic Z-Y-X (yaw, pitch, roll)
  * spherical coordinates measure the polar angle theta from +z and the
    azimuth phi from +x
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when an operation receives non-finite or malformed input."""


def _check_finite(arr: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=float)
    # sum of squares is finite iff every component is finite
    if not math.isfinite(float(np.sum(arr * arr))):
        raise InvalidInputError(f"{name} contains non-finite components: {arr}")
    return arr


def quat_normalize(q) -> np.ndarray:
    """Unit-norm, canonical-sign (w >= 0) copy of q."""
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if not 1e-12 < n < math.inf:
        raise InvalidInputError(f"cannot normalize quaternion {q}")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b, renormalized and sign-canonicalized."""
    aw, ax, ay, az = (float(v) for v in a)
    bw, bx, by, bz = (float(v) for v in b)
    out = np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )
    return quat_normalize(out)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = _check_finite(axis, "axis")
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return quat_identity()
    axis = axis / n
    half = 0.5 * float(angle)
    return quat_normalize(np.concatenate(([np.cos(half)], np.sin(half) * axis)))


def quat_from_euler(droll: float, dpitch: float, dyaw: float) -> np.ndarray:
    """Intrinsic Z-Y-X rotation: yaw about z, then pitch about y, then roll about x."""
    for v in (droll, dpitch, dyaw):
        if not np.isfinite(v):
            raise InvalidInputError("non-finite Euler angle")
    qz = quat_from_axis_angle([0.0, 0.0, 1.0], dyaw)
    qy = quat_from_axis_angle([0.0, 1.0, 0.0], dpitch)
    qx = quat_from_axis_angle([1.0, 0.0, 0.0], droll)
    return quat_multiply(quat_multiply(qz, qy), qx)


def quat_angle(a, b) -> float:
    """Geodesic angle between two unit quaternions, double-cover aware, in [0, pi]."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    dot = abs(float(np.dot(a, b)))
    dot = min(dot, 1.0)
    return 2.0 * float(np.arccos(dot))


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotate_vector(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_to_rotvec(q) -> np.ndarray:
    """Axis-angle vector (axis * angle) of a unit quaternion, angle in [0, pi]."""
    q = quat_normalize(q)
    w = min(q[0], 1.0)
    angle = 2.0 * float(np.arccos(w))
    s = np.sqrt(max(1.0 - w * w, 0.0))
    if s < 1e-12:
        return np.zeros(3)
    return (q[1:] / s) * angle


@dataclass
class Pose:
    """End-effector pose: position (m) and unit scalar-first quaternion."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.p = _check_finite(self.p, "position")
        if self.p.shape != (3,):
            raise InvalidInputError(f"position must be a 3-vector, got {self.p.shape}")
        q = _check_finite(self.q, "quaternion")
        if q.shape != (4,):
            raise InvalidInputError(f"quaternion must be a 4-vector, got {q.shape}")
        if abs(np.linalg.norm(q) - 1.0) > 1e-3:
            raise InvalidInputError(f"quaternion far from unit norm: {q}")
        self.q = quat_normalize(q)

    def compose(self, other: "Pose") -> "Pose":
        """This pose followed by `other` expressed in this pose's local frame."""
        return Pose(self.p + rotate_vector(self.q, other.p), quat_multiply(self.q, other.q))

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.q)
        return Pose(-rotate_vector(qi, self.p), quat_normalize(qi))

    def transform_point(self, point) -> np.ndarray:
        """Map a point from this pose's local frame into the parent frame."""
        return self.p + rotate_vector(self.q, np.asarray(point, dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.q])

    @staticmethod
    def from_vector(v) -> "Pose":
        v = np.asarray(v, dtype=float)
        if v.shape != (7,):
            raise InvalidInputError(f"pose vector must have 7 entries, got {v.shape}")
        return Pose(v[:3], v[3:])


@dataclass
class SphericalCoord:
    """Radius (m), polar angle from +z in [0, pi], azimuth from +x in [-pi, pi]."""

    r: float
    theta: float
    phi: float


def sph2cart(s: SphericalCoord) -> np.ndarray:
    st = np.sin(s.theta)
    return np.array(
        [s.r * st * np.cos(s.phi), s.r * st * np.sin(s.phi), s.r * np.cos(s.theta)]
    )


def cart2sph(v) -> SphericalCoord:
    v = _check_finite(v, "vector")
    r = float(np.linalg.norm(v))
    if r < 1e-9:
        return SphericalCoord(0.0, 0.0, 0.0)
    theta = float(np.arccos(np.clip(v[2] / r, -1.0, 1.0)))
    phi = float(np.arctan2(v[1], v[0]))
    return SphericalCoord(r, theta, phi)
