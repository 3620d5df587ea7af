"""Safe-set construction: candidate generation around demonstrations,
geometric feasibility filtering, pointwise safety evaluation, and a queryable
interpolated scalar field with finite-difference gradients.

The field value is the product of the visibility and familiarity scores minus
a boundary threshold tau, so positive values mean "both perceptual criteria
hold with margin" and the zero level set is the safe-set boundary.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, fov_score
from .fileio import atomic_write_text
from .geometry import (
    InvalidInputError,
    Pose,
    cart2sph,
    quat_from_axis_angle,
    quat_from_euler,
    quat_multiply,
    quat_to_matrix,
    sph2cart,
    SphericalCoord,
)
from .perception import (
    InsufficientDataError,
    PerceptionModel,
    ReferenceDistribution,
    Scene,
    recog_score,
    render_synthetic,
)

CUBE_CORNERS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
WORLD_DOWN = np.array([0.0, 0.0, -1.0])


@dataclass
class GoalSpec:
    """Goal pose plus the position radius that defines task completion."""

    g_pos: np.ndarray
    g_quat: np.ndarray
    goal_radius: float = 0.05

    def __post_init__(self):
        self.g_pos = np.asarray(self.g_pos, dtype=float)
        self.g_quat = np.asarray(self.g_quat, dtype=float)
        if self.goal_radius <= 0:
            raise InvalidInputError("goal_radius must be positive")


@dataclass
class PerturbationParams:
    dtheta_max: float = np.deg2rad(15.0)
    dphi_max: float = np.deg2rad(15.0)
    deuler_max: float = np.deg2rad(10.0)
    delta_cube: float = 0.02
    samples_per_point: int = 5
    near_goal_radius: float = 0.15
    near_goal_multiplier: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.dtheta_max, self.dphi_max, self.deuler_max, self.delta_cube) < 0:
            raise InvalidInputError("perturbation bounds must be non-negative")
        if self.samples_per_point < 1 or self.near_goal_multiplier < 1:
            raise InvalidInputError("sample counts must be >= 1")


@dataclass
class ConstraintParams:
    d_min: float
    d_max: float
    z_table: float
    eps: float
    theta_max: float

    def __post_init__(self):
        if not (0 <= self.d_min < self.d_max):
            raise InvalidInputError("need 0 <= d_min < d_max")
        if self.eps < 0:
            raise InvalidInputError("eps must be non-negative")
        if not (0 < self.theta_max <= np.pi):
            raise InvalidInputError("theta_max must lie in (0, pi]")


def candidate_count(n_points_normal: int, n_points_near: int, params: PerturbationParams) -> int:
    """Exact number of candidates emitted: 9 per perturbation sample."""
    s = params.samples_per_point
    return 9 * s * (n_points_normal + n_points_near * params.near_goal_multiplier)


def generate_candidates(demos, goal: GoalSpec, params: PerturbationParams) -> list[Pose]:
    """Perturb every demo pose in goal-centered spherical angles and orientation,
    then add the 8 cube-corner translates of each perturbed pose."""
    points = [pose for traj in demos for pose in traj]
    if not points:
        raise InsufficientDataError("generate_candidates needs at least one demo pose")

    out: list[Pose] = []
    for index, pose in enumerate(points):
        rng = np.random.default_rng(params.rng_seed + index)
        n = params.samples_per_point
        if np.linalg.norm(pose.p - goal.g_pos) <= params.near_goal_radius:
            n *= params.near_goal_multiplier
        sph = cart2sph(pose.p - goal.g_pos)
        for _ in range(n):
            dtheta = rng.uniform(-params.dtheta_max, params.dtheta_max)
            dphi = rng.uniform(-params.dphi_max, params.dphi_max)
            droll, dpitch, dyaw = rng.uniform(-params.deuler_max, params.deuler_max, 3)
            pos = goal.g_pos + sph2cart(
                SphericalCoord(sph.r, sph.theta + dtheta, sph.phi + dphi)
            )
            quat = quat_multiply(pose.q, quat_from_euler(droll, dpitch, dyaw))
            out.append(Pose(pos, quat))
            for corner in CUBE_CORNERS:
                out.append(Pose(pos + params.delta_cube * corner, quat))
    return out


def approach_deviation(pose: Pose) -> float:
    """Angle between the gripper local x-axis (in world) and straight down."""
    a_eef = quat_to_matrix(pose.q)[:, 0]
    return float(np.arccos(np.clip(a_eef @ WORLD_DOWN, -1.0, 1.0)))


def low_dim_filter(x: Pose, goal: GoalSpec, c: ConstraintParams) -> bool:
    """Proximity, table clearance, and approach-orientation feasibility."""
    dist = float(np.linalg.norm(x.p - goal.g_pos))
    if not (c.d_min <= dist <= c.d_max):
        return False
    if x.p[2] < c.z_table + c.eps:
        return False
    return approach_deviation(x) <= c.theta_max


def tune_constraints(demos, goal: GoalSpec, margin: float, z_table: float = 0.0,
                     eps: float = 0.01) -> ConstraintParams:
    """Bounds from demo statistics, widened by the given fractional margin."""
    points = [pose for traj in demos for pose in traj]
    if not points:
        raise InsufficientDataError("tune_constraints needs at least one demo pose")
    dists = [float(np.linalg.norm(p.p - goal.g_pos)) for p in points]
    devs = [approach_deviation(p) for p in points]
    theta_max = min(max((1 + margin) * max(devs), 1e-2), np.pi)
    return ConstraintParams(
        d_min=(1 - margin) * min(dists),
        d_max=(1 + margin) * max(dists),
        z_table=z_table,
        eps=eps,
        theta_max=theta_max,
    )


def evaluate_h(x: Pose, scene: Scene, cam: CameraModel, model: PerceptionModel,
               ref: ReferenceDistribution, c: ConstraintParams, goal: GoalSpec,
               tau: float) -> float:
    """Pointwise safety value fov * recog - tau; exactly -tau on filter failure.

    The visibility term projects the goal object (scene goal primitive), so the
    score stays well defined when the end-effector reaches the goal pose itself.
    """
    if not (0 < tau < 1):
        raise InvalidInputError("tau must lie in (0, 1)")
    if not low_dim_filter(x, goal, c):
        return -tau
    fov = fov_score(cam, x, scene.goal.center)
    if fov == 0.0:
        return -tau
    recog = recog_score(model.embed(render_synthetic(scene, cam, x)), ref)
    return fov * recog - tau


def perceptual_confidence(x: Pose, scene: Scene, cam: CameraModel,
                          model: PerceptionModel, ref: ReferenceDistribution) -> float:
    """Raw fov * recog product without the threshold or geometric gating."""
    fov = fov_score(cam, x, scene.goal.center)
    if fov == 0.0:
        return 0.0
    return fov * recog_score(model.embed(render_synthetic(scene, cam, x)), ref)


@dataclass
class SafetyField:
    """Scattered safety samples with k-NN inverse-distance-weighted queries.

    Distance between poses blends position (meters) and orientation
    (lambda_q meters per radian of geodesic quaternion angle).
    """

    positions: np.ndarray  # (n, 3)
    quats: np.ndarray  # (n, 4)
    values: np.ndarray  # (n,)
    lambda_q: float = 0.1
    k: int = 8
    fd_step_pos: float = 0.005
    fd_step_rot: float = 0.02
    tau: float = 0.05
    support_factor: float = math.inf

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.quats = np.asarray(self.quats, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.values)
        if self.positions.shape != (n, 3) or self.quats.shape != (n, 4):
            raise InvalidInputError("samples/value length mismatch in SafetyField")
        if n < self.k:
            raise InvalidInputError(f"need at least k={self.k} samples, got {n}")
        if self.support_factor <= 0:
            raise InvalidInputError("support_factor must be positive")
        self._support_radius = (
            math.inf if math.isinf(self.support_factor)
            else self.support_factor * self._median_spacing()
        )
        self._pos_sq = np.einsum("ij,ij->i", self.positions, self.positions)
        self._interior = None
        self._rot_left = self._rotation_stencil_matrices()

    def _rotation_stencil_matrices(self) -> np.ndarray:
        """Left-product matrices for the 6 fixed orientation offsets (+/- per axis)."""
        mats = []
        for i in range(3):
            axis = np.zeros(3)
            axis[i] = 1.0
            for sign in (1.0, -1.0):
                w, x, y, z = quat_from_axis_angle(axis, sign * self.fd_step_rot)
                mats.append([
                    [w, -x, -y, -z],
                    [x, w, -z, y],
                    [y, z, w, -x],
                    [z, -y, x, w],
                ])
        return np.array(mats)

    def _median_spacing(self) -> float:
        """Median nearest-neighbor distance over (a deterministic subset of) samples."""
        n = len(self.values)
        rows = np.arange(min(n, 512))
        dp = np.linalg.norm(self.positions[rows, None, :] - self.positions[None, :, :], axis=2)
        dots = np.clip(np.abs(self.quats[rows] @ self.quats.T), 0.0, 1.0)
        d = dp + self.lambda_q * 2.0 * np.arccos(dots)
        d[rows, rows] = np.inf
        nearest = d.min(axis=1)
        return float(max(np.median(nearest), 1e-6))

    def _distances(self, positions: np.ndarray, quats: np.ndarray,
                   subset: np.ndarray | None = None) -> np.ndarray:
        ref_p = self.positions if subset is None else self.positions[subset]
        ref_sq = self._pos_sq if subset is None else self._pos_sq[subset]
        ref_q = self.quats if subset is None else self.quats[subset]
        sq = (
            np.einsum("ij,ij->i", positions, positions)[:, None]
            + ref_sq
            - 2.0 * positions @ ref_p.T
        )
        dp = np.sqrt(np.maximum(sq, 0.0))
        dots = np.clip(np.abs(quats @ ref_q.T), 0.0, 1.0)
        return dp + self.lambda_q * 2.0 * np.arccos(dots)

    def _query_arrays(self, positions: np.ndarray, quats: np.ndarray,
                      subset: np.ndarray | None = None) -> np.ndarray:
        """Vectorized IDW query for m poses given as (m, 3) and (m, 4) arrays."""
        d = self._distances(positions, quats, subset)
        values = self.values if subset is None else self.values[subset]

        idx = np.argpartition(d, self.k - 1, axis=1)[:, : self.k]
        di = np.take_along_axis(d, idx, axis=1)
        vi = values[idx]

        # a virtual background sample at the support radius pulls queries far
        # from the cloud toward -tau, closing the safe set at its fringe
        w_bg = 1.0 / (self._support_radius * self._support_radius)
        with np.errstate(divide="ignore", invalid="ignore"):
            # exact sample hits produce inf weights (and inf/inf below); those
            # rows are overwritten with the nearest sample's value afterwards
            w = 1.0 / (di * di)
            out = (np.einsum("ij,ij->i", w, vi) - w_bg * self.tau) / (w.sum(axis=1) + w_bg)

        dmin = di.min(axis=1)
        hits = dmin < 1e-12
        if np.any(hits):
            nearest = np.take_along_axis(vi, np.argmin(di, axis=1)[:, None], axis=1)[:, 0]
            out[hits] = nearest[hits]
        return out

    def query(self, x: Pose) -> float:
        return float(self._query_arrays(x.p[None, :], x.q[None, :])[0])

    def query_with_gradient(self, x: Pose) -> tuple[float, np.ndarray]:
        """Value and central-difference gradient from a single batched query.

        One full distance pass locates the center's neighbors; the stencil rows
        then search only a candidate pool that provably contains their true
        k nearest neighbors (triangle inequality with the stencil offset).
        """
        positions, quats = self._stencil(x)
        d0 = self._distances(x.p[None, :], x.q[None, :])[0]
        kth = np.partition(d0, self.k - 1)[self.k - 1]
        offset = max(self.fd_step_pos, self.lambda_q * self.fd_step_rot)
        pool = np.flatnonzero(d0 <= kth + 2.0 * offset + 1e-12)
        vals = self._query_arrays(positions, quats, subset=pool)
        return float(vals[12]), self._gradient_from_stencil(vals)

    def _stencil(self, x: Pose) -> tuple[np.ndarray, np.ndarray]:
        """13 poses: +/- offsets along each coordinate, then the pose itself."""
        positions = np.tile(x.p, (13, 1))
        quats = np.tile(x.q, (13, 1))
        for i in range(3):
            positions[2 * i, i] += self.fd_step_pos
            positions[2 * i + 1, i] -= self.fd_step_pos
        rotated = self._rot_left @ x.q
        rotated /= np.linalg.norm(rotated, axis=1, keepdims=True)
        rotated[rotated[:, 0] < 0.0] *= -1.0
        quats[6:12] = rotated
        return positions, quats

    def _gradient_from_stencil(self, vals: np.ndarray) -> np.ndarray:
        g = np.empty(6)
        g[:3] = (vals[0:6:2] - vals[1:6:2]) / (2 * self.fd_step_pos)
        g[3:] = (vals[6:12:2] - vals[7:12:2]) / (2 * self.fd_step_rot)
        return g

    def gradient(self, x: Pose) -> np.ndarray:
        """Central-difference 6-vector: d/dp (1/m) then d/d(rotation xyz) (1/rad)."""
        positions, quats = self._stencil(x)
        return self._gradient_from_stencil(self._query_arrays(positions[:12], quats[:12]))

    def interior_positions(self) -> np.ndarray:
        if self._interior is None:
            self._interior = self.positions[self.values > 0]
        return self._interior

    def to_dict(self) -> dict:
        return {
            "metric": {
                "lambda_q": self.lambda_q,
                "k": self.k,
                "fd_step": [self.fd_step_pos, self.fd_step_rot],
                "tau": self.tau,
                "support_factor": (
                    None if math.isinf(self.support_factor) else self.support_factor
                ),
            },
            "samples": [
                {"p": list(p), "q": list(q), "h": float(h)}
                for p, q, h in zip(self.positions, self.quats, self.values)
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "SafetyField":
        metric = doc["metric"]
        samples = doc["samples"]
        return SafetyField(
            positions=np.array([s["p"] for s in samples]),
            quats=np.array([s["q"] for s in samples]),
            values=np.array([s["h"] for s in samples]),
            lambda_q=float(metric["lambda_q"]),
            k=int(metric["k"]),
            fd_step_pos=float(metric["fd_step"][0]),
            fd_step_rot=float(metric["fd_step"][1]),
            tau=float(metric["tau"]),
            support_factor=(
                math.inf if metric.get("support_factor") is None
                else float(metric["support_factor"])
            ),
        )

    def save_json(self, path: str) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), sort_keys=True) + "\n")

    @staticmethod
    def load_json(path: str) -> "SafetyField":
        with open(path) as fh:
            return SafetyField.from_dict(json.load(fh))

    def save_csv(self, path: str) -> None:
        lines = ["p_x,p_y,p_z,q_w,q_x,q_y,q_z,h"]
        for p, q, h in zip(self.positions, self.quats, self.values):
            lines.append(",".join(repr(float(v)) for v in (*p, *q, h)))
        atomic_write_text(path, "\n".join(lines) + "\n")


def build_field(candidates, h_values, lambda_q: float = 0.1, k: int = 8,
                fd_step_pos: float = 0.005, fd_step_rot: float = 0.02,
                tau: float = 0.05, support_factor: float = math.inf) -> SafetyField:
    if len(candidates) != len(h_values):
        raise InvalidInputError("candidates and h_values must have equal length")
    return SafetyField(
        positions=np.array([c.p for c in candidates]),
        quats=np.array([c.q for c in candidates]),
        values=np.asarray(h_values, dtype=float),
        lambda_q=lambda_q,
        k=k,
        fd_step_pos=fd_step_pos,
        fd_step_rot=fd_step_rot,
        tau=tau,
        support_factor=support_factor,
    )


def field_query(field: SafetyField, x: Pose) -> float:
    return field.query(x)


def field_gradient(field: SafetyField, x: Pose) -> np.ndarray:
    return field.gradient(x)
