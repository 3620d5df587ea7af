"""Synthetic perception stack: analytic renderer, feature embedding, and
Mahalanobis familiarity scoring against a demonstration reference distribution.

The renderer ray-casts scene primitives (spheres and axis-aligned boxes) into
a depth-plus-label image; the default embedding turns that image into a
32-dimensional smooth feature vector. Real encoders can be substituted through
the PerceptionModel protocol or by importing precomputed embedding matrices.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .camera import CameraModel, camera_frame
from .geometry import InvalidInputError, Pose, quat_to_matrix

FAR_CLIP = 5.0  # meters; background depth used by the default embedding
MAX_LABELS = 8


class InsufficientDataError(ValueError):
    """Raised when a statistic is requested from too few samples."""


@dataclass
class Primitive:
    """Sphere (size = radius) or axis-aligned box (size = half-extents)."""

    kind: str  # "sphere" | "box"
    center: np.ndarray
    size: np.ndarray  # shape (1,) for sphere, (3,) for box

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        self.size = np.atleast_1d(np.asarray(self.size, dtype=float))
        if self.kind not in ("sphere", "box"):
            raise InvalidInputError(f"unknown primitive kind {self.kind!r}")
        if np.any(self.size <= 0):
            raise InvalidInputError("primitive size must be positive")
        if self.kind == "box" and self.size.shape == (1,):
            self.size = np.repeat(self.size, 3)


@dataclass
class Scene:
    """Goal primitive, optional distractors, and the workspace table height."""

    goal: Primitive
    distractors: list[Primitive] = field(default_factory=list)
    z_table: float = 0.0

    @property
    def primitives(self) -> list[Primitive]:
        return [self.goal] + list(self.distractors)


@dataclass
class Observation:
    depth: np.ndarray  # (H, W), meters, +inf background
    labels: np.ndarray  # (H, W), 0 background, 1 goal, 2.. distractors


class PerceptionModel(Protocol):
    """Deterministic map from a rendered observation to a feature vector."""

    embed_dim: int

    def embed(self, obs: Observation) -> np.ndarray: ...


def _ray_sphere(origins, dirs, center, radius):
    oc = origins - center
    b = np.einsum("ij,ij->i", dirs, oc)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    t = np.full(len(dirs), np.inf)
    hit = disc >= 0
    sq = np.sqrt(np.maximum(disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    near = np.where(t0 > 1e-9, t0, np.where(t1 > 1e-9, t1, np.inf))
    t[hit] = near[hit]
    return t


def _ray_box(origins, dirs, center, half):
    lo = center - half
    hi = center + half
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (lo - origins) * inv
        t_hi = (hi - origins) * inv
    t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=1)
    t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=1)
    t = np.where((t_near <= t_far) & (t_far > 1e-9), np.where(t_near > 1e-9, t_near, t_far), np.inf)
    return t


_ray_cache: dict[tuple, np.ndarray] = {}


def _pixel_rays(cam: CameraModel) -> np.ndarray:
    """Unit ray directions per pixel in the camera frame, cached per intrinsics."""
    key = (cam.fx, cam.fy, cam.c_u, cam.c_v, cam.width, cam.height)
    rays = _ray_cache.get(key)
    if rays is None:
        cols = np.arange(cam.width) + 0.5
        rows = np.arange(cam.height) + 0.5
        uu, vv = np.meshgrid(cols, rows)
        dirs = np.stack(
            [(uu - cam.c_u) / cam.fx, (vv - cam.c_v) / cam.fy, np.ones_like(uu)],
            axis=-1,
        ).reshape(-1, 3)
        rays = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
        _ray_cache[key] = rays
    return rays


def render_synthetic(scene: Scene, cam: CameraModel, eef_pose: Pose) -> Observation:
    """Analytic depth + label rendering of the scene from the hand camera."""
    origin, rot = camera_frame(cam, eef_pose)
    dirs_unit = _pixel_rays(cam)
    dirs_world = dirs_unit @ rot.T
    origins = np.broadcast_to(origin, dirs_world.shape)

    best_t = np.full(len(dirs_world), np.inf)
    labels = np.zeros(len(dirs_world), dtype=int)
    for idx, prim in enumerate(scene.primitives, start=1):
        if prim.kind == "sphere":
            t = _ray_sphere(origins, dirs_world, prim.center, float(prim.size[0]))
        else:
            t = _ray_box(origins, dirs_world, prim.center, prim.size)
        closer = t < best_t
        best_t[closer] = t[closer]
        labels[closer] = idx

    # convert ray-length to z-depth along the optical axis
    depth = best_t * dirs_unit[:, 2]
    depth[~np.isfinite(best_t)] = np.inf
    shape = (cam.height, cam.width)
    return Observation(depth.reshape(shape), labels.reshape(shape))


def embed_default(obs: Observation) -> np.ndarray:
    """32-D feature vector: 4x4 depth grid, label fractions, goal-pixel stats."""
    h, w = obs.depth.shape
    clipped = np.minimum(obs.depth, FAR_CLIP) / FAR_CLIP

    gh, gw = h // 4, w // 4
    grid = clipped[: gh * 4, : gw * 4].reshape(4, gh, 4, gw).mean(axis=(1, 3))
    depth_feats = grid.reshape(-1)

    n_px = float(h * w)
    fractions = np.array(
        [np.count_nonzero(obs.labels == lab) / n_px for lab in range(1, MAX_LABELS + 1)]
    )

    goal_mask = obs.labels == 1
    if np.any(goal_mask):
        rows, cols = np.nonzero(goal_mask)
        u = (cols + 0.5) / w
        v = (rows + 0.5) / h
        d = clipped[goal_mask]
        goal_feats = np.array(
            [
                u.mean(),
                v.mean(),
                u.std(),
                v.std(),
                float(np.mean((u - u.mean()) * (v - v.mean()))),
                d.mean(),
                d.min(),
                goal_mask.sum() / n_px,
            ]
        )
    else:
        goal_feats = np.zeros(8)

    return np.concatenate([depth_feats, fractions, goal_feats])


class DefaultPerceptionModel:
    """Renderer-backed analytic embedding; deterministic and dependency-free."""

    embed_dim = 32

    def __init__(self, scene: Scene, cam: CameraModel):
        self.scene = scene
        self.cam = cam

    def embed_pose(self, eef_pose: Pose) -> np.ndarray:
        return self.embed(render_synthetic(self.scene, self.cam, eef_pose))

    def embed(self, obs: Observation) -> np.ndarray:
        return embed_default(obs)


@dataclass
class ReferenceDistribution:
    """Demonstration embedding statistics with a regularized inverse covariance."""

    mu: np.ndarray
    sigma: np.ndarray
    sigma_inv: np.ndarray
    d: int
    lambda_reg: float


def default_lambda_reg(sigma: np.ndarray) -> float:
    d = sigma.shape[0]
    return max(1e-6 * float(np.trace(sigma)) / d, 1e-12)


def fit_reference(embeddings: Sequence[np.ndarray], lambda_reg: float | None = None) -> ReferenceDistribution:
    """Sample mean / covariance (n-1 denominator) with ridge-regularized inverse."""
    z = np.asarray(embeddings, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2:
        raise InsufficientDataError("fit_reference needs at least 2 embedding vectors")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("non-finite embedding in reference set")
    mu = z.mean(axis=0)
    centered = z - mu
    sigma = centered.T @ centered / (z.shape[0] - 1)
    sigma = 0.5 * (sigma + sigma.T)
    if lambda_reg is None:
        lambda_reg = default_lambda_reg(sigma)
    if lambda_reg <= 0:
        raise InvalidInputError("lambda_reg must be positive")
    d = sigma.shape[0]
    sigma_inv = np.linalg.inv(sigma + lambda_reg * np.eye(d))
    return ReferenceDistribution(mu, sigma, sigma_inv, d, float(lambda_reg))


def mahalanobis_sq(z, ref: ReferenceDistribution) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (ref.d,):
        raise InvalidInputError(f"embedding dimension {z.shape} != ({ref.d},)")
    diff = z - ref.mu
    return max(float(diff @ ref.sigma_inv @ diff), 0.0)


def recog_score(z, ref: ReferenceDistribution) -> float:
    """exp(-D^2 / 2): 1 at the reference mean, decaying with unfamiliarity."""
    return float(np.exp(-0.5 * mahalanobis_sq(z, ref)))


def load_embeddings(path: str) -> np.ndarray:
    """Load a precomputed embedding matrix (rows = samples) from CSV or JSON."""
    if path.endswith(".json"):
        with open(path) as fh:
            return np.asarray(json.load(fh), dtype=float)
    with open(path, newline="") as fh:
        return np.asarray([[float(v) for v in row] for row in csv.reader(fh) if row], dtype=float)
