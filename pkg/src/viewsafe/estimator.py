"""Sklearn-style estimator facade over the safe-set construction pipeline.

SafeSetEstimator.fit consumes demonstration trajectories and produces a
queryable safety field; decision_function / predict expose the field to code
written against the usual estimator conventions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .camera import CameraModel
from .geometry import InvalidInputError, Pose
from .perception import DefaultPerceptionModel, fit_reference, render_synthetic, Scene
from .safeset import (
    GoalSpec,
    PerturbationParams,
    SafetyField,
    build_field,
    evaluate_h,
    generate_candidates,
    tune_constraints,
)


def poses_from_array(X) -> list[Pose]:
    """Validate and convert an (n, 7) array of [p, q] rows into poses."""
    if len(X) and isinstance(X[0], Pose):
        return list(X)
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 7:
        raise InvalidInputError(f"expected (n, 7) pose array, got shape {arr.shape}")
    return [Pose.from_vector(row) for row in arr]


class SafeSetEstimator(BaseEstimator):
    """Fits a perception-defined safety field from demonstration trajectories.

    Parameters mirror the pipeline stages: candidate perturbation, constraint
    tuning margin, the boundary threshold tau, and the interpolation metric.
    """

    def __init__(self, scene: Scene = None, camera: CameraModel = None,
                 goal: GoalSpec = None, perturbation: PerturbationParams = None,
                 margin: float = 0.1, clearance_eps: float = 0.01,
                 tau: float = 0.05, lambda_q: float = 0.1, k: int = 8,
                 fd_step_pos: float = 0.005, fd_step_rot: float = 0.02,
                 support_factor: float = float("inf"),
                 lambda_reg: float | None = None, perception_model=None):
        self.scene = scene
        self.camera = camera
        self.goal = goal
        self.perturbation = perturbation
        self.margin = margin
        self.clearance_eps = clearance_eps
        self.tau = tau
        self.lambda_q = lambda_q
        self.k = k
        self.fd_step_pos = fd_step_pos
        self.fd_step_rot = fd_step_rot
        self.support_factor = support_factor
        self.lambda_reg = lambda_reg
        self.perception_model = perception_model

    def _require_config(self):
        if self.scene is None or self.camera is None or self.goal is None:
            raise InvalidInputError("scene, camera, and goal must be provided")

    def fit(self, demos, y=None) -> "SafeSetEstimator":
        """Build the safety field from a list of demo trajectories (lists of Pose)."""
        self._require_config()
        demos = [poses_from_array(traj) for traj in demos]
        perturbation = self.perturbation or PerturbationParams()

        self.model_ = self.perception_model or DefaultPerceptionModel(self.scene, self.camera)
        demo_embeddings = [
            self.model_.embed(render_synthetic(self.scene, self.camera, pose))
            for traj in demos
            for pose in traj
        ]
        self.ref_ = fit_reference(demo_embeddings, self.lambda_reg)
        self.constraints_ = tune_constraints(
            demos, self.goal, self.margin, z_table=self.scene.z_table,
            eps=self.clearance_eps,
        )

        candidates = generate_candidates(demos, self.goal, perturbation)
        h_values = [
            evaluate_h(c, self.scene, self.camera, self.model_, self.ref_,
                       self.constraints_, self.goal, self.tau)
            for c in candidates
        ]
        self.n_candidates_ = len(candidates)
        self.n_positive_ = int(np.sum(np.asarray(h_values) > 0))
        self.field_ = build_field(
            candidates, h_values, lambda_q=self.lambda_q, k=self.k,
            fd_step_pos=self.fd_step_pos, fd_step_rot=self.fd_step_rot,
            tau=self.tau, support_factor=self.support_factor,
        )
        return self

    def _check_fitted(self) -> SafetyField:
        if not hasattr(self, "field_"):
            raise InvalidInputError("estimator is not fitted; call fit first")
        return self.field_

    def decision_function(self, X) -> np.ndarray:
        """Interpolated safety values h(x) for an (n, 7) pose array."""
        field = self._check_fitted()
        return np.array([field.query(pose) for pose in poses_from_array(X)])

    def predict(self, X) -> np.ndarray:
        """Boolean safe-set membership h(x) > 0."""
        return self.decision_function(X) > 0

    def gradient(self, x) -> np.ndarray:
        field = self._check_fitted()
        (pose,) = poses_from_array([x] if isinstance(x, Pose) else x)
        return field.gradient(pose)

    def point_h(self, x: Pose) -> float:
        """Direct (non-interpolated) safety evaluation at a pose."""
        self._check_fitted()
        return evaluate_h(x, self.scene, self.camera, self.model_, self.ref_,
                          self.constraints_, self.goal, self.tau)
