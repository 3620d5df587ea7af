"""Fully-actuated kinematic simulator with scripted policies, disturbance
injection, and a batch evaluation harness reporting task success rates.

Dynamics are a direct twist integrator (velocity command = state velocity), so
the safe-set machinery can be exercised without any robot-specific model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .camera import CameraModel
from .geometry import (
    InvalidInputError,
    Pose,
    quat_conjugate,
    quat_from_axis_angle,
    quat_multiply,
    quat_to_rotvec,
)
from .perception import PerceptionModel, ReferenceDistribution, Scene
from .recovery import RecoveryParams, recover
from .safeset import GoalSpec, SafetyField, perceptual_confidence


class InvalidConfigError(ValueError):
    """Raised on inconsistent rollout configuration."""


@dataclass
class SimConfig:
    goal: GoalSpec
    scene: Scene
    dt: float = 0.02
    horizon: int = 1300
    max_speed: float = 0.5
    max_omega: float = 1.5

    def __post_init__(self):
        if not (0 < self.dt <= 0.1):
            raise InvalidConfigError("dt must lie in (0, 0.1]")
        if self.horizon < 1:
            raise InvalidConfigError("horizon must be >= 1")


@dataclass
class Disturbance:
    kind: str = "none"  # "none" | "start-offset" | "impulse"
    magnitude: float = 0.0
    trigger_step: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "start-offset", "impulse"):
            raise InvalidConfigError(f"unknown disturbance kind {self.kind!r}")
        if self.magnitude < 0:
            raise InvalidConfigError("magnitude must be non-negative")


@dataclass
class RolloutResult:
    trajectory: list[Pose]
    success: bool
    min_h: float
    recovery_activations: int
    steps_to_goal: int | None

    def to_json_line(self) -> str:
        doc = {
            "success": self.success,
            "min_h": self.min_h,
            "recovery_activations": self.recovery_activations,
            "steps_to_goal": self.steps_to_goal,
            "trajectory": [
                {"p": list(map(float, x.p)), "q": list(map(float, x.q))}
                for x in self.trajectory
            ],
        }
        return json.dumps(doc, sort_keys=True)


def clamp_action(u, max_speed: float, max_omega: float) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    out = u.copy()
    out[:3] = np.clip(out[:3], -max_speed, max_speed)
    out[3:] = np.clip(out[3:], -max_omega, max_omega)
    return out


def step(x: Pose, u, dt: float, max_speed: float, max_omega: float) -> Pose:
    """Integrate a clamped twist for one step; rotation via the exp map."""
    u = clamp_action(u, max_speed, max_omega)
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("non-finite action")
    p = x.p + dt * u[:3]
    w = u[3:]
    angle = float(np.linalg.norm(w)) * dt
    if angle > 1e-12:
        dq = quat_from_axis_angle(w, angle)
        q = quat_multiply(dq, x.q)
    else:
        q = x.q
    return Pose(p, q)


def goal_twist(x: Pose, goal: GoalSpec, gain: float) -> np.ndarray:
    """Proportional twist toward the goal pose (world-frame angular error)."""
    err_q = quat_multiply(goal.g_quat, quat_conjugate(x.q))
    return np.concatenate([gain * (goal.g_pos - x.p), gain * quat_to_rotvec(err_q)])


class NominalPolicy:
    """Noisy proportional servo to the goal pose."""

    def __init__(self, goal: GoalSpec, gain: float = 1.0, noise_std: float = 0.05):
        self.goal = goal
        self.gain = gain
        self.noise_std = noise_std

    def reset(self, rng: np.random.Generator) -> None:
        pass

    def __call__(self, x: Pose, rng: np.random.Generator) -> np.ndarray:
        u = goal_twist(x, self.goal, self.gain)
        if self.noise_std > 0:
            u = u + rng.normal(0.0, self.noise_std, 6)
        return u


class VisuomotorPolicy(NominalPolicy):
    """Perception-conditioned stand-in for a learned visuomotor policy.

    While the live visibility-times-familiarity confidence stays above the
    threshold the policy servos to the true goal; once confidence drops the
    policy has effectively lost the goal and servos toward a wrong, per-episode
    belief instead. It relocks only if the state re-enters a confident region.
    """

    def __init__(self, goal: GoalSpec, scene: Scene, cam: CameraModel,
                 model: PerceptionModel, ref: ReferenceDistribution,
                 gain: float = 1.0, noise_std: float = 0.05,
                 conf_threshold: float = 0.05, lost_radius: float = 0.5):
        super().__init__(goal, gain, noise_std)
        self.scene = scene
        self.cam = cam
        self.model = model
        self.ref = ref
        self.conf_threshold = conf_threshold
        self.lost_radius = lost_radius
        self._lost_goal: GoalSpec | None = None

    def reset(self, rng: np.random.Generator) -> None:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        self._lost_goal = GoalSpec(
            self.goal.g_pos + self.lost_radius * direction,
            self.goal.g_quat,
            self.goal.goal_radius,
        )

    def confidence(self, x: Pose) -> float:
        return perceptual_confidence(x, self.scene, self.cam, self.model, self.ref)

    def __call__(self, x: Pose, rng: np.random.Generator) -> np.ndarray:
        target = self.goal
        if self.confidence(x) < self.conf_threshold:
            target = self._lost_goal or self.goal
        u = goal_twist(x, target, self.gain)
        if self.noise_std > 0:
            u = u + rng.normal(0.0, self.noise_std, 6)
        return u


def nominal_policy(x: Pose, goal: GoalSpec, gain: float, noise_std: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Functional form of NominalPolicy for one-off calls."""
    return NominalPolicy(goal, gain, noise_std)(x, rng)


def _random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def rollout(config: SimConfig, policy, start: Pose,
            field: SafetyField | None = None,
            recovery: RecoveryParams | None = None,
            disturbance: Disturbance | None = None,
            rng_seed: int = 0) -> RolloutResult:
    """Run one episode; filter actions through the recovery projection when
    recovery params are given (which requires a field)."""
    if recovery is not None and field is None:
        raise InvalidConfigError("recovery filtering requires a safety field")
    disturbance = disturbance or Disturbance()
    rng = np.random.default_rng(rng_seed)
    dist_rng = np.random.default_rng(disturbance.rng_seed)
    if hasattr(policy, "reset"):
        policy.reset(rng)

    x = start
    if disturbance.kind == "start-offset" and disturbance.magnitude > 0:
        x = Pose(x.p + disturbance.magnitude * _random_unit(dist_rng), x.q)

    trajectory = [x]
    min_h = float("nan")
    activations = 0
    success = bool(np.linalg.norm(x.p - config.goal.g_pos) <= config.goal.goal_radius)
    steps_to_goal = 0 if success else None
    interior = field.interior_positions() if (
        recovery is not None and recovery.fallback == "retreat") else None

    for t in range(config.horizon):
        if success:
            break
        u = policy(x, rng)
        if recovery is not None:
            h, grad = field.query_with_gradient(x)
            min_h = min(min_h, h) if min_h == min_h else h
            retreat = None
            if (interior is not None and len(interior)
                    and float(grad @ u) < -recovery.alpha * h
                    and float(np.linalg.norm(grad)) < recovery.grad_eps):
                nearest = interior[np.argmin(np.linalg.norm(interior - x.p, axis=1))]
                retreat = nearest - x.p
            decision = recover(u, h, grad, recovery, retreat_target=retreat)
            if decision.modified:
                activations += 1
            u = decision.u_out
        elif field is not None:
            h = field.query(x)
            min_h = min(min_h, h) if min_h == min_h else h
        if disturbance.kind == "impulse" and t == disturbance.trigger_step and disturbance.magnitude > 0:
            x = Pose(x.p + disturbance.magnitude * _random_unit(dist_rng), x.q)
        x = step(x, u, config.dt, config.max_speed, config.max_omega)
        trajectory.append(x)
        if np.linalg.norm(x.p - config.goal.g_pos) <= config.goal.goal_radius:
            success = True
            steps_to_goal = t + 1
    if field is not None:
        h_last = field.query(x)
        min_h = min(min_h, h_last) if min_h == min_h else h_last

    return RolloutResult(trajectory, success, float(min_h), activations, steps_to_goal)


@dataclass
class EvalCell:
    condition: str
    method: str  # "raw" | "safe"
    n: int
    success_rate: float
    std_err: float


def evaluate(config: SimConfig, make_policy, field: SafetyField,
             recovery: RecoveryParams, conditions, start: Pose,
             n_rollouts: int, seeds=None) -> list[EvalCell]:
    """Success-rate table over (condition x raw/safe) cells.

    `make_policy(scene)` builds a fresh policy for a given scene variant;
    `conditions` is a list of (name, disturbance_template, scene) triples.
    Deterministic given the seed list.
    """
    if n_rollouts < 1:
        raise InvalidConfigError("n_rollouts must be >= 1")
    if seeds is None:
        seeds = list(range(n_rollouts))
    seeds = list(seeds)[:n_rollouts]

    cells = []
    for name, dist_template, scene in conditions:
        cfg = SimConfig(config.goal, scene, config.dt, config.horizon,
                        config.max_speed, config.max_omega)
        for method, rec in (("raw", None), ("safe", recovery)):
            outcomes = []
            for seed in seeds:
                dist = Disturbance(dist_template.kind, dist_template.magnitude,
                                   dist_template.trigger_step, rng_seed=seed)
                policy = make_policy(scene)
                res = rollout(cfg, policy, start, field=field, recovery=rec,
                              disturbance=dist, rng_seed=seed)
                outcomes.append(1.0 if res.success else 0.0)
            rate = float(np.mean(outcomes))
            se = float(np.std(outcomes, ddof=1) / np.sqrt(len(outcomes))) if len(outcomes) > 1 else 0.0
            cells.append(EvalCell(name, method, len(outcomes), rate, se))
    return cells


def eval_table_csv(cells) -> str:
    lines = ["condition,method,n,success_rate,std_err"]
    for c in cells:
        lines.append(f"{c.condition},{c.method},{c.n},{c.success_rate:.6f},{c.std_err:.6f}")
    return "\n".join(lines) + "\n"
