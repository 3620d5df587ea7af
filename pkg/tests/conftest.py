"""Shared fixtures: the fitted desk-scale benchmark used across test modules."""

from dataclasses import dataclass

import pytest

from viewsafe.benchmark import default_config, make_demos
from viewsafe.config import (
    build_camera,
    build_goal,
    build_perturbation,
    build_recovery,
    build_scene,
    build_sim_config,
)
from viewsafe.estimator import SafeSetEstimator
from viewsafe.perception import DefaultPerceptionModel
from viewsafe.sim import VisuomotorPolicy


@dataclass
class Bench:
    cfg: dict
    goal: object
    scene: object
    scene_distractor: object
    cam: object
    demos: list
    est: SafeSetEstimator
    field: object
    sim_cfg: object
    recovery: object

    def make_policy(self, scene=None):
        scene = scene if scene is not None else self.scene
        s = self.cfg["sim"]
        return VisuomotorPolicy(
            self.goal, scene, self.cam,
            DefaultPerceptionModel(scene, self.cam), self.est.ref_,
            gain=s["gain"], noise_std=s["noise_std"],
            conf_threshold=s["conf_threshold"], lost_radius=s["lost_radius"],
        )

    @property
    def demo_starts(self):
        return [traj[0] for traj in self.demos]


@pytest.fixture(scope="session")
def bench() -> Bench:
    cfg = default_config()
    goal = build_goal(cfg)
    scene = build_scene(cfg)
    cam = build_camera(cfg)
    demos = make_demos(goal)
    est = SafeSetEstimator(
        scene=scene, camera=cam, goal=goal,
        perturbation=build_perturbation(cfg),
        margin=cfg["constraint"]["margin"],
        clearance_eps=cfg["constraint"]["eps"],
        tau=cfg["field"]["tau"],
        lambda_q=cfg["field"]["lambda_q"],
        k=cfg["field"]["k"],
        fd_step_pos=cfg["field"]["fd_step_pos"],
        fd_step_rot=cfg["field"]["fd_step_rot"],
        support_factor=cfg["field"]["support_factor"],
        lambda_reg=cfg["perception"]["lambda_reg"],
    ).fit(demos)
    return Bench(
        cfg=cfg, goal=goal, scene=scene,
        scene_distractor=build_scene(cfg, extra_distractor=True),
        cam=cam, demos=demos, est=est, field=est.field_,
        sim_cfg=build_sim_config(cfg), recovery=build_recovery(cfg),
    )
