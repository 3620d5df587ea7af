"""Command-line interface: build a safety field from demonstrations, query it,
run filtered/raw rollouts, batch-evaluate success rates, and export fields.

Exit codes: 0 success, 1 task failure (--require-success), 2 usage/config
error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from .benchmark import make_demos
from .config import (
    ConfigError,
    build_camera,
    build_goal,
    build_perturbation,
    build_recovery,
    build_scene,
    build_sim_config,
    load_config,
    load_demos,
    save_demos,
)
from .estimator import SafeSetEstimator
from .fileio import atomic_write_text
from .geometry import InvalidInputError, Pose
from .perception import (
    DefaultPerceptionModel,
    InsufficientDataError,
    fit_reference,
    render_synthetic,
)
from .safeset import SafetyField
from .sim import Disturbance, NominalPolicy, VisuomotorPolicy, eval_table_csv, evaluate, rollout

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3

log = logging.getLogger("viewsafe")


def _fit_estimator(cfg: dict, demos) -> SafeSetEstimator:
    est = SafeSetEstimator(
        scene=build_scene(cfg),
        camera=build_camera(cfg),
        goal=build_goal(cfg),
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
    )
    return est.fit(demos)


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    demos = load_demos(args.demos)
    est = _fit_estimator(cfg, demos)
    est.field_.save_json(args.out)
    values = est.field_.values
    print(f"candidates: {est.n_candidates_}")
    print(f"retained (h > 0): {est.n_positive_}")
    qs = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
    print(
        "h quantiles: min=%.4f q25=%.4f median=%.4f q75=%.4f max=%.4f"
        % tuple(qs)
    )
    print(f"field written to {args.out}")
    return EXIT_OK


def cmd_query(args) -> int:
    field = SafetyField.load_json(args.field)
    pose = Pose.from_vector(np.array(args.pose, dtype=float))
    h = field.query(pose)
    grad = field.gradient(pose)
    if h > 1e-6:
        label = "inside"
    elif h < -1e-6:
        label = "outside"
    else:
        label = "boundary"
    print(f"h = {h:.6f} ({label})")
    print("grad =", " ".join(f"{g:.6f}" for g in grad))
    return EXIT_OK


def _make_policy_factory(cfg: dict, demos):
    """Visuomotor stand-in when demos are available, nominal servo otherwise."""
    goal = build_goal(cfg)
    cam = build_camera(cfg)
    s = cfg["sim"]
    if demos is None:
        def factory(scene):
            return NominalPolicy(goal, s["gain"], s["noise_std"])
        return factory
    clean_scene = build_scene(cfg)
    clean_model = DefaultPerceptionModel(clean_scene, cam)
    embeddings = [
        clean_model.embed(render_synthetic(clean_scene, cam, pose))
        for traj in demos for pose in traj
    ]
    ref = fit_reference(embeddings, cfg["perception"]["lambda_reg"])

    def factory(scene):
        model = DefaultPerceptionModel(scene, cam)
        return VisuomotorPolicy(
            goal, scene, cam, model, ref,
            gain=s["gain"], noise_std=s["noise_std"],
            conf_threshold=s["conf_threshold"], lost_radius=s["lost_radius"],
        )

    return factory


def _start_pose(cfg: dict, demos, arg_start) -> Pose:
    if arg_start is not None:
        return Pose.from_vector(np.array(arg_start, dtype=float))
    if cfg["sim"]["start"] is not None:
        return Pose.from_vector(np.array(cfg["sim"]["start"], dtype=float))
    if demos:
        return demos[0][0]
    raise ConfigError("no start pose: set sim.start, pass --start, or pass --demos")


def cmd_rollout(args) -> int:
    cfg = load_config(args.config)
    field = SafetyField.load_json(args.field)
    demos = load_demos(args.demos) if args.demos else None
    start = _start_pose(cfg, demos, args.start)
    sim_cfg = build_sim_config(cfg)
    disturbance = Disturbance(args.disturbance, args.magnitude,
                              args.trigger_step, rng_seed=args.seed)
    recovery = build_recovery(cfg) if args.mode == "safe" else None
    policy = _make_policy_factory(cfg, demos)(sim_cfg.scene)
    result = rollout(sim_cfg, policy, start, field=field, recovery=recovery,
                     disturbance=disturbance, rng_seed=args.seed)
    atomic_write_text(args.out, result.to_json_line() + "\n")
    print(
        f"success={result.success} min_h={result.min_h:.4f} "
        f"recovery_activations={result.recovery_activations} "
        f"steps_to_goal={result.steps_to_goal}"
    )
    if args.require_success and not result.success:
        return EXIT_TASK_FAILURE
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    field = SafetyField.load_json(args.field)
    demos = load_demos(args.demos) if args.demos else None
    start = _start_pose(cfg, demos, args.start)
    sim_cfg = build_sim_config(cfg)
    e = cfg["eval"]
    clean_scene = build_scene(cfg)
    clutter_scene = build_scene(cfg, extra_distractor=True)
    impulse = Disturbance("impulse", e["impulse_magnitude"], e["trigger_step"])
    none = Disturbance("none")
    conditions = [
        ("clean", none, clean_scene),
        ("impulse", impulse, clean_scene),
        ("distractor", none, clutter_scene),
        ("impulse+distractor", impulse, clutter_scene),
    ]
    seeds = [int(v) for v in args.seeds.split(",")] if args.seeds else None
    cells = evaluate(sim_cfg, _make_policy_factory(cfg, demos), field,
                     build_recovery(cfg), conditions, start,
                     n_rollouts=args.n, seeds=seeds)
    csv_text = eval_table_csv(cells)
    atomic_write_text(args.out, csv_text)
    print(csv_text, end="")
    return EXIT_OK


def cmd_export(args) -> int:
    SafetyField.load_json(args.field).save_csv(args.out)
    print(f"exported to {args.out}")
    return EXIT_OK


def cmd_make_demos(args) -> int:
    cfg = load_config(args.config)
    demos = make_demos(build_goal(cfg), n_traj=args.n_traj, rng_seed=cfg["rng_seed"] + 7)
    save_demos(demos, args.out)
    print(f"wrote {args.n_traj} synthetic trajectories to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viewsafe",
        description="Perception-defined safe sets with runtime recovery filtering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="construct a safety field from demonstrations")
    p.add_argument("--config", required=True)
    p.add_argument("--demos", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("query", help="query h and its gradient at a pose")
    p.add_argument("--field", required=True)
    # note: a 7-tuple metavar here breaks argparse's missing-argument error
    # on Python 3.10, so a single placeholder is used instead
    p.add_argument("pose", nargs=7, type=float, metavar="PX_PY_PZ_QW_QX_QY_QZ")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("rollout", help="run one simulated episode")
    p.add_argument("--config", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--demos")
    p.add_argument("--mode", choices=["raw", "safe"], default="safe")
    p.add_argument("--disturbance", choices=["none", "start-offset", "impulse"],
                   default="none")
    p.add_argument("--magnitude", type=float, default=0.0)
    p.add_argument("--trigger-step", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--start", nargs=7, type=float)
    p.add_argument("--out", required=True)
    p.add_argument("--require-success", action="store_true")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="success-rate table over disturbance conditions")
    p.add_argument("--config", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--demos")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--seeds", help="comma-separated seed list")
    p.add_argument("--start", nargs=7, type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export", help="export a field file to CSV")
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("make-demos", help="write synthetic benchmark demonstrations")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-traj", type=int, default=3)
    p.set_defaults(func=cmd_make_demos)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("VIEWSAFE_LOG_LEVEL", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, InvalidInputError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
