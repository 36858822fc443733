"""Batch entry points: training runs, evaluation, planning, and comparisons.

Every command is deterministic given its config file and seeds, and every
artifact written here (checkpoints, reports, path files) carries the
scenario's config hash so later commands can refuse mismatched inputs.

Exit codes: 0 success, 2 configuration problem, 3 training divergence,
4 artifact/config hash mismatch.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from .demos import generate_demos, load_demo, load_demo_batch, save_demo_batch
from .environment import EpisodeResult
from .errors import ConfigError, SchemaMismatch, TrainingDiverged
from .kinematics import Action
from .learning import TrainConfig, load_init_params, train
from .metrics import (
    MetricsReport,
    episode_targeting_error,
    evaluate_episodes,
    kruskal_wallis,
    resample_path,
    target_distance_series,
    timesteps,
    tracking_error,
)
from .planner import load_planner
from .scenario import Scenario, load_scenario, toy_scenario, write_scenario_files

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_HASH = 4

PATH_FORMAT = "cathnav-path"
REPORT_FORMAT = "cathnav-report"


# -- run configuration -----------------------------------------------------


@dataclasses.dataclass
class RunConfig:
    """One training run: scenario, demonstration source, budget, output."""

    scenario: Path
    output: Path
    seed: int = 0
    train: dict = dataclasses.field(default_factory=dict)
    demo_path: Optional[Path] = None
    demo_count: int = 30
    demo_noise: float = 0.0
    init_from: Optional[Path] = None


_RUN_KEYS = {"scenario", "output", "seed", "train", "demos", "init_from"}
_DEMO_KEYS = {"path", "count", "noise"}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"run config not found: {path}")
    except yaml.YAMLError as err:
        raise ConfigError(f"unreadable run config {path}: {err}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: run config must be a mapping")
    unknown = set(raw) - _RUN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown run config keys {sorted(unknown)}")
    for key in ("scenario", "output"):
        if key not in raw:
            raise ConfigError(f"{path}: missing required key '{key}'")
    base = path.parent
    train_section = raw.get("train") or {}
    bad = set(train_section) - _TRAIN_KEYS
    if bad:
        if "seed" in bad:
            raise ConfigError(f"{path}: set 'seed' at the top level, not under train")
        raise ConfigError(f"{path}: unknown train keys {sorted(bad)}")
    demos_section = raw.get("demos") or {}
    bad = set(demos_section) - _DEMO_KEYS
    if bad:
        raise ConfigError(f"{path}: unknown demos keys {sorted(bad)}")
    return RunConfig(
        scenario=base / raw["scenario"],
        output=base / raw["output"],
        seed=int(raw.get("seed", 0)),
        train=dict(train_section),
        demo_path=(base / demos_section["path"]) if "path" in demos_section else None,
        demo_count=int(demos_section.get("count", 30)),
        demo_noise=float(demos_section.get("noise", 0.0)),
        init_from=(base / raw["init_from"]) if raw.get("init_from") else None,
    )


# -- artifact files --------------------------------------------------------


def write_path_file(path, result: EpisodeResult, scenario: Scenario) -> Path:
    """Greedy-rollout waypoints with tip poses, for guidance display."""
    points = []
    for i, position in enumerate(result.trajectory):
        if i == 0:
            pose = result.transitions[0][0].pose if result.transitions else None
        else:
            pose = result.transitions[i - 1][3].pose
        points.append(
            {
                "position": [float(x) for x in position],
                "alpha": float(pose.alpha) if pose else 0.0,
                "gamma": float(pose.gamma) if pose else 0.0,
            }
        )
    doc = {
        "format": PATH_FORMAT,
        "version": 1,
        "config_hash": scenario.config_hash(),
        "scenario": scenario.name,
        "partial": not result.success,
        "points": points,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))
    return path


def read_path_file(path, expect_hash: Optional[str] = None):
    """Returns (positions array, full document); checks format and hash."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"path file not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"unreadable path file {path}: {err}")
    if doc.get("format") != PATH_FORMAT or doc.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 {PATH_FORMAT} file")
    if expect_hash is not None and doc.get("config_hash") != expect_hash:
        raise SchemaMismatch(
            f"{path}: path for config {doc.get('config_hash')!r}, expected {expect_hash!r}"
        )
    positions = np.array([p["position"] for p in doc["points"]], dtype=np.float64)
    return positions, doc


def write_report_file(
    path,
    scenario: Scenario,
    report: MetricsReport,
    results: Sequence[EpisodeResult],
    seed: int,
) -> Path:
    """Aggregate metrics plus raw per-episode samples for significance tests."""
    dense = resample_path(scenario.centerline, 500)
    samples = {
        "steps": [int(timesteps(r)) for r in results],
        "duration": [float(timesteps(r) * scenario.catheter.dt) for r in results],
        "targeting_error": [episode_targeting_error(r) for r in results],
        "tracking_error": [
            float(tracking_error(r.trajectory, dense)[0].mean()) for r in results
        ],
        "success": [bool(r.success) for r in results],
    }
    doc = {
        "format": REPORT_FORMAT,
        "version": 1,
        "config_hash": scenario.config_hash(),
        "scenario": scenario.name,
        "n": len(results),
        "seed": seed,
        "report": {
            "success_rate": report.success_rate,
            "n_success": report.n_success,
            "n_total": report.n_total,
            "mean_steps": report.mean_steps,
            "mean_duration": report.mean_duration,
            "targeting_error": report.targeting_error,
            "tracking_mean": report.tracking_mean,
            "tracking_std": report.tracking_std,
            "curvature_mean": report.curvature_mean,
            "curvature_std": report.curvature_std,
        },
        "samples": samples,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1))
    return path


def read_report_file(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"report not found: {path}")
    except json.JSONDecodeError as err:
        raise ConfigError(f"unreadable report {path}: {err}")
    if doc.get("format") != REPORT_FORMAT or doc.get("version") != 1:
        raise ConfigError(f"{path}: not a version-1 {REPORT_FORMAT} file")
    return doc


# -- plots -----------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def save_error_plot(results: Sequence[EpisodeResult], path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7, 4))
    for r in results:
        series = target_distance_series(r)
        ax.plot(np.arange(len(series)), series, lw=0.8, alpha=0.5)
    ax.set_xlabel("step")
    ax.set_ylabel("tip-to-target distance (mm)")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_trajectory_plot(
    results: Sequence[EpisodeResult], scenario: Scenario, path
) -> Path:
    plt = _pyplot()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    planes = (("x", 0), ("z", 2))
    line = scenario.centerline
    target = scenario.target_region
    for ax, (label, col) in zip(axes, planes):
        ax.plot(line[:, col], line[:, 1], color="black", lw=2, label="centerline")
        for r in results:
            t = r.trajectory
            ax.plot(t[:, col], t[:, 1], lw=0.8, alpha=0.5)
        circle = plt.Circle(
            (target.center[col], target.center[1]),
            target.radius,
            fill=False,
            color="tab:green",
            label="target",
        )
        ax.add_patch(circle)
        ax.set_xlabel(f"{label} (mm)")
        ax.set_ylabel("y (mm)")
        ax.set_aspect("equal")
    axes[0].legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


# -- subcommands -----------------------------------------------------------


def cmd_gen_scenario(args) -> int:
    scenario = toy_scenario(args.kind, dynamic=args.dynamic)
    yaml_path = write_scenario_files(args.out, scenario)
    print(f"wrote scenario '{scenario.name}' to {yaml_path}")
    print(f"config hash {scenario.config_hash()}")
    return EXIT_OK


def cmd_demos(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.count < 1:
        raise ConfigError("count must be at least 1")
    demos = generate_demos(scenario, args.count, noise=args.noise, seed=args.seed)
    paths = save_demo_batch(demos, args.out)
    successes = sum(1 for d in demos if d.outcome)
    print(f"wrote {len(paths)} demonstrations to {Path(args.out)}")
    print(f"successful {successes}/{len(demos)}")
    print(f"config hash {scenario.config_hash()}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = load_run_config(args.config)
    if args.seed is not None:
        run = dataclasses.replace(run, seed=args.seed)
    scenario = load_scenario(run.scenario)
    if run.demo_path is not None:
        demos = load_demo_batch(run.demo_path, expect_hash=scenario.config_hash())
    else:
        demos = generate_demos(
            scenario, run.demo_count, noise=run.demo_noise, seed=run.seed
        )
    init = None
    if run.init_from is not None:
        init, _ = load_init_params(run.init_from, expect_hash=scenario.config_hash())
    cfg = TrainConfig(**run.train, seed=run.seed)
    out = Path(run.output)
    out.mkdir(parents=True, exist_ok=True)
    env = scenario.build_env(seed=run.seed)
    result = train(
        env,
        demos,
        cfg,
        log_path=out / "log.csv",
        checkpoint_path=out / "checkpoint.ckpt",
        checkpoint_meta={"config_hash": scenario.config_hash()},
        init_params=init,
    )
    last = result.log_rows[-1] if result.log_rows else {}
    print(f"trained {result.env_steps} env steps over {len(result.log_rows)} iterations")
    if last:
        print(f"final success_rate {last['success_rate']:.3f}")
    print(f"checkpoint {out / 'checkpoint.ckpt'}")
    print(f"log {out / 'log.csv'}")
    print(f"config hash {scenario.config_hash()}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.n < 1:
        raise ConfigError("n must be at least 1")
    scenario = load_scenario(args.scenario)
    planner = load_planner(args.checkpoint, scenario)
    results = planner.rollouts(args.n, seed=args.seed)
    report = evaluate_episodes(results, desired=scenario.centerline)
    for line in report.lines():
        print(line)
    print(f"config hash {scenario.config_hash()}")
    if args.out:
        path = write_report_file(args.out, scenario, report, results, args.seed)
        print(f"report {path}")
    if args.plot:
        plot_dir = Path(args.plot)
        print(f"plot {save_error_plot(results, plot_dir / 'error_vs_time.png')}")
        print(
            f"plot {save_trajectory_plot(results, scenario, plot_dir / 'trajectories.png')}"
        )
    return EXIT_OK


def cmd_plan(args) -> int:
    scenario = load_scenario(args.scenario)
    planner = load_planner(args.checkpoint, scenario)
    result = planner.plan(seed=args.seed)
    path = write_path_file(args.out, result, scenario)
    state = "complete" if result.success else "partial"
    print(f"{state} path with {len(result.trajectory)} points")
    print(f"path {path}")
    print(f"config hash {scenario.config_hash()}")
    return EXIT_OK


def cmd_compare(args) -> int:
    doc_a = read_report_file(args.report_a)
    doc_b = read_report_file(args.report_b)
    rows = []
    for doc, name in ((doc_a, args.report_a), (doc_b, args.report_b)):
        if not doc.get("samples"):
            raise ConfigError(f"{name}: report carries no raw samples")
    shared = sorted(set(doc_a["samples"]) & set(doc_b["samples"]) - {"success"})
    if not shared:
        raise ConfigError("reports share no sample metrics")
    print(f"A {doc_a['config_hash']}  n={doc_a['n']}")
    print(f"B {doc_b['config_hash']}  n={doc_b['n']}")
    print(f"{'metric':<18} {'H':>10} {'p':>12}  significant(0.05)")
    out_rows = []
    for key in shared:
        sig = kruskal_wallis([doc_a["samples"][key], doc_b["samples"][key]])
        marker = "yes" if sig.p_value < 0.05 else "no"
        print(f"{key:<18} {sig.statistic:>10.4f} {sig.p_value:>12.6f}  {marker}")
        out_rows.append(
            {
                "metric": key,
                "H": sig.statistic,
                "p": sig.p_value,
                "significant": sig.p_value < 0.05,
            }
        )
    if args.out:
        doc = {
            "format": "cathnav-comparison",
            "version": 1,
            "a": {"path": str(args.report_a), "config_hash": doc_a["config_hash"]},
            "b": {"path": str(args.report_b), "config_hash": doc_b["config_hash"]},
            "rows": out_rows,
        }
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, sort_keys=True, indent=1))
        print(f"comparison {path}")
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = load_scenario(args.scenario)
    demo = load_demo(args.demo, expect_hash=scenario.config_hash())
    env = scenario.build_env(seed=0)
    start = int(demo.meta.get("start_pose", 0))
    target = demo.meta.get("target_particle")
    if target is not None:
        env.restore(start, int(target))
    else:
        env.reset(np.random.default_rng(0))
    trajectory = [env.pose.position.copy()]
    replay_success = False
    done = False
    for row in demo.actions:
        if done:
            break
        action = Action(alpha=float(row[0]), gamma=float(row[1]), dl=float(row[2]))
        _, _, done, info = env.step(action)
        trajectory.append(env.pose.position.copy())
        if done:
            ev = info["events"]
            replay_success = ev.reached_target and not ev.collided_non_minor
    matched = replay_success == demo.outcome
    print(f"replayed {len(trajectory) - 1} of {len(demo.actions)} recorded steps")
    print(f"recorded outcome {demo.outcome}, replayed outcome {replay_success}")
    if args.plot:
        fake = EpisodeResult(
            transitions=[],
            success=replay_success,
            first_step=0,
            last_step=len(trajectory) - 2,
            start_time=0.0,
            end_time=(len(trajectory) - 1) * scenario.catheter.dt,
            trajectory=np.array(trajectory),
            reward_sum=0.0,
        )
        print(f"plot {save_trajectory_plot([fake], scenario, args.plot)}")
    if not matched:
        print("replay DIVERGED from the recording", file=sys.stderr)
        return 1
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import build_app

    scenario = load_scenario(args.scenario)
    guidance_path = None
    if args.guidance == "cgail":
        if not args.path:
            raise ConfigError("guidance 'cgail' needs --path with a planned path file")
        guidance_path, _ = read_path_file(args.path, expect_hash=scenario.config_hash())
    app = build_app(scenario, guidance=args.guidance, guidance_path=guidance_path)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cathnav",
        description="Catheter navigation: simulation, learning, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenario", help="write a built-in toy scenario to disk")
    p.add_argument("--kind", choices=("straight", "bent"), default="straight")
    p.add_argument("--dynamic", action="store_true", help="enable heartbeat motion")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("demos", help="record scripted-expert demonstrations")
    p.add_argument("--scenario", required=True, help="scenario YAML")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=30)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demos)

    p = sub.add_parser("train", help="run training from a run config file")
    p.add_argument("--config", required=True, help="run config YAML")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a checkpoint and report metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("-n", type=int, default=100, help="number of episodes")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="write the report as JSON")
    p.add_argument("--plot", default=None, help="directory for plot images")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plan", help="export the greedy rollout as a path file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("compare", help="significance test between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--out", default=None, help="write the comparison as JSON")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-run a recorded demonstration")
    p.add_argument("--demo", required=True, help="demonstration JSONL file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plot", default=None, help="write a trajectory image")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the teleoperation session server")
    p.add_argument("--scenario", required=True)
    p.add_argument("--guidance", choices=("centerline", "cgail"), default="centerline")
    p.add_argument("--path", default=None, help="path file for cgail guidance")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaMismatch as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_HASH
    except TrainingDiverged as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
