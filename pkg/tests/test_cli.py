"""Subcommand behavior, artifact formats, and exit codes."""

import json

import numpy as np
import pytest

from cathnav.cli import (
    EXIT_CONFIG,
    EXIT_HASH,
    EXIT_OK,
    build_parser,
    main,
    read_path_file,
    read_report_file,
)
from cathnav.demos import load_demo
from cathnav.scenario import load_scenario

RUN_YAML = """\
scenario: sc/scenario.yaml
output: run
seed: 3
demos:
  path: demos
train:
  max_steps: 384
  buffer_size: 192
  batch_size: 64
  update_epochs: 2
  hidden: 16
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["gen-scenario", "--kind", "straight", "--out", str(root / "sc")]) == EXIT_OK
    assert (
        main(
            [
                "demos",
                "--scenario",
                str(root / "sc" / "scenario.yaml"),
                "--out",
                str(root / "demos"),
                "--count",
                "3",
                "--noise",
                "0.05",
                "--seed",
                "1",
            ]
        )
        == EXIT_OK
    )
    (root / "run.yaml").write_text(RUN_YAML)
    assert main(["train", "--config", str(root / "run.yaml")]) == EXIT_OK
    return {
        "root": root,
        "scenario": root / "sc" / "scenario.yaml",
        "demos": root / "demos",
        "checkpoint": root / "run" / "checkpoint.ckpt",
        "log": root / "run" / "log.csv",
    }


def test_gen_scenario_roundtrips(workspace):
    scenario = load_scenario(workspace["scenario"])
    assert scenario.name == "toy-straight"
    assert len(scenario.centerline) > 2


def test_demos_command_writes_batch(workspace):
    files = sorted(workspace["demos"].glob("demo_*.jsonl"))
    assert len(files) == 3
    scenario = load_scenario(workspace["scenario"])
    demo = load_demo(files[0], expect_hash=scenario.config_hash())
    assert demo.observations.shape[1] == 23


def test_train_writes_artifacts(workspace):
    assert workspace["checkpoint"].exists()
    header = workspace["log"].read_text().splitlines()[0]
    assert header.split(",")[0] == "iteration"
    assert "theta_max_current" in header


def test_train_is_deterministic(workspace, tmp_path):
    (tmp_path / "run.yaml").write_text(RUN_YAML.replace("output: run", "output: run2"))
    (tmp_path / "sc").symlink_to(workspace["root"] / "sc")
    (tmp_path / "demos").symlink_to(workspace["root"] / "demos")
    assert main(["train", "--config", str(tmp_path / "run.yaml")]) == EXIT_OK
    assert (tmp_path / "run2" / "log.csv").read_bytes() == workspace["log"].read_bytes()


def test_evaluate_defaults_to_100_episodes():
    args = build_parser().parse_args(
        ["evaluate", "--checkpoint", "c", "--scenario", "s"]
    )
    assert args.n == 100
    assert args.seed == 0


def test_evaluate_writes_identical_reports_for_same_seed(workspace, tmp_path):
    base = [
        "evaluate",
        "--checkpoint",
        str(workspace["checkpoint"]),
        "--scenario",
        str(workspace["scenario"]),
        "-n",
        "3",
        "--seed",
        "0",
    ]
    assert main(base + ["--out", str(tmp_path / "a.json")]) == EXIT_OK
    assert main(base + ["--out", str(tmp_path / "b.json")]) == EXIT_OK
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    doc = read_report_file(tmp_path / "a.json")
    assert doc["n"] == 3
    assert len(doc["samples"]["steps"]) == 3
    assert doc["config_hash"] == load_scenario(workspace["scenario"]).config_hash()


def test_evaluate_rejects_zero_episodes(workspace):
    code = main(
        [
            "evaluate",
            "--checkpoint",
            str(workspace["checkpoint"]),
            "--scenario",
            str(workspace["scenario"]),
            "-n",
            "0",
        ]
    )
    assert code == EXIT_CONFIG


def test_evaluate_refuses_mismatched_scenario(workspace, tmp_path):
    assert (
        main(["gen-scenario", "--kind", "bent", "--out", str(tmp_path / "other")])
        == EXIT_OK
    )
    code = main(
        [
            "evaluate",
            "--checkpoint",
            str(workspace["checkpoint"]),
            "--scenario",
            str(tmp_path / "other" / "scenario.yaml"),
            "-n",
            "2",
        ]
    )
    assert code == EXIT_HASH


def test_evaluate_emits_plots(workspace, tmp_path):
    code = main(
        [
            "evaluate",
            "--checkpoint",
            str(workspace["checkpoint"]),
            "--scenario",
            str(workspace["scenario"]),
            "-n",
            "2",
            "--plot",
            str(tmp_path / "plots"),
        ]
    )
    assert code == EXIT_OK
    for name in ("error_vs_time.png", "trajectories.png"):
        assert (tmp_path / "plots" / name).stat().st_size > 1000


def test_plan_exports_interior_path(workspace, tmp_path):
    out = tmp_path / "path.json"
    code = main(
        [
            "plan",
            "--checkpoint",
            str(workspace["checkpoint"]),
            "--scenario",
            str(workspace["scenario"]),
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    scenario = load_scenario(workspace["scenario"])
    positions, doc = read_path_file(out, expect_hash=scenario.config_hash())
    assert doc["partial"] is False
    # straight toy tube: radius 8 around the y axis
    radial = np.sqrt(positions[:, 0] ** 2 + positions[:, 2] ** 2)
    assert np.all(radial < 8.0)
    rewritten = json.loads(out.read_text())
    assert [p["position"] for p in rewritten["points"]] == [
        [float(x) for x in row] for row in positions
    ]


def test_compare_identical_report_is_never_significant(workspace, tmp_path):
    report = tmp_path / "r.json"
    assert (
        main(
            [
                "evaluate",
                "--checkpoint",
                str(workspace["checkpoint"]),
                "--scenario",
                str(workspace["scenario"]),
                "-n",
                "3",
                "--out",
                str(report),
            ]
        )
        == EXIT_OK
    )
    out = tmp_path / "cmp.json"
    assert main(["compare", str(report), str(report), "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    for row in doc["rows"]:
        assert row["H"] == 0.0
        assert row["p"] == 1.0
        assert row["significant"] is False


def test_compare_refuses_missing_samples(workspace, tmp_path):
    report = tmp_path / "r.json"
    assert (
        main(
            [
                "evaluate",
                "--checkpoint",
                str(workspace["checkpoint"]),
                "--scenario",
                str(workspace["scenario"]),
                "-n",
                "2",
                "--out",
                str(report),
            ]
        )
        == EXIT_OK
    )
    doc = json.loads(report.read_text())
    doc["samples"] = {}
    bare = tmp_path / "bare.json"
    bare.write_text(json.dumps(doc))
    assert main(["compare", str(report), str(bare)]) == EXIT_CONFIG


def test_replay_reproduces_recording(workspace):
    demo = sorted(workspace["demos"].glob("demo_*.jsonl"))[0]
    code = main(
        ["replay", "--demo", str(demo), "--scenario", str(workspace["scenario"])]
    )
    assert code == EXIT_OK


def test_replay_detects_divergence(workspace, tmp_path):
    source = sorted(workspace["demos"].glob("demo_*.jsonl"))[0]
    lines = source.read_text().splitlines()
    zeroed = []
    for line in lines:
        record = json.loads(line)
        if record.get("kind") == "step":
            record["action"] = [0.0, 0.0, 0.0]
        zeroed.append(json.dumps(record, sort_keys=True))
    tampered = tmp_path / "tampered.jsonl"
    tampered.write_text("\n".join(zeroed) + "\n")
    code = main(
        ["replay", "--demo", str(tampered), "--scenario", str(workspace["scenario"])]
    )
    assert code == 1


def test_run_config_rejects_unknown_and_nested_seed(workspace, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(RUN_YAML + "extra_key: 1\n")
    assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
    nested = tmp_path / "nested.yaml"
    nested.write_text(RUN_YAML.replace("  hidden: 16", "  hidden: 16\n  seed: 2"))
    assert main(["train", "--config", str(nested)]) == EXIT_CONFIG
    assert main(["train", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG


def test_parser_requires_subcommand():
    with pytest.raises(SystemExit) as err:
        main([])
    assert err.value.code == 2
