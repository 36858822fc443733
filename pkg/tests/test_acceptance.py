"""Release acceptance gate.

One test per acceptance criterion, named so the verbose run reads as a
checklist. Exact-arithmetic and property criteria run in seconds; the
learning-outcome criteria train real models on the curved toy vessel and
dominate the runtime. Each test ends by printing an explicit verdict
line for captured logs.
"""

import math
from pathlib import Path

import numpy as np
import pytest

from cathnav.demos import generate_demos
from cathnav.environment import OBS_DIM, RewardConfig, StepEvent, step_reward
from cathnav.kinematics import Action, CatheterSpec, clamp_action
from cathnav.learning import TrainConfig, train
from cathnav.learning.curiosity import FORWARD_WEIGHT, INVERSE_WEIGHT, Curiosity
from cathnav.learning.gail import Discriminator
from cathnav.learning.policy import GaussianPolicy, ValueNet
from cathnav.learning.trainer import total_loss
from cathnav.metrics import (
    curvature,
    kruskal_wallis,
    resample_path,
    success_rate,
    tracking_error,
)
from cathnav.scenario import toy_scenario
from cathnav.softbody import SoftBody, SoftBodyConfig, constraint_residual, pbd_step
from cathnav import cli

BENT = toy_scenario("bent")
BENT_DYNAMIC = toy_scenario("bent", dynamic=True)
SEEDS = (0, 1, 2, 3, 4)
TRAIN_BUDGET = 32_768  # env steps per training run
EVAL_EPISODES = 20


def verdict(line: str) -> None:
    print(f"ACCEPTANCE PASS: {line}")


# -- exact arithmetic ------------------------------------------------------


def test_reward_composition_is_exact():
    cfg = RewardConfig()
    assert step_reward(cfg, StepEvent()) == -1e-5
    assert step_reward(cfg, StepEvent(collided_non_minor=True)) == -1.00001
    assert (
        step_reward(cfg, StepEvent(reached_target=True, waypoint_hit=True)) == 1.04999
    )
    verdict("step reward compositions match the documented values exactly")


def test_bend_bound_holds_over_random_actions():
    rng = np.random.default_rng(2024)
    checked = 0
    for _ in range(200):
        spec = CatheterSpec(
            segment_length=float(rng.uniform(5.0, 120.0)),
            theta_max=float(rng.uniform(0.1, math.pi)),
            outer_diameter=float(rng.uniform(0.5, 9.0)),
            v_max=float(rng.uniform(0.5, 20.0)),
            dt=float(rng.uniform(0.01, 0.5)),
        )
        raws = rng.uniform(-2.0 * math.pi, 2.0 * math.pi, size=(500, 2))
        dls = rng.uniform(-5.0, 2.0 * spec.max_step_length, size=500)
        for (alpha, gamma), dl in zip(raws, dls):
            a = clamp_action(spec, Action(alpha=alpha, gamma=gamma, dl=dl))
            assert 0.0 <= a.dl <= spec.max_step_length
            bound = spec.theta_max * a.dl / spec.segment_length + 1e-12
            assert abs(a.alpha) <= bound
            assert abs(a.gamma) <= bound
            checked += 1
    assert checked == 100_000
    verdict("per-step bend bound holds over 1e5 random catheter/action pairs")


def test_loss_combination_is_linear():
    rng = np.random.default_rng(7)
    for _ in range(100):
        cfg = TrainConfig(
            rl_weight=float(rng.uniform(0.0, 2.0)),
            gail_weight=float(rng.uniform(0.0, 2.0)),
            bc_fraction=float(rng.uniform(0.0, 1.0)),
            curiosity_weight=float(rng.uniform(0.0, 2.0)),
        )
        terms = rng.normal(0.0, 10.0, size=(100, 4))
        for rl, gail, bc, cur in terms:
            expected = (
                cfg.rl_weight * (1.0 - cfg.bc_fraction) * rl
                + cfg.gail_weight * gail
                + cfg.rl_weight * cfg.bc_fraction * bc
                + cfg.curiosity_weight * cur
            )
            assert abs(total_loss(cfg, rl, gail, bc, cur) - expected) <= 1e-12
    assert total_loss(TrainConfig(), 1.0, 1.0, 1.0, 1.0) == 1.02
    verdict("combined loss is the documented linear form; all-ones case is 1.02")


# -- gradient correctness --------------------------------------------------


def _probe_gradients(loss_fn, params, rng, probes=5, h=1e-5, tol=1e-4):
    """Central-difference check of ``loss_fn() -> (loss, flat grads)``."""
    for _ in range(probes):
        layer = int(rng.integers(len(params)))
        p = params[layer]
        idx = int(rng.integers(p.size))
        orig = p.flat[idx]
        p.flat[idx] = orig + h
        hi = loss_fn()[0]
        p.flat[idx] = orig - h
        lo = loss_fn()[0]
        p.flat[idx] = orig
        numeric = (hi - lo) / (2.0 * h)
        analytic = loss_fn()[1][layer].flat[idx]
        assert abs(analytic - numeric) <= tol * max(1.0, abs(numeric))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(99)
    spec = CatheterSpec()
    obs = rng.normal(size=(16, OBS_DIM))
    next_obs = rng.normal(size=(16, OBS_DIM))
    actions = np.column_stack(
        [
            rng.uniform(-0.1, 0.1, size=16),
            rng.uniform(-0.1, 0.1, size=16),
            rng.uniform(0.0, spec.max_step_length, size=16),
        ]
    )
    targets = rng.normal(size=16)

    policy = GaussianPolicy(OBS_DIM, rng, hidden=16)
    _probe_gradients(
        lambda: policy.bc_loss_and_grads(obs, actions, spec),
        policy.net.parameters(),
        rng,
    )

    value_net = ValueNet(OBS_DIM, rng, hidden=16)
    _probe_gradients(
        lambda: value_net.mse_and_grads(obs, targets),
        value_net.net.parameters(),
        rng,
    )

    disc = Discriminator(OBS_DIM, rng, hidden=16)
    _probe_gradients(
        lambda: disc.loss_and_grads(obs[:8], actions[:8], obs[8:], actions[8:], spec),
        disc.net.parameters(),
        rng,
    )

    # the curiosity module stops gradients between its two objectives, so
    # each parameter block is probed against the objective that reaches it
    icm = Curiosity(OBS_DIM, rng, hidden=16)
    enc_n = len(icm.encoder.parameters())
    fwd_n = len(icm.forward_net.parameters())

    def icm_loss(term, weight, lo, hi):
        def fn():
            out = icm.losses_and_grads(obs, actions, next_obs, spec)
            return weight * out[term], out[3][lo:hi]

        return fn

    _probe_gradients(
        icm_loss(2, INVERSE_WEIGHT, 0, enc_n), icm.encoder.parameters(), rng
    )
    _probe_gradients(
        icm_loss(1, FORWARD_WEIGHT, enc_n, enc_n + fwd_n),
        icm.forward_net.parameters(),
        rng,
    )
    _probe_gradients(
        icm_loss(2, INVERSE_WEIGHT, enc_n + fwd_n, None),
        icm.inverse_net.parameters(),
        rng,
    )
    verdict("analytic gradients of all four networks match central differences")


# -- soft body -------------------------------------------------------------


def test_soft_body_is_sound():
    # a rest-state vessel under zero input must not drift
    body = SoftBody.from_mesh(BENT.mesh, config=BENT.softbody_config)
    start = body.positions.copy()
    for _ in range(1000):
        pbd_step(body, 0.05)
    assert np.abs(body.positions - start).max() <= 1e-6

    # a noisy 10-particle chain settles to <1% residual in 20 iterations
    rng = np.random.default_rng(0)
    rest = np.zeros((10, 3))
    rest[:, 0] = np.arange(10, dtype=np.float64)
    pos = rest + rng.normal(0.0, 0.2, size=rest.shape)
    chain = SoftBody(
        positions=pos,
        prev_positions=pos.copy(),
        rest_positions=rest,
        inverse_mass=np.ones(10),
        edges=np.stack([np.arange(9), np.arange(1, 10)], axis=1).astype(np.int64),
        rest_lengths=np.ones(9),
        faces=np.zeros((0, 3), dtype=np.int64),
        rest_normals=np.zeros((10, 3)),
        config=SoftBodyConfig(
            stiffness=1.0, solver_iterations=20, damping=0.0, anchor_stiffness=0.0
        ),
    )
    pbd_step(chain, 0.05)
    assert constraint_residual(chain) < 0.01

    # the driven simulation is bitwise deterministic
    twins = []
    for _ in range(2):
        b = SoftBody.from_mesh(
            BENT_DYNAMIC.mesh,
            config=BENT_DYNAMIC.softbody_config,
            heartbeat=BENT_DYNAMIC.heartbeat,
            pinned=BENT_DYNAMIC.pinned_indices(),
        )
        for _ in range(200):
            pbd_step(b, 0.05)
        twins.append(b.positions.copy())
    assert np.array_equal(twins[0], twins[1])
    verdict("soft body holds equilibrium, converges on the chain, and is bitwise deterministic")


# -- metrics oracles -------------------------------------------------------


def test_metric_oracles():
    kw = kruskal_wallis([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    assert kw.statistic == pytest.approx(3.857, abs=1e-3)
    assert kw.p_value == pytest.approx(0.0495, abs=1e-3)

    waypoints = np.column_stack(
        [np.linspace(0, 50, 12), np.linspace(0, 30, 12), np.zeros(12)]
    )
    dense = resample_path(waypoints, 500)
    series, mean, _ = tracking_error(dense, dense)
    assert np.all(series == 0.0) and mean == 0.0

    angles = np.linspace(0.0, 2.0 * np.pi, 400, endpoint=False)
    radius = 17.0
    circle = np.column_stack(
        [radius * np.cos(angles), radius * np.sin(angles), np.zeros_like(angles)]
    )
    series, _, _ = curvature(circle)
    assert np.allclose(series, 1.0 / radius, atol=1e-6)

    class _Stub:
        def __init__(self, success):
            self.success = success

    results = [_Stub(i < 42) for i in range(100)]
    assert success_rate(results) == 0.42
    verdict("metric oracles: rank test, tracking zero, circle curvature, exact rate")


# -- learning outcomes -----------------------------------------------------


def _evaluate(policy, scenario, seed: int) -> float:
    env = scenario.build_env(seed=seed)
    rng = np.random.default_rng(10_000 + seed)
    episodes = [
        env.run_episode(
            lambda o, _rng: policy.mean_action(o.vector(), env.active_spec), rng
        )
        for _ in range(EVAL_EPISODES)
    ]
    return success_rate(episodes)


@pytest.fixture(scope="module")
def trained_matrix():
    """Full model plus three single-module ablations across the seed set."""
    demos = generate_demos(BENT, 30, noise=0.05, seed=7)
    variants = {
        "full": {},
        "imitation_off": {"bc_fraction": 0.0},
        "adversarial_off": {"gail_weight": 0.0},
        "exploration_off": {"curiosity_weight": 0.0},
    }
    rates = {name: [] for name in variants}
    full_runs = []
    for name, overrides in variants.items():
        for seed in SEEDS:
            cfg = TrainConfig(
                max_steps=TRAIN_BUDGET,
                buffer_size=1024,
                batch_size=256,
                update_epochs=3,
                hidden=32,
                seed=seed,
                curriculum_window=20,
                **overrides,
            )
            result = train(BENT.build_env(seed=seed), demos, cfg)
            assert result.env_steps <= 100_000
            rates[name].append(_evaluate(result.policy, BENT, seed))
            if name == "full":
                full_runs.append(result)
    return rates, full_runs


def test_ablations_do_not_beat_the_full_model(trained_matrix):
    rates, _ = trained_matrix
    print("success rates by variant:", {k: v for k, v in rates.items()})
    for name in ("imitation_off", "adversarial_off", "exploration_off"):
        wins = sum(f >= a for f, a in zip(rates["full"], rates[name]))
        assert wins >= 3, f"full model beaten by {name} on {5 - wins}/5 seeds"
    verdict("full model matches or beats every single-module ablation on >=3/5 seeds")


def test_dynamics_only_degrade_success(trained_matrix):
    rates, full_runs = trained_matrix
    static_mean = float(np.mean(rates["full"]))
    dynamic_rates = [
        _evaluate(run.policy, BENT_DYNAMIC, seed)
        for run, seed in zip(full_runs, SEEDS)
    ]
    dynamic_mean = float(np.mean(dynamic_rates))
    print(f"static {static_mean:.2f} -> dynamic {dynamic_mean:.2f}")
    assert dynamic_mean <= static_mean
    verdict("moving walls and deformation never raise the static success rate")


def test_curriculum_bound_never_loosens(trained_matrix):
    _, full_runs = trained_matrix
    physical = BENT.catheter.theta_max
    for run in full_runs:
        series = [row["theta_max_current"] for row in run.log_rows]
        assert all(b <= a + 1e-12 for a, b in zip(series, series[1:]))
        assert series[-1] >= physical - 1e-12
    verdict("curriculum bend bound is non-increasing and ends at or above the physical bound")


# -- command line determinism ----------------------------------------------


RUN_YAML = """\
scenario: sc/scenario.yaml
output: {out}
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


def test_training_and_evaluation_are_deterministic(tmp_path):
    root = tmp_path
    assert cli.main(["gen-scenario", "--kind", "straight", "--out", str(root / "sc")]) == 0
    config = root / "run.yaml"
    assert (
        cli.main(
            [
                "demos",
                "--scenario", str(root / "sc" / "scenario.yaml"),
                "--out", str(root / "demos"),
                "--count", "4",
                "--noise", "0.05",
                "--seed", "1",
            ]
        )
        == 0
    )

    logs, reports = [], []
    for attempt in ("a", "b"):
        out = root / f"run_{attempt}"
        config.write_text(RUN_YAML.format(out=f"run_{attempt}"))
        assert cli.main(["train", "--config", str(config)]) == 0
        assert (
            cli.main(
                [
                    "evaluate",
                    "--checkpoint", str(out / "checkpoint.ckpt"),
                    "--scenario", str(root / "sc" / "scenario.yaml"),
                    "-n", "3",
                    "--seed", "5",
                    "--out", str(out / "report.json"),
                ]
            )
            == 0
        )
        logs.append((out / "log.csv").read_bytes())
        reports.append((out / "report.json").read_bytes())
    assert logs[0] == logs[1]
    assert reports[0] == reports[1]
    verdict("training logs and evaluation reports are byte-identical across reruns")
