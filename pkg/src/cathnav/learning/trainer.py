"""The combined training loop: on-policy updates shaped by demonstrations.

Each iteration collects a fixed-size on-policy buffer, mixes three reward
streams (environment reward, imitation reward from the discriminator,
curiosity bonus), and runs minibatch updates of every network against the
documented combined loss. Demonstration pairs feed only the discriminator
and the cloning term, never the on-policy buffer. A term whose weight is
zero is skipped entirely, which is how the ablations switch modules off.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ..environment import NavEnv
from ..errors import ConfigError, TrainingDiverged
from .checkpoint import save_checkpoint
from .curiosity import Curiosity
from .curriculum import CurriculumState, curriculum_update, start_curriculum
from .gail import Discriminator, gail_update
from .nets import Adam, add_scaled, zeros_like_params
from .policy import GaussianPolicy, ValueNet
from .ppo import discounted_gae, discounted_returns, normalize, ppo_loss_and_grads

LOG_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_reward",
    "success_rate",
    "loss_ppo",
    "loss_gail",
    "loss_bc",
    "loss_curiosity",
    "theta_max_current",
)


@dataclass(frozen=True)
class TrainConfig:
    """Weights, horizons, and sizes of the training stack.

    ``rl_weight`` scales the on-policy term and, through ``bc_fraction``,
    how much of it is diverted to cloning; ``gail_weight`` scales the
    discriminator objective; ``curiosity_weight`` the exploration module.
    """

    rl_weight: float = 0.2
    gail_weight: float = 0.8
    bc_fraction: float = 0.7
    curiosity_weight: float = 0.02
    entropy_coef: float = 5.0e-4
    discount: float = 0.99
    gail_discount: float = 0.99
    max_steps: int = 500_000
    batch_size: int = 1024
    buffer_size: int = 10_240
    learning_rate: float = 3.0e-4
    clip_ratio: float = 0.2
    gae_lambda: float = 0.95
    update_epochs: int = 3
    value_coef: float = 0.5
    intrinsic_scale: float = 0.01
    hidden: int = 64
    seed: int = 0
    curriculum: bool = True
    curriculum_initial: float = 2.0
    curriculum_decay: float = 0.8
    curriculum_threshold: float = 0.5
    curriculum_window: int = 50

    def __post_init__(self):
        for name in ("rl_weight", "gail_weight", "curiosity_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not 0.0 <= self.bc_fraction <= 1.0:
            raise ConfigError("bc_fraction must lie in [0, 1]")
        if self.batch_size < 1 or self.buffer_size < 1:
            raise ConfigError("batch_size and buffer_size must be positive")
        if self.buffer_size % self.batch_size != 0:
            raise ConfigError("buffer_size must be a multiple of batch_size")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be positive")
        if not 0.0 < self.discount <= 1.0 or not 0.0 < self.gail_discount <= 1.0:
            raise ConfigError("discounts must lie in (0, 1]")


def total_loss(cfg: TrainConfig, rl: float, gail: float, bc: float, curiosity: float) -> float:
    """The documented linear combination of the four objectives."""
    return (
        cfg.rl_weight * (1.0 - cfg.bc_fraction) * rl
        + cfg.gail_weight * gail
        + cfg.rl_weight * cfg.bc_fraction * bc
        + cfg.curiosity_weight * curiosity
    )


@dataclass
class TrainResult:
    policy: GaussianPolicy
    value_net: ValueNet
    disc: Discriminator
    curiosity: Curiosity
    log_rows: List[dict]
    env_steps: int
    curriculum_state: CurriculumState
    diverged: bool = False


def write_log_csv(rows: Sequence[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_COLUMNS})
    return path


def read_log_csv(path) -> List[dict]:
    with open(path, newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


class _Buffer:
    def __init__(self, size: int, obs_dim: int):
        self.obs = np.zeros((size, obs_dim))
        self.next_obs = np.zeros((size, obs_dim))
        self.raw = np.zeros((size, 3))
        self.actions = np.zeros((size, 3))
        self.rewards = np.zeros(size)
        self.dones = np.zeros(size, dtype=bool)
        self.fill = 0

    def push(self, obs, next_obs, raw, action, reward, done):
        i = self.fill
        self.obs[i] = obs
        self.next_obs[i] = next_obs
        self.raw[i] = raw
        self.actions[i] = action
        self.rewards[i] = reward
        self.dones[i] = done
        self.fill += 1


def train(
    env: NavEnv,
    demos: Sequence,
    cfg: TrainConfig,
    log_path=None,
    checkpoint_path=None,
    checkpoint_meta: Optional[dict] = None,
    init_params: Optional[dict] = None,
) -> TrainResult:
    """Run the full loop on one environment; returns nets and the log.

    ``init_params`` (dict of parameter lists keyed policy/value/disc/enc/
    fwd/inv) warm-starts phase-2 training from a phase-1 checkpoint. On
    divergence the last finite checkpoint stays on disk and
    TrainingDiverged propagates after the log is written.
    """
    from ..demos import stack_steps

    demo_obs, demo_actions = stack_steps(demos)
    if demo_obs.shape[1] != env.observe_dim:
        raise ConfigError(
            f"demonstrations carry {demo_obs.shape[1]}-wide observations, "
            f"environment produces {env.observe_dim}"
        )
    rng = np.random.default_rng(cfg.seed)
    physical = env.catheter
    policy = GaussianPolicy(env.observe_dim, rng, hidden=cfg.hidden)
    value_net = ValueNet(env.observe_dim, rng, hidden=cfg.hidden)
    disc = Discriminator(env.observe_dim, rng, hidden=cfg.hidden)
    curiosity = Curiosity(
        env.observe_dim, rng, hidden=cfg.hidden, intrinsic_scale=cfg.intrinsic_scale
    )
    if init_params is not None:
        policy.net.load_parameters(init_params["policy"])
        value_net.net.load_parameters(init_params["value"])
        disc.net.load_parameters(init_params["disc"])
        curiosity.encoder.load_parameters(init_params["enc"])
        curiosity.forward_net.load_parameters(init_params["fwd"])
        curiosity.inverse_net.load_parameters(init_params["inv"])
    opt_policy = Adam(policy.net.parameters(), cfg.learning_rate)
    opt_value = Adam(value_net.net.parameters(), cfg.learning_rate)
    opt_disc = Adam(disc.net.parameters(), cfg.learning_rate)
    opt_curiosity = Adam(curiosity.parameters(), cfg.learning_rate)

    use_rl = cfg.rl_weight * (1.0 - cfg.bc_fraction) > 0.0
    use_bc = cfg.rl_weight * cfg.bc_fraction > 0.0
    use_gail = cfg.gail_weight > 0.0
    use_curiosity = cfg.curiosity_weight > 0.0

    if cfg.curriculum:
        state = start_curriculum(
            physical.theta_max,
            initial_multiplier=cfg.curriculum_initial,
            threshold=cfg.curriculum_threshold,
            decay=cfg.curriculum_decay,
            window_size=cfg.curriculum_window,
        )
    else:
        state = start_curriculum(physical.theta_max, initial_multiplier=1.0)
    env.set_theta_max(state.current_theta_max)

    log_rows: List[dict] = []
    env_steps = 0
    iteration = 0
    obs_vec = env.reset(rng).vector()
    episode_reward = 0.0

    def checkpoint_now():
        # Never overwrite a finite checkpoint with broken weights.
        if checkpoint_path is not None and policy.net.finite() and value_net.net.finite():
            meta = dict(checkpoint_meta or {})
            meta.update(
                {
                    "iteration": iteration,
                    "env_steps": env_steps,
                    "theta_max_current": state.current_theta_max,
                    "train_config": asdict(cfg),
                    "logstd_bounds": list(policy.logstd_bounds),
                    "intrinsic_scale": curiosity.intrinsic_scale,
                }
            )
            save_checkpoint(checkpoint_path, policy, value_net, disc, curiosity, meta)

    def finish(diverged: bool) -> TrainResult:
        if log_path is not None:
            write_log_csv(log_rows, log_path)
        return TrainResult(
            policy=policy,
            value_net=value_net,
            disc=disc,
            curiosity=curiosity,
            log_rows=log_rows,
            env_steps=env_steps,
            curriculum_state=state,
            diverged=diverged,
        )

    try:
        while env_steps < cfg.max_steps:
            iteration += 1
            buf = _Buffer(cfg.buffer_size, env.observe_dim)
            finished_rewards: List[float] = []
            finished_success: List[bool] = []
            for _ in range(cfg.buffer_size):
                action, raw = policy.act(obs_vec, rng, env.active_spec)
                next_obs, reward, done, info = env.step(action)
                next_vec = next_obs.vector()
                buf.push(obs_vec, next_vec, raw, info["action"].as_array(), reward, done)
                env_steps += 1
                episode_reward += reward
                if done:
                    ev = info["events"]
                    finished_rewards.append(episode_reward)
                    finished_success.append(
                        ev.reached_target and not ev.collided_non_minor
                    )
                    state = curriculum_update(state, episode_reward)
                    env.set_theta_max(state.current_theta_max)
                    episode_reward = 0.0
                    obs_vec = env.reset(rng).vector()
                else:
                    obs_vec = next_vec
            checkpoint_now()

            old_logp, _ = policy.log_prob(buf.obs, buf.raw)
            values = value_net.value(buf.obs)
            last_value = 0.0 if buf.dones[-1] else float(value_net.value(buf.next_obs[-1:])[0])
            task_rewards = buf.rewards.copy()
            if use_curiosity:
                task_rewards += curiosity.intrinsic_reward(
                    buf.obs, buf.actions, buf.next_obs, physical
                )
            adv, targets = discounted_gae(
                task_rewards, values, last_value, buf.dones, cfg.discount, cfg.gae_lambda
            )
            if use_gail:
                imit = disc.reward(buf.obs, buf.actions, physical)
                adv_imit, _ = discounted_gae(
                    imit,
                    np.zeros_like(imit),
                    0.0,
                    buf.dones,
                    cfg.gail_discount,
                    cfg.gae_lambda,
                )
                adv = adv + adv_imit
                targets = targets + discounted_returns(imit, buf.dones, cfg.gail_discount)
            adv = normalize(adv)

            sums = {"loss_ppo": 0.0, "loss_gail": 0.0, "loss_bc": 0.0, "loss_curiosity": 0.0}
            n_batches = 0
            for _ in range(cfg.update_epochs):
                order = rng.permutation(cfg.buffer_size)
                for lo in range(0, cfg.buffer_size, cfg.batch_size):
                    idx = order[lo : lo + cfg.batch_size]
                    l_ppo = l_gail = l_bc = l_cur = 0.0
                    policy_grad = zeros_like_params(policy.net.parameters())
                    if use_rl:
                        l_ppo, pol_g, val_g = ppo_loss_and_grads(
                            policy,
                            value_net,
                            buf.obs[idx],
                            buf.raw[idx],
                            old_logp[idx],
                            adv[idx],
                            targets[idx],
                            cfg.clip_ratio,
                            cfg.entropy_coef,
                            cfg.value_coef,
                        )
                        add_scaled(policy_grad, pol_g, cfg.rl_weight * (1.0 - cfg.bc_fraction))
                        opt_value.step(
                            [g * cfg.rl_weight * (1.0 - cfg.bc_fraction) for g in val_g]
                        )
                    if use_bc:
                        pick = rng.integers(len(demo_obs), size=len(idx))
                        l_bc, bc_g = policy.bc_loss_and_grads(
                            demo_obs[pick], demo_actions[pick], physical
                        )
                        add_scaled(policy_grad, bc_g, cfg.rl_weight * cfg.bc_fraction)
                    if use_rl or use_bc:
                        opt_policy.step(policy_grad)
                    if use_gail:
                        pick = rng.integers(len(demo_obs), size=len(idx))
                        l_gail = gail_update(
                            disc,
                            opt_disc,
                            buf.obs[idx],
                            buf.actions[idx],
                            demo_obs[pick],
                            demo_actions[pick],
                            physical,
                            weight=cfg.gail_weight,
                        )
                    if use_curiosity:
                        l_cur, _, _, cur_g = curiosity.losses_and_grads(
                            buf.obs[idx], buf.actions[idx], buf.next_obs[idx], physical
                        )
                        opt_curiosity.step([g * cfg.curiosity_weight for g in cur_g])
                    combined = total_loss(cfg, l_ppo, l_gail, l_bc, l_cur)
                    if not np.isfinite(combined):
                        raise TrainingDiverged(
                            f"non-finite loss at iteration {iteration} "
                            f"(rl={l_ppo!r} gail={l_gail!r} bc={l_bc!r} curiosity={l_cur!r})"
                        )
                    sums["loss_ppo"] += l_ppo
                    sums["loss_gail"] += l_gail
                    sums["loss_bc"] += l_bc
                    sums["loss_curiosity"] += l_cur
                    n_batches += 1

            row = {
                "iteration": iteration,
                "env_steps": env_steps,
                "mean_reward": float(np.mean(finished_rewards)) if finished_rewards else float("nan"),
                "success_rate": float(np.mean(finished_success)) if finished_success else float("nan"),
                "theta_max_current": state.current_theta_max,
            }
            for key, value in sums.items():
                row[key] = value / n_batches
            log_rows.append(row)
            checkpoint_now()

    except TrainingDiverged:
        finish(True)
        raise

    return finish(False)
