"""Gaussian policy with bounded squashing, and the state-value network.

The policy MLP maps an observation vector to 3 action means and 3 log
standard deviations. Raw Gaussian samples are squashed into the catheter's
command box: tanh for the two bends (scaled to the largest per-step bend)
and a shifted tanh for insertion in [0, max step]. Probability ratios in
PPO are computed on the raw samples, where the squash Jacobian cancels, so
only the Gaussian density is ever needed.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..errors import TrainingDiverged
from ..kinematics import Action, CatheterSpec, max_bend_at_step
from .nets import MLP

LOG_2PI = float(np.log(2.0 * np.pi))


def action_bounds(spec: CatheterSpec) -> Tuple[float, float]:
    """(largest per-step bend, largest insertion) for squashing and scaling."""
    return max_bend_at_step(spec, spec.max_step_length), spec.max_step_length


def normalize_actions(actions: np.ndarray, spec: CatheterSpec) -> np.ndarray:
    """Map env actions into O(1) ranges for network inputs."""
    bend, dl = action_bounds(spec)
    return np.atleast_2d(actions) / np.array([bend, bend, dl])


class GaussianPolicy:
    def __init__(
        self,
        obs_dim: int,
        rng: np.random.Generator,
        hidden: int = 64,
        logstd_bounds: Tuple[float, float] = (-5.0, 2.0),
    ):
        self.obs_dim = obs_dim
        self.net = MLP([obs_dim, hidden, hidden, 6], rng, head_scale=0.01)
        self.logstd_bounds = logstd_bounds

    # -- distribution ------------------------------------------------------

    def _heads(self, obs: np.ndarray):
        out, cache = self.net.forward(obs)
        mean = out[:, :3]
        raw_logstd = out[:, 3:]
        lo, hi = self.logstd_bounds
        logstd = np.clip(raw_logstd, lo, hi)
        clip_mask = (raw_logstd > lo) & (raw_logstd < hi)
        return mean, logstd, clip_mask, cache

    def _squash(self, raw: np.ndarray, spec: CatheterSpec) -> np.ndarray:
        bend, dl = action_bounds(spec)
        out = np.empty_like(raw)
        out[:, 0:2] = bend * np.tanh(raw[:, 0:2])
        out[:, 2] = 0.5 * (np.tanh(raw[:, 2]) + 1.0) * dl
        return out

    def act(
        self, obs_vec: np.ndarray, rng: np.random.Generator, spec: CatheterSpec
    ) -> Tuple[Action, np.ndarray]:
        """Sample an env action; also returns the raw pre-squash sample."""
        mean, logstd, _, _ = self._heads(obs_vec.reshape(1, -1))
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logstd))):
            raise TrainingDiverged("policy network produced non-finite output")
        raw = mean + np.exp(logstd) * rng.standard_normal(mean.shape)
        a = self._squash(raw, spec)[0]
        return Action(alpha=float(a[0]), gamma=float(a[1]), dl=float(a[2])), raw[0]

    def mean_action(self, obs_vec: np.ndarray, spec: CatheterSpec) -> Action:
        mean, _, _, _ = self._heads(obs_vec.reshape(1, -1))
        if not np.all(np.isfinite(mean)):
            raise TrainingDiverged("policy network produced non-finite output")
        a = self._squash(mean, spec)[0]
        return Action(alpha=float(a[0]), gamma=float(a[1]), dl=float(a[2]))

    def mean_actions(self, obs: np.ndarray, spec: CatheterSpec) -> np.ndarray:
        """Batch of deterministic (alpha, gamma, dl) rows for an obs matrix."""
        mean, _, _, _ = self._heads(np.atleast_2d(obs))
        if not np.all(np.isfinite(mean)):
            raise TrainingDiverged("policy network produced non-finite output")
        return self._squash(mean, spec)

    def log_prob(self, obs: np.ndarray, raw: np.ndarray):
        """Per-sample Gaussian log density of raw samples, plus backprop state."""
        mean, logstd, clip_mask, cache = self._heads(obs)
        std = np.exp(logstd)
        z = (raw - mean) / std
        logp = np.sum(-0.5 * z * z - logstd - 0.5 * LOG_2PI, axis=1)
        state = {"mean": mean, "logstd": logstd, "std": std, "z": z,
                 "clip_mask": clip_mask, "cache": cache}
        return logp, state

    def entropy(self, state) -> np.ndarray:
        # diagonal Gaussian entropy per sample
        return np.sum(state["logstd"] + 0.5 * (LOG_2PI + 1.0), axis=1)

    def backprop_heads(self, state, dlogp: np.ndarray, dentropy: np.ndarray):
        """Parameter gradients given per-sample dL/dlogp and dL/dentropy."""
        z = state["z"]
        std = state["std"]
        dmean = dlogp[:, None] * (z / std)
        dlogstd = dlogp[:, None] * (z * z - 1.0) + dentropy[:, None]
        dout = np.concatenate([dmean, dlogstd * state["clip_mask"]], axis=1)
        grads, _ = self.net.backward(state["cache"], dout)
        return MLP.flatten_grads(grads)

    # -- behavioral cloning ------------------------------------------------

    def bc_loss_and_grads(self, obs: np.ndarray, demo_actions: np.ndarray, spec: CatheterSpec):
        """MSE between the squashed mean action and the demonstration action."""
        mean, _, _, cache = self._heads(obs)
        bend, dl = action_bounds(spec)
        t = np.tanh(mean)
        pred = np.empty_like(mean)
        pred[:, 0:2] = bend * t[:, 0:2]
        pred[:, 2] = 0.5 * (t[:, 2] + 1.0) * dl
        diff = pred - demo_actions
        n = diff.size
        loss = float(np.sum(diff * diff) / n)
        dpred = 2.0 * diff / n
        dmean = np.empty_like(mean)
        dmean[:, 0:2] = dpred[:, 0:2] * bend * (1.0 - t[:, 0:2] ** 2)
        dmean[:, 2] = dpred[:, 2] * 0.5 * dl * (1.0 - t[:, 2] ** 2)
        dout = np.concatenate([dmean, np.zeros_like(dmean)], axis=1)
        grads, _ = self.net.backward(cache, dout)
        return loss, MLP.flatten_grads(grads)


class ValueNet:
    def __init__(self, obs_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.net = MLP([obs_dim, hidden, hidden, 1], rng)

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.net(np.atleast_2d(obs))[:, 0]

    def mse_and_grads(self, obs: np.ndarray, targets: np.ndarray):
        out, cache = self.net.forward(obs)
        diff = out[:, 0] - targets
        loss = float(np.mean(diff * diff))
        dout = (2.0 * diff / len(diff))[:, None]
        grads, _ = self.net.backward(cache, dout)
        return loss, MLP.flatten_grads(grads)
