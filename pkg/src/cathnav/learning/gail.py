"""Adversarial imitation: discriminator training and its survival reward.

The discriminator scores (observation, action) pairs, trained toward 1 on
demonstration pairs and 0 on policy pairs. The policy is rewarded with
-ln(1 - D), which grows as it fools the discriminator; the raw sigmoid
output is clipped away from {0, 1} so the reward stays finite.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..kinematics import CatheterSpec
from .nets import MLP, Adam, sigmoid, softplus
from .policy import normalize_actions

D_CLIP = 1e-7


class Discriminator:
    def __init__(self, obs_dim: int, rng: np.random.Generator, hidden: int = 64):
        self.obs_dim = obs_dim
        self.net = MLP([obs_dim + 3, hidden, hidden, 1], rng)

    def _pairs(self, obs: np.ndarray, actions: np.ndarray, spec: CatheterSpec) -> np.ndarray:
        return np.concatenate(
            [np.atleast_2d(obs), normalize_actions(actions, spec)], axis=1
        )

    def score(self, obs: np.ndarray, actions: np.ndarray, spec: CatheterSpec) -> np.ndarray:
        """D strictly inside (0, 1) for each pair.

        The sigmoid rounds to exactly 0 or 1 in float64 once logits pass
        about +-37, so the output is clipped just inside the interval;
        training is unaffected because the loss works on logits.
        """
        logits = self.net(self._pairs(obs, actions, spec))[:, 0]
        return np.clip(sigmoid(logits), D_CLIP, 1.0 - D_CLIP)

    def reward(self, obs: np.ndarray, actions: np.ndarray, spec: CatheterSpec) -> np.ndarray:
        d = np.clip(self.score(obs, actions, spec), D_CLIP, 1.0 - D_CLIP)
        return -np.log(1.0 - d)

    def loss_and_grads(
        self,
        policy_obs: np.ndarray,
        policy_actions: np.ndarray,
        demo_obs: np.ndarray,
        demo_actions: np.ndarray,
        spec: CatheterSpec,
    ):
        """Binary cross-entropy, demo pairs labelled 1 and policy pairs 0.

        The two class terms are averaged with equal weight regardless of
        batch sizes. Computed on logits so neither log can overflow.
        """
        x_p = self._pairs(policy_obs, policy_actions, spec)
        x_d = self._pairs(demo_obs, demo_actions, spec)
        out_p, cache_p = self.net.forward(x_p)
        out_d, cache_d = self.net.forward(x_d)
        z_p = out_p[:, 0]
        z_d = out_d[:, 0]
        # -ln(1 - sigmoid(z)) = softplus(z); -ln(sigmoid(z)) = softplus(-z)
        loss = 0.5 * (float(np.mean(softplus(z_p))) + float(np.mean(softplus(-z_d))))
        dz_p = 0.5 * sigmoid(z_p) / len(z_p)
        dz_d = 0.5 * (sigmoid(z_d) - 1.0) / len(z_d)
        grads_p, _ = self.net.backward(cache_p, dz_p[:, None])
        grads_d, _ = self.net.backward(cache_d, dz_d[:, None])
        grads = [
            gp + gd
            for gp, gd in zip(MLP.flatten_grads(grads_p), MLP.flatten_grads(grads_d))
        ]
        return loss, grads


def gail_update(
    disc: Discriminator,
    optimizer: Adam,
    policy_obs: np.ndarray,
    policy_actions: np.ndarray,
    demo_obs: np.ndarray,
    demo_actions: np.ndarray,
    spec: CatheterSpec,
    weight: float = 1.0,
) -> float:
    """One discriminator gradient step; returns the pre-step loss."""
    loss, grads = disc.loss_and_grads(
        policy_obs, policy_actions, demo_obs, demo_actions, spec
    )
    optimizer.step([g * weight for g in grads])
    return loss
