"""Clipped-surrogate policy optimization pieces.

Advantages come from generalized advantage estimation over the on-policy
buffer. Two reward streams are supported with separate discounts: the task
stream (environment reward plus curiosity bonus) is baselined by the value
network; the imitation-reward stream has no baseline and its discounted
return is simply added to the value target.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .policy import GaussianPolicy, ValueNet


def discounted_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    last_value: float,
    dones: np.ndarray,
    discount: float,
    gae_lambda: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """(advantages, value targets) for one reward stream.

    ``dones`` marks steps whose successor starts a new episode; the value
    bootstrap is cut there. ``last_value`` bootstraps the final step when
    the buffer ends mid-episode.
    """
    n = len(rewards)
    adv = np.zeros(n)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        mask = 0.0 if dones[t] else 1.0
        next_v = last_value if t == n - 1 else values[t + 1]
        delta = rewards[t] + discount * next_v * mask - values[t]
        carry = delta + discount * gae_lambda * mask * carry
        adv[t] = carry
    return adv, adv + values


def discounted_returns(
    rewards: np.ndarray, dones: np.ndarray, discount: float
) -> np.ndarray:
    """Plain discounted sum per step, cut at episode ends (no baseline)."""
    out = np.zeros(len(rewards))
    carry = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        carry = rewards[t] + discount * (0.0 if dones[t] else carry)
        out[t] = carry
    return out


def normalize(advantages: np.ndarray) -> np.ndarray:
    std = advantages.std()
    return (advantages - advantages.mean()) / (std + 1e-8)


def ppo_loss_and_grads(
    policy: GaussianPolicy,
    value_net: ValueNet,
    obs: np.ndarray,
    raw_actions: np.ndarray,
    old_logp: np.ndarray,
    advantages: np.ndarray,
    value_targets: np.ndarray,
    clip_ratio: float,
    entropy_coef: float,
    value_coef: float = 0.5,
):
    """Surrogate + value error - entropy bonus, with parameter gradients.

    Returns (loss, policy grads, value grads). The surrogate uses the
    probability ratio of the stored raw Gaussian samples; the squash
    Jacobian is identical under old and new parameters and cancels.
    """
    n = len(obs)
    logp, state = policy.log_prob(obs, raw_actions)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio)
    unclipped_term = ratio * advantages
    clipped_term = clipped * advantages
    take_unclipped = unclipped_term <= clipped_term
    surrogate = -np.mean(np.minimum(unclipped_term, clipped_term))
    entropy = policy.entropy(state)
    value_loss, value_grads = value_net.mse_and_grads(obs, value_targets)
    loss = float(surrogate + value_coef * value_loss - entropy_coef * np.mean(entropy))

    # d(surrogate)/d(logp): only where the unclipped branch is active,
    # since d(ratio)/d(logp) = ratio and the clipped branch is constant.
    dlogp = np.where(take_unclipped, -advantages * ratio / n, 0.0)
    dentropy = np.full(n, -entropy_coef / n)
    policy_grads = policy.backprop_heads(state, dlogp, dentropy)
    value_grads = [g * value_coef for g in value_grads]
    return loss, policy_grads, value_grads
