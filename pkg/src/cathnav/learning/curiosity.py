"""Curiosity module: encoder, forward model, inverse model.

The encoder maps observations to a compact feature; the inverse model
recovers the action from consecutive features (training the encoder to keep
action-relevant information); the forward model predicts the next feature
and its error is the intrinsic exploration bonus. The forward loss updates
only the forward model, with encoder features treated as fixed targets, so
the encoder cannot collapse to make prediction trivially easy.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..kinematics import CatheterSpec
from .nets import MLP, Adam, zeros_like_params
from .policy import normalize_actions

FEATURE_DIM = 32
INVERSE_WEIGHT = 0.8
FORWARD_WEIGHT = 0.2


class Curiosity:
    def __init__(
        self,
        obs_dim: int,
        rng: np.random.Generator,
        hidden: int = 64,
        intrinsic_scale: float = 0.01,
    ):
        self.obs_dim = obs_dim
        self.intrinsic_scale = intrinsic_scale
        self.encoder = MLP([obs_dim, hidden, FEATURE_DIM], rng)
        self.forward_net = MLP([FEATURE_DIM + 3, hidden, FEATURE_DIM], rng)
        self.inverse_net = MLP([2 * FEATURE_DIM, hidden, 3], rng)

    def parameters(self):
        return (
            self.encoder.parameters()
            + self.forward_net.parameters()
            + self.inverse_net.parameters()
        )

    def intrinsic_reward(
        self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray, spec: CatheterSpec
    ) -> np.ndarray:
        """Per-sample forward-model surprise, scaled."""
        phi = self.encoder(obs)
        phi_next = self.encoder(next_obs)
        pred = self.forward_net(
            np.concatenate([phi, normalize_actions(actions, spec)], axis=1)
        )
        err = pred - phi_next
        return self.intrinsic_scale * 0.5 * np.sum(err * err, axis=1)

    def losses_and_grads(
        self, obs: np.ndarray, actions: np.ndarray, next_obs: np.ndarray, spec: CatheterSpec
    ):
        """(combined loss, forward loss, inverse loss, grads).

        Gradients line up with parameters(): inverse loss flows through the
        encoder and inverse net; forward loss flows only into the forward
        net (its feature inputs and targets are constants).
        """
        n = len(obs)
        acts = normalize_actions(actions, spec)
        phi, cache_enc = self.encoder.forward(obs)
        phi_next, cache_enc_next = self.encoder.forward(next_obs)

        # forward model: detached features in and out
        fwd_in = np.concatenate([phi, acts], axis=1)
        pred, cache_fwd = self.forward_net.forward(fwd_in)
        err = pred - phi_next
        forward_loss = float(0.5 * np.sum(err * err) / n)
        dfwd_out = err / n
        grads_fwd, _ = self.forward_net.backward(cache_fwd, dfwd_out)

        # inverse model: gradient reaches both encoder passes
        inv_in = np.concatenate([phi, phi_next], axis=1)
        pred_act, cache_inv = self.inverse_net.forward(inv_in)
        diff = pred_act - acts
        inverse_loss = float(np.sum(diff * diff) / diff.size)
        dinv_out = 2.0 * diff / diff.size
        grads_inv, dinv_in = self.inverse_net.backward(cache_inv, dinv_out)
        grads_enc, _ = self.encoder.backward(cache_enc, dinv_in[:, :FEATURE_DIM])
        grads_enc_next, _ = self.encoder.backward(cache_enc_next, dinv_in[:, FEATURE_DIM:])

        combined = INVERSE_WEIGHT * inverse_loss + FORWARD_WEIGHT * forward_loss
        enc_flat = [
            INVERSE_WEIGHT * (a + b)
            for a, b in zip(MLP.flatten_grads(grads_enc), MLP.flatten_grads(grads_enc_next))
        ]
        fwd_flat = [FORWARD_WEIGHT * g for g in MLP.flatten_grads(grads_fwd)]
        inv_flat = [INVERSE_WEIGHT * g for g in MLP.flatten_grads(grads_inv)]
        grads = enc_flat + fwd_flat + inv_flat
        return combined, forward_loss, inverse_loss, grads
