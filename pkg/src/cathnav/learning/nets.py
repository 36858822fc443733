"""Small dense networks with hand-written backprop, and their optimizer.

Everything is float64 numpy. A forward pass returns the output plus a cache;
the matching backward pass turns an output gradient into parameter gradients
and an input gradient. Training stays bitwise reproducible because the only
randomness is the caller's Generator.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError


def sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so neither exp overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def swish(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def swish_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


class MLP:
    """Dense layers with Swish on hidden activations and a linear head."""

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        head_scale: float = 1.0,
    ):
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ConfigError(f"bad layer sizes {sizes!r}")
        self.sizes = tuple(int(s) for s in sizes)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        last = len(sizes) - 2
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(2.0 / fan_in)
            if i == last:
                scale = head_scale / np.sqrt(fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    # -- passes ------------------------------------------------------------

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, list]:
        h = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cache = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            cache.append((h, z))
            h = z if i == last else swish(z)
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list, dout: np.ndarray) -> Tuple[list, np.ndarray]:
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns ([(dW, db) per layer], d(loss)/d(input)).
        """
        grads: List[Optional[tuple]] = [None] * len(self.weights)
        dz = np.atleast_2d(dout)
        last = len(self.weights) - 1
        for i in range(last, -1, -1):
            h, z = cache[i]
            if i != last:
                dz = dz * swish_grad(z)
            grads[i] = (h.T @ dz, dz.sum(axis=0))
            dz = dz @ self.weights[i].T
        return grads, dz

    # -- parameter plumbing ------------------------------------------------

    def parameters(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    @staticmethod
    def flatten_grads(layer_grads: list) -> List[np.ndarray]:
        out = []
        for dw, db in layer_grads:
            out.append(dw)
            out.append(db)
        return out

    def copy_parameters(self) -> List[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, params: Sequence[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(params):
            raise ConfigError("parameter count mismatch")
        for dst, src in zip(own, params):
            src = np.asarray(src, dtype=np.float64)
            if dst.shape != src.shape:
                raise ConfigError(f"parameter shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


class Adam:
    """Adaptive-moment optimizer over a fixed list of parameter arrays."""

    def __init__(
        self,
        params: Sequence[np.ndarray],
        learning_rate: float = 3e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ConfigError("gradient count mismatch")
        self.t += 1
        bias1 = 1.0 - self.beta1**self.t
        bias2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


def add_scaled(accum: List[np.ndarray], grads: Sequence[np.ndarray], scale: float) -> None:
    """accum += scale * grads, elementwise over the parameter list."""
    for a, g in zip(accum, grads):
        a += scale * g


def zeros_like_params(params: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [np.zeros_like(p) for p in params]
