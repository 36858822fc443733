"""Shared test helpers."""

import numpy as np


def directional_derivative(params, loss_fn, direction, eps=1e-6):
    """Central finite difference of loss_fn along a parameter direction.

    ``params`` are the live arrays the networks read; they are restored
    exactly before returning.
    """
    for p, d in zip(params, direction):
        p += eps * d
    up = loss_fn()
    for p, d in zip(params, direction):
        p -= 2.0 * eps * d
    down = loss_fn()
    for p, d in zip(params, direction):
        p += eps * d
    return (up - down) / (2.0 * eps)


def random_direction(params, rng):
    direction = [rng.normal(size=p.shape) for p in params]
    norm = np.sqrt(sum(float(np.sum(d * d)) for d in direction))
    return [d / norm for d in direction]


def analytic_directional(grads, direction):
    return sum(float(np.sum(g * d)) for g, d in zip(grads, direction))


def check_gradients(params, loss_and_grads_fn, rng, probes=5, rel_tol=1e-4, eps=1e-6):
    """Assert analytic gradients match central differences on random probes."""
    for _ in range(probes):
        direction = random_direction(params, rng)
        _, grads = loss_and_grads_fn()
        analytic = analytic_directional(grads, direction)
        numeric = directional_derivative(params, lambda: loss_and_grads_fn()[0], direction, eps)
        scale = max(abs(analytic), abs(numeric), 1e-8)
        assert abs(analytic - numeric) / scale < rel_tol, (
            f"gradient mismatch: analytic {analytic} vs numeric {numeric}"
        )
