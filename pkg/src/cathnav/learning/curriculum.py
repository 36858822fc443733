"""Curriculum over the bending bound.

Lessons start with the bound relaxed beyond the physical catheter and
tighten it geometrically as recent episode rewards clear a threshold,
ending exactly at the physical limit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque

from ..errors import ConfigError


@dataclass
class CurriculumState:
    final_theta_max: float  # the physical bound, rad
    current_theta_max: float
    lesson: int = 0
    threshold: float = 0.5
    decay: float = 0.8
    window: Deque[float] = field(default_factory=lambda: deque(maxlen=50))

    def __post_init__(self):
        if self.final_theta_max <= 0:
            raise ConfigError("final_theta_max must be positive")
        if self.current_theta_max < self.final_theta_max:
            raise ConfigError("current_theta_max below the physical bound")
        if not 0.0 < self.decay < 1.0:
            raise ConfigError("decay must lie in (0, 1)")

    @property
    def settled(self) -> bool:
        return self.current_theta_max <= self.final_theta_max


def start_curriculum(
    final_theta_max: float,
    initial_multiplier: float = 2.0,
    threshold: float = 0.5,
    decay: float = 0.8,
    window_size: int = 50,
) -> CurriculumState:
    if initial_multiplier < 1.0:
        raise ConfigError("initial_multiplier must be at least 1")
    if window_size < 1:
        raise ConfigError("window_size must be at least 1")
    return CurriculumState(
        final_theta_max=final_theta_max,
        current_theta_max=initial_multiplier * final_theta_max,
        threshold=threshold,
        decay=decay,
        window=deque(maxlen=window_size),
    )


def curriculum_update(state: CurriculumState, episode_reward: float) -> CurriculumState:
    """Push a finished episode's reward; advance the lesson when the window
    is full and its mean clears the threshold. The bound never drops below
    the physical limit, and the window restarts after each advance so one
    good streak cannot skip lessons."""
    window = deque(state.window, maxlen=state.window.maxlen)
    window.append(episode_reward)
    if (
        not state.settled
        and len(window) == window.maxlen
        and sum(window) / len(window) >= state.threshold
    ):
        return replace(
            state,
            lesson=state.lesson + 1,
            current_theta_max=max(
                state.final_theta_max, state.decay * state.current_theta_max
            ),
            window=deque(maxlen=window.maxlen),
        )
    return replace(state, window=window)
