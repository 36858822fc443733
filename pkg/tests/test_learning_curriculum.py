"""Curriculum bound scheduling."""

import math

import numpy as np
import pytest

from cathnav.errors import ConfigError
from cathnav.learning.curriculum import (
    CurriculumState,
    curriculum_update,
    start_curriculum,
)

PHYS = math.pi / 2


def test_initial_bound_is_multiplied():
    state = start_curriculum(PHYS, initial_multiplier=2.0)
    assert state.current_theta_max == pytest.approx(2.0 * PHYS)
    assert state.lesson == 0


def test_below_threshold_no_change():
    state = start_curriculum(PHYS, threshold=0.5, window_size=3)
    for _ in range(10):
        state = curriculum_update(state, -1.0)
    assert state.lesson == 0
    assert state.current_theta_max == pytest.approx(2.0 * PHYS)


def test_threshold_met_applies_decay():
    state = start_curriculum(PHYS, threshold=0.5, decay=0.8, window_size=3)
    for _ in range(3):
        state = curriculum_update(state, 1.0)
    assert state.lesson == 1
    assert state.current_theta_max == pytest.approx(1.6 * PHYS)


def test_window_restarts_after_advance():
    state = start_curriculum(PHYS, threshold=0.5, decay=0.8, window_size=3)
    for _ in range(4):
        state = curriculum_update(state, 1.0)
    # the fourth reward alone cannot refill the fresh window
    assert state.lesson == 1
    assert len(state.window) == 1


def test_converges_to_physical_limit():
    state = start_curriculum(PHYS, threshold=0.0, decay=0.8, window_size=1)
    bounds = [state.current_theta_max]
    for _ in range(100):
        state = curriculum_update(state, 1.0)
        bounds.append(state.current_theta_max)
    diffs = np.diff(bounds)
    assert np.all(diffs <= 1e-15)  # non-increasing
    assert bounds[-1] == PHYS  # exact clamp, never undershoots
    assert state.settled


def test_validation():
    with pytest.raises(ConfigError):
        start_curriculum(0.0)
    with pytest.raises(ConfigError):
        start_curriculum(PHYS, initial_multiplier=0.5)
    with pytest.raises(ConfigError):
        CurriculumState(final_theta_max=PHYS, current_theta_max=PHYS / 2)
    with pytest.raises(ConfigError):
        CurriculumState(final_theta_max=PHYS, current_theta_max=PHYS, decay=1.5)
