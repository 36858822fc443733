"""Catheter tip kinematics.

The tip is the moving agent. Its pose is a position plus two bend angles:
``alpha`` about the tip-frame x axis and ``gamma`` about the tip-frame z
axis. The orientation matrix is the composition Rz(gamma) @ Rx(alpha), so
the tip-frame y axis is the insertion direction. Actions are per-step bend
increments plus an insertion length; the per-step bend magnitude is limited
by the insertion length through the bend-rate bound (a segment of length L
with total bend limit theta_max can add at most theta_max * dl / L of bend
while deploying dl of new length). The catheter body follows the tip:
each body point successively adopts the tip's previous poses.

All functions are pure and operate on immutable values; they are safe to
call from any thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from cathnav.errors import ContractViolation
from cathnav.validation import check_positive, check_vector3

_CLAMP_SLACK = 1e-12  # tolerance when verifying an action was pre-clamped


@dataclass(frozen=True)
class TipPose:
    """Tip position (mm) and accumulated bend angles (rad).

    ``alpha`` and ``gamma`` are the current bend state of the steerable
    segment; after clamping they stay within the catheter's bend limit.
    """

    position: np.ndarray
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", check_vector3(self.position, "position"))
        if not (math.isfinite(self.alpha) and math.isfinite(self.gamma)):
            raise ValueError(f"pose angles must be finite, got alpha={self.alpha} gamma={self.gamma}")

    def rotation(self) -> np.ndarray:
        return _rotation(self.alpha, self.gamma)

    def heading(self) -> np.ndarray:
        """Unit insertion direction (tip-frame y axis in world coordinates)."""
        return self.rotation()[:, 1]


@dataclass(frozen=True)
class HomogeneousConfig:
    """A 4x4 rigid transform split into rotation and translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Action:
    """Per-step command: bend increments (rad) and insertion length (mm)."""

    alpha: float
    gamma: float
    dl: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.gamma, self.dl])


@dataclass(frozen=True)
class CatheterSpec:
    """Physical catheter parameters and the control timestep.

    segment_length: steerable distal segment length L, mm.
    theta_max: total bend limit, rad.
    outer_diameter: catheter outer diameter, mm.
    v_max: insertion speed limit, mm/s.
    dt: control timestep, s.
    """

    segment_length: float = 50.0
    theta_max: float = math.pi / 2
    outer_diameter: float = 7.0
    v_max: float = 5.0
    dt: float = 0.1

    def __post_init__(self):
        check_positive(self.segment_length, "segment_length")
        if not (0.0 < self.theta_max <= math.pi):
            raise ValueError(f"theta_max must lie in (0, pi], got {self.theta_max}")
        check_positive(self.outer_diameter, "outer_diameter")
        check_positive(self.v_max, "v_max")
        check_positive(self.dt, "dt")

    @property
    def max_step_length(self) -> float:
        return self.v_max * self.dt

    def with_theta_max(self, theta_max: float) -> "CatheterSpec":
        """Same catheter with a different bend limit (used by the curriculum)."""
        return replace(self, theta_max=theta_max)


@dataclass(frozen=True)
class CatheterBody:
    """Follow-the-leader body: the tip's pose history, most recent last."""

    history: Tuple[TipPose, ...] = ()
    max_points: int = 1024

    def positions(self) -> np.ndarray:
        if not self.history:
            return np.zeros((0, 3))
        return np.stack([p.position for p in self.history])


def _rotation(alpha: float, gamma: float) -> np.ndarray:
    ca, sa = math.cos(alpha), math.sin(alpha)
    cg, sg = math.cos(gamma), math.sin(gamma)
    # Rz(gamma) @ Rx(alpha), written out
    return np.array(
        [
            [cg, -sg * ca, sg * sa],
            [sg, cg * ca, -cg * sa],
            [0.0, sa, ca],
        ]
    )


def pose_to_matrix(pose: TipPose) -> HomogeneousConfig:
    """Tip pose as a rigid transform: rotation Rz(gamma) @ Rx(alpha), translation p."""
    if not np.all(np.isfinite(pose.position)) or not (
        math.isfinite(pose.alpha) and math.isfinite(pose.gamma)
    ):
        raise ValueError("pose must be finite")
    return HomogeneousConfig(rotation=_rotation(pose.alpha, pose.gamma), translation=pose.position.copy())


def max_bend_at_step(spec: CatheterSpec, dl: float) -> float:
    """Bend available in one step while inserting dl, capped at the total limit."""
    if dl < 0.0 or not math.isfinite(dl):
        raise ValueError(f"dl must be non-negative, got {dl}")
    return min(spec.theta_max, spec.theta_max * dl / spec.segment_length)


def clamp_action(spec: CatheterSpec, a: Action) -> Action:
    """Clamp an action into the feasible set.

    Insertion is clamped into [0, v_max * dt] first; the bend bound is then
    evaluated at the clamped insertion, so the returned action is always
    jointly feasible.
    """
    dl = min(max(a.dl, 0.0), spec.max_step_length)
    bound = max_bend_at_step(spec, dl)
    return Action(
        alpha=min(max(a.alpha, -bound), bound),
        gamma=min(max(a.gamma, -bound), bound),
        dl=dl,
    )


def apply_action(pose: TipPose, a: Action, spec: CatheterSpec) -> TipPose:
    """Advance the tip by one clamped action.

    Bend increments accumulate on the pose angles (saturating at the
    catheter's bend limit so the pose invariant holds); the tip then moves
    dl along the new insertion direction.
    """
    bound = max_bend_at_step(spec, a.dl) + _CLAMP_SLACK
    if abs(a.alpha) > bound or abs(a.gamma) > bound or a.dl > spec.max_step_length + _CLAMP_SLACK:
        raise ContractViolation(
            f"action {a} was not clamped for spec (bend bound {bound:.6g}, "
            f"max step {spec.max_step_length:.6g}); call clamp_action first"
        )
    alpha = min(max(pose.alpha + a.alpha, -spec.theta_max), spec.theta_max)
    gamma = min(max(pose.gamma + a.gamma, -spec.theta_max), spec.theta_max)
    rot = _rotation(alpha, gamma)
    position = pose.position + a.dl * rot[:, 1]
    return TipPose(position=position, alpha=alpha, gamma=gamma)


def propagate_body(body: CatheterBody, new_tip: TipPose) -> CatheterBody:
    """Append the new tip pose and keep at most max_points entries (FIFO)."""
    history = body.history + (new_tip,)
    if len(history) > body.max_points:
        history = history[-body.max_points :]
    return CatheterBody(history=history, max_points=body.max_points)
