"""Navigation task environment.

Couples the tip kinematics to the deformable wall and turns geometry into
the learning interface: observations (normalized tip state, target offset,
a fixed ray fan), per-step rewards, and episode bookkeeping. The guidance
spaces are the centerline waypoints, the target sampling sphere, the start
pose candidates, and the exit plane at the open end of the lumen.

Reward structure: a terminal contribution decided by a case analysis over
the step events (collision, exit, target) plus an always-on inner term of
a small per-step penalty, a once-per-waypoint bonus, and a tiny bonus for
near-limit bending actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from cathnav.errors import ConfigError, ContractViolation
from cathnav.kinematics import (
    Action,
    CatheterSpec,
    TipPose,
    apply_action,
    clamp_action,
    max_bend_at_step,
    propagate_body,
    CatheterBody,
)
from cathnav.mesh import TriMesh, signed_distance
from cathnav.mesh import _ray_fan  # kernel reused on live particle arrays
from cathnav.softbody import (
    ContactResult,
    Heartbeat,
    SEVERITY_NONE,
    SoftBody,
    SoftBodyConfig,
    apply_tip_contact,
    pbd_step,
    target_position,
)
from cathnav.validation import check_vector3, ensure_rng

RAY_LENGTH = 30.0


def _ray_directions() -> np.ndarray:
    """Tip-frame ray fan: the 6 frame axes plus 8 forward cone rays at 45 degrees."""
    axes = [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
    cone = []
    half = math.sqrt(0.5)
    for k in range(8):
        phi = 2.0 * math.pi * k / 8.0
        cone.append([half * math.cos(phi), half, half * math.sin(phi)])
    return np.array(axes + cone)


RAY_DIRS = _ray_directions()
N_RAYS = len(RAY_DIRS)
OBS_DIM = 3 + 2 + 1 + 3 + N_RAYS


@dataclass(frozen=True)
class Plane:
    point: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", check_vector3(self.point, "point"))
        n = check_vector3(self.normal, "normal")
        length = np.linalg.norm(n)
        if length < 1e-12:
            raise ValueError("plane normal must be nonzero")
        object.__setattr__(self, "normal", n / length)

    def outside(self, p: np.ndarray) -> bool:
        return float(np.dot(p - self.point, self.normal)) > 0.0


@dataclass(frozen=True)
class TargetRegion:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", check_vector3(self.center, "center"))
        if self.radius < 0.0:
            raise ValueError(f"target radius must be non-negative, got {self.radius}")


@dataclass(frozen=True)
class Spaces:
    """Guidance geometry: centerline, target region, start poses, exit plane."""

    centerline: np.ndarray
    target_region: TargetRegion
    start_poses: Sequence[TipPose]
    exit_plane: Plane

    def __post_init__(self):
        cl = np.asarray(self.centerline, dtype=np.float64)
        if cl.ndim != 2 or cl.shape[1] != 3 or len(cl) < 2:
            raise ValueError("centerline must be (n>=2, 3)")
        object.__setattr__(self, "centerline", cl)
        if not self.start_poses:
            raise ValueError("at least one start pose is required")

    def validate_against(self, mesh: TriMesh) -> None:
        """Scenario invariants: waypoints strictly inside, target reaches the wall."""
        for i, wp in enumerate(self.centerline):
            if signed_distance(mesh, wp) >= 0.0:
                raise ConfigError(f"centerline waypoint {i} is not strictly inside the mesh")
        d = np.linalg.norm(mesh.vertices - self.target_region.center, axis=1).min()
        if d > self.target_region.radius + 15.0:
            raise ConfigError(
                "target region does not intersect the anatomy "
                f"(nearest wall particle {d:.1f} mm away)"
            )


@dataclass(frozen=True)
class RewardConfig:
    """Reward terms and thresholds.

    bend_threshold, when given, is an absolute per-step bend in radians;
    left as None, the threshold is bend_threshold_fraction of the per-step
    bend bound at the executed insertion length.
    """

    r_obst: float = -1.0
    r_exit: float = -1.0
    r_target: float = 1.0
    r_step: float = -1e-5
    r_centerline: float = 0.05
    r_bending: float = 1e-5
    epsilon: float = 10.0
    waypoint_radius: float = 5.0
    bend_threshold: Optional[float] = None
    bend_threshold_fraction: float = 0.8

    def __post_init__(self):
        for name in ("r_obst", "r_exit", "r_step"):
            v = getattr(self, name)
            if not (-1.0 <= v <= 0.0):
                raise ConfigError(f"{name} must lie in [-1, 0], got {v}")
        for name in ("r_target", "r_centerline", "r_bending"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.waypoint_radius <= 0.0:
            raise ConfigError(f"waypoint_radius must be positive, got {self.waypoint_radius}")
        if not (0.0 < self.bend_threshold_fraction <= 1.0):
            raise ConfigError(
                f"bend_threshold_fraction must be in (0, 1], got {self.bend_threshold_fraction}"
            )


@dataclass(frozen=True)
class StepEvent:
    collided_non_minor: bool = False
    exited_lumen: bool = False
    reached_target: bool = False
    waypoint_hit: bool = False
    bend_exceeds_threshold: bool = False

    @property
    def terminal(self) -> bool:
        return self.collided_non_minor or self.exited_lumen or self.reached_target


@dataclass(frozen=True)
class Observation:
    pose: TipPose
    u: float
    v: np.ndarray
    o_ray: np.ndarray
    d_max: float

    def vector(self) -> np.ndarray:
        out = np.empty(OBS_DIM)
        out[0:3] = self.pose.position / self.d_max
        out[3] = self.pose.alpha
        out[4] = self.pose.gamma
        out[5] = self.u
        out[6:9] = self.v / self.d_max
        out[9:] = self.o_ray
        return out


@dataclass
class EpisodeResult:
    transitions: List[tuple]
    success: bool
    first_step: int
    last_step: int
    start_time: float
    end_time: float
    trajectory: np.ndarray
    reward_sum: float


def step_reward(cfg: RewardConfig, ev: StepEvent) -> float:
    """Terminal case value plus the inner shaping terms, exactly."""
    if ev.reached_target and ev.exited_lumen:
        raise ContractViolation("reached_target and exited_lumen cannot both be set")
    if ev.collided_non_minor:
        r_end = cfg.r_obst
    elif ev.exited_lumen:
        r_end = cfg.r_exit
    elif ev.reached_target:
        r_end = cfg.r_target
    else:
        r_end = 0.0
    r_in = cfg.r_step
    if ev.waypoint_hit:
        r_in += cfg.r_centerline
    if ev.bend_exceeds_threshold:
        r_in += cfg.r_bending
    return r_end + r_in


class NavEnv:
    """One independent rollout environment.

    Owns a soft body, the tip state, waypoint bookkeeping, and an RNG for
    start/target sampling. A curriculum can override the effective bend
    limit through set_theta_max; evaluation uses the physical limit.
    """

    def __init__(
        self,
        mesh: TriMesh,
        spaces: Spaces,
        catheter: CatheterSpec,
        rewards: Optional[RewardConfig] = None,
        softbody_config: Optional[SoftBodyConfig] = None,
        heartbeat: Optional[Heartbeat] = None,
        pinned: Optional[np.ndarray] = None,
        rigid: bool = False,
        max_episode_steps: int = 2000,
        seed: Optional[int] = None,
        ray_length: float = RAY_LENGTH,
    ):
        spaces.validate_against(mesh)
        if ray_length <= 0.0:
            raise ConfigError("ray_length must be positive")
        self.ray_length = float(ray_length)
        self.mesh = mesh
        self.spaces = spaces
        self.catheter = catheter
        self.rewards = rewards or RewardConfig()
        self.softbody_config = softbody_config or SoftBodyConfig()
        self.heartbeat = heartbeat
        self.pinned = pinned
        self.rigid = rigid
        self.max_episode_steps = int(max_episode_steps)
        if self.max_episode_steps < 1:
            raise ConfigError("max_episode_steps must be >= 1")
        self.rng = np.random.default_rng(seed)
        self._active_theta = catheter.theta_max
        self.d_max = self._compute_d_max()
        self.world: Optional[SoftBody] = None
        self.pose: Optional[TipPose] = None
        self.body = CatheterBody()
        self.visited: Optional[np.ndarray] = None
        self.steps = 0

    # -- configuration ----------------------------------------------------

    def set_theta_max(self, theta: float) -> None:
        if theta < self.catheter.theta_max:
            raise ValueError("curriculum bend limit cannot be below the physical limit")
        self._active_theta = theta

    @property
    def observe_dim(self) -> int:
        return OBS_DIM

    @property
    def active_spec(self) -> CatheterSpec:
        if self._active_theta == self.catheter.theta_max:
            return self.catheter
        return self.catheter.with_theta_max(self._active_theta)

    def _compute_d_max(self) -> float:
        pts = [p for p in self.spaces.centerline]
        pts += [pose.position for pose in self.spaces.start_poses]
        reach = max(np.linalg.norm(np.asarray(p) - self.spaces.target_region.center) for p in pts)
        return float(reach + self.spaces.target_region.radius)

    # -- episode lifecycle ------------------------------------------------

    def reset(self, rng: Optional[np.random.Generator] = None) -> Observation:
        rng = rng if rng is not None else self.rng
        self.world = SoftBody.from_mesh(
            self.mesh,
            config=self.softbody_config,
            heartbeat=self.heartbeat,
            pinned=self.pinned,
        )
        self.sample_target(rng)
        self.start_index = int(rng.integers(len(self.spaces.start_poses)))
        self.pose = self.spaces.start_poses[self.start_index]
        self.body = propagate_body(CatheterBody(), self.pose)
        self.visited = np.zeros(len(self.spaces.centerline), dtype=bool)
        self.steps = 0
        return self.observe()

    def restore(self, start_index: int, target_particle: int) -> Observation:
        """Reset to a recorded start pose and target, bypassing the rng."""
        if not 0 <= start_index < len(self.spaces.start_poses):
            raise ContractViolation(f"start pose index {start_index} out of range")
        if not 0 <= target_particle < len(self.mesh.vertices):
            raise ContractViolation(f"target particle {target_particle} out of range")
        self.world = SoftBody.from_mesh(
            self.mesh,
            config=self.softbody_config,
            heartbeat=self.heartbeat,
            pinned=self.pinned,
        )
        self.world.target_particle = int(target_particle)
        self.start_index = int(start_index)
        self.pose = self.spaces.start_poses[self.start_index]
        self.body = propagate_body(CatheterBody(), self.pose)
        self.visited = np.zeros(len(self.spaces.centerline), dtype=bool)
        self.steps = 0
        return self.observe()

    def sample_target(self, rng: np.random.Generator) -> int:
        """Uniform point in the target sphere, bound to the nearest wall particle.

        Candidates are restricted to particles inside the region so targets
        never land outside the sphere; a region touching no particle falls
        back to the particle nearest its centre (within the tolerance the
        constructor validated).
        """
        region = self.spaces.target_region
        rest = self.mesh.vertices
        inside = np.linalg.norm(rest - region.center, axis=1) <= region.radius
        if not np.any(inside):
            idx = int(np.argmin(((rest - region.center) ** 2).sum(axis=1)))
        else:
            # radius ~ U^(1/3) gives uniform density over the ball volume
            direction = rng.normal(size=3)
            direction /= max(np.linalg.norm(direction), 1e-12)
            point = region.center + direction * region.radius * rng.uniform() ** (1.0 / 3.0)
            candidates = np.flatnonzero(inside)
            idx = int(candidates[np.argmin(((rest[candidates] - point) ** 2).sum(axis=1))])
        self.world.target_particle = idx
        return idx

    def observe(self) -> Observation:
        p = self.pose.position
        goal = target_position(self.world)
        v = goal - p
        u = min(float(np.linalg.norm(v)) / self.d_max, 1.0)
        world_dirs = RAY_DIRS @ self.pose.rotation().T
        hits = _ray_fan(
            np.ascontiguousarray(p),
            np.ascontiguousarray(world_dirs),
            self.world.positions,
            self.world.faces,
            self.ray_length,
        )
        o_ray = np.minimum(hits / self.ray_length, 1.0)
        return Observation(pose=self.pose, u=u, v=v, o_ray=o_ray, d_max=self.d_max)

    def detect_events(self, action: Action, contact: ContactResult) -> StepEvent:
        p = self.pose.position
        exited = self.spaces.exit_plane.outside(p)
        reached = float(np.linalg.norm(target_position(self.world) - p)) < self.rewards.epsilon
        waypoint_hit = False
        if not np.all(self.visited):
            d = np.linalg.norm(self.spaces.centerline - p, axis=1)
            entered = (d < self.rewards.waypoint_radius) & ~self.visited
            if np.any(entered):
                waypoint_hit = True
                self.visited |= entered
        threshold = self.rewards.bend_threshold
        if threshold is None:
            threshold = self.rewards.bend_threshold_fraction * max_bend_at_step(
                self.active_spec, action.dl
            )
        bend = max(abs(action.alpha), abs(action.gamma)) > threshold
        return StepEvent(
            collided_non_minor=contact.collided,
            exited_lumen=exited,
            reached_target=reached,
            waypoint_hit=waypoint_hit,
            bend_exceeds_threshold=bend,
        )

    def step(self, action) -> tuple:
        """Advance one control step; returns (obs, reward, done, info)."""
        if self.world is None:
            raise ContractViolation("call reset before step")
        if not isinstance(action, Action):
            arr = np.asarray(action, dtype=np.float64).reshape(3)
            action = Action(alpha=float(arr[0]), gamma=float(arr[1]), dl=float(arr[2]))
        spec = self.active_spec
        a = clamp_action(spec, action)
        self.pose = apply_action(self.pose, a, spec)
        self.body = propagate_body(self.body, self.pose)
        if not self.rigid:
            pbd_step(self.world, self.catheter.dt)
        else:
            self.world.sim_time += self.catheter.dt
        contact = apply_tip_contact(
            self.world,
            self.pose.position,
            self.catheter.outer_diameter / 2.0,
            displace=not self.rigid,
        )
        events = self.detect_events(a, contact)
        reward = step_reward(self.rewards, events)
        self.steps += 1
        done = events.terminal or self.steps >= self.max_episode_steps
        obs = self.observe()
        info = {"events": events, "contact": contact, "action": a, "t": self.steps * self.catheter.dt}
        return obs, reward, done, info

    def run_episode(
        self,
        policy: Callable[[Observation, np.random.Generator], object],
        rng: Optional[np.random.Generator] = None,
        max_steps: Optional[int] = None,
    ) -> EpisodeResult:
        rng = rng if rng is not None else self.rng
        limit = min(max_steps or self.max_episode_steps, self.max_episode_steps)
        obs = self.reset(rng)
        transitions = []
        trajectory = [self.pose.position.copy()]
        total = 0.0
        success = False
        for _ in range(limit):
            raw = policy(obs, rng)
            next_obs, reward, done, info = self.step(raw)
            terminal = done
            transitions.append((obs, info["action"], reward, next_obs, terminal))
            trajectory.append(self.pose.position.copy())
            total += reward
            obs = next_obs
            if done:
                success = info["events"].reached_target and not info["events"].collided_non_minor
                break
        n = len(transitions)
        return EpisodeResult(
            transitions=transitions,
            success=success,
            first_step=0,
            last_step=n - 1,
            start_time=0.0,
            end_time=n * self.catheter.dt,
            trajectory=np.array(trajectory),
            reward_sum=total,
        )
