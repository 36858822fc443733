"""Position-based dynamics for the deformable vessel wall.

Wall vertices are particles linked by distance constraints along mesh
edges. Each step runs Verlet prediction, a fixed number of sequential
Gauss-Seidel constraint passes, then an anchor pass that pulls free
particles toward their rest pose plus the current heartbeat offset.
Pinned particles (inverse mass zero) never move. The solve order is fixed,
so stepping is deterministic down to the bit for identical inputs.

Tip contact is resolved after the dynamics step: overlapping particles are
pushed outward along their surface normals, and the resulting indentation
is converted to a contact force that classifies the event as minor or
damaging. The navigation target rides on a wall particle, so it moves with
every deformation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numba
import numpy as np

from cathnav.errors import ConfigError, SimulationDiverged
from cathnav.mesh import TriMesh, signed_distance
from cathnav.validation import check_vector3

SEVERITY_NONE = "none"
SEVERITY_MINOR = "minor"
SEVERITY_NON_MINOR = "non_minor"


@dataclass(frozen=True)
class SoftBodyConfig:
    """Solver parameters.

    contact_stiffness converts wall indentation (mm) into force (N);
    force_cap is the boundary between a minor graze and damaging contact.
    """

    stiffness: float = 0.9
    solver_iterations: int = 10
    damping: float = 0.98
    anchor_stiffness: float = 1.0
    contact_stiffness: float = 2.0
    force_cap: float = 0.8

    def __post_init__(self):
        if not (0.0 < self.stiffness <= 1.0):
            raise ConfigError(f"stiffness must be in (0, 1], got {self.stiffness}")
        if self.solver_iterations < 1:
            raise ConfigError(f"solver_iterations must be >= 1, got {self.solver_iterations}")
        if not (0.0 <= self.damping <= 1.0):
            raise ConfigError(f"damping must be in [0, 1], got {self.damping}")
        if not (0.0 <= self.anchor_stiffness <= 1.0):
            raise ConfigError(f"anchor_stiffness must be in [0, 1], got {self.anchor_stiffness}")
        if self.contact_stiffness <= 0.0:
            raise ConfigError(f"contact_stiffness must be positive, got {self.contact_stiffness}")
        if self.force_cap <= 0.0:
            raise ConfigError(f"force_cap must be positive, got {self.force_cap}")


@dataclass(frozen=True)
class Heartbeat:
    """Periodic wall motion.

    ``amplitude`` is a displacement vector in mm; particles move along it by
    sin(2 pi t / period), scaled per particle by a gaussian falloff around
    ``center`` (uniform weight 1 when no center is given).
    """

    amplitude: np.ndarray
    period: float
    center: Optional[np.ndarray] = None
    falloff: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "amplitude", check_vector3(self.amplitude, "amplitude"))
        if self.period <= 0.0:
            raise ConfigError(f"heartbeat period must be positive, got {self.period}")
        if self.center is not None:
            object.__setattr__(self, "center", check_vector3(self.center, "center"))
        if self.falloff is not None and self.falloff <= 0.0:
            raise ConfigError(f"heartbeat falloff must be positive, got {self.falloff}")


def heartbeat_displacement(hb: Heartbeat, t: float) -> np.ndarray:
    """Wall offset vector (mm) at time t, before per-particle weighting."""
    phase = (t % hb.period) / hb.period  # exact zero at whole periods
    return hb.amplitude * np.sin(2.0 * np.pi * phase)


@dataclass
class ContactResult:
    penetration: float
    force: float
    severity: str

    @property
    def hit(self) -> bool:
        return self.severity != SEVERITY_NONE

    @property
    def collided(self) -> bool:
        return self.severity == SEVERITY_NON_MINOR


@dataclass
class SoftBody:
    """Mutable particle state for one vessel wall."""

    positions: np.ndarray
    prev_positions: np.ndarray
    rest_positions: np.ndarray
    inverse_mass: np.ndarray
    edges: np.ndarray
    rest_lengths: np.ndarray
    faces: np.ndarray
    rest_normals: np.ndarray
    heartbeat: Optional[Heartbeat] = None
    heartbeat_weights: Optional[np.ndarray] = None
    target_particle: Optional[int] = None
    config: SoftBodyConfig = field(default_factory=SoftBodyConfig)
    sim_time: float = 0.0

    @classmethod
    def from_mesh(
        cls,
        mesh: TriMesh,
        config: Optional[SoftBodyConfig] = None,
        heartbeat: Optional[Heartbeat] = None,
        pinned: Optional[np.ndarray] = None,
    ) -> "SoftBody":
        config = config or SoftBodyConfig()
        edges = mesh.edge_list()
        rest = mesh.vertices.copy()
        rest_lengths = np.linalg.norm(rest[edges[:, 1]] - rest[edges[:, 0]], axis=1)
        inv_mass = np.ones(len(rest))
        if pinned is not None:
            inv_mass[np.asarray(pinned)] = 0.0
        weights = None
        if heartbeat is not None:
            if heartbeat.center is not None and heartbeat.falloff is not None:
                d2 = ((rest - heartbeat.center) ** 2).sum(axis=1)
                weights = np.exp(-d2 / (2.0 * heartbeat.falloff ** 2))
            else:
                weights = np.ones(len(rest))
        return cls(
            positions=rest.copy(),
            prev_positions=rest.copy(),
            rest_positions=rest,
            inverse_mass=inv_mass,
            edges=np.ascontiguousarray(edges, dtype=np.int64),
            rest_lengths=rest_lengths,
            faces=mesh.faces,
            rest_normals=mesh.vertex_normals(),
            heartbeat=heartbeat,
            heartbeat_weights=weights,
            config=config,
        )

    def current_mesh(self) -> TriMesh:
        return TriMesh(vertices=self.positions.copy(), faces=self.faces)

    def pinned_mask(self) -> np.ndarray:
        return self.inverse_mass == 0.0


def target_position(body: SoftBody) -> np.ndarray:
    """Current position of the particle carrying the navigation target."""
    if body.target_particle is None:
        raise ValueError("soft body has no target particle assigned")
    return body.positions[body.target_particle].copy()


def constraint_residual(body: SoftBody) -> float:
    """Largest absolute distance-constraint violation, mm."""
    lengths = np.linalg.norm(
        body.positions[body.edges[:, 1]] - body.positions[body.edges[:, 0]], axis=1
    )
    return float(np.abs(lengths - body.rest_lengths).max())


@numba.njit(cache=True)
def _project_distance_constraints(pos, inv_mass, edges, rest_lengths, stiffness, n_iters):  # pragma: no cover - jit
    for _ in range(n_iters):
        for k in range(edges.shape[0]):
            i = edges[k, 0]
            j = edges[k, 1]
            wi = inv_mass[i]
            wj = inv_mass[j]
            wsum = wi + wj
            if wsum == 0.0:
                continue
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            dz = pos[j, 2] - pos[i, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            if d < 1e-12:
                continue
            s = stiffness * (d - rest_lengths[k]) / (d * wsum)
            pos[i, 0] += wi * s * dx
            pos[i, 1] += wi * s * dy
            pos[i, 2] += wi * s * dz
            pos[j, 0] -= wj * s * dx
            pos[j, 1] -= wj * s * dy
            pos[j, 2] -= wj * s * dz


def _first_bad_particle(positions: np.ndarray) -> int:
    return int(np.argwhere(~np.all(np.isfinite(positions), axis=1))[0][0])


def pbd_step(body: SoftBody, dt: float) -> None:
    """Advance the wall by one timestep in place.

    Order is fixed: Verlet prediction with velocity damping, then the
    Gauss-Seidel constraint passes, then the anchor pull toward the rest
    pose offset by the heartbeat evaluated at the new time.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not np.all(np.isfinite(body.positions)):
        raise SimulationDiverged(
            f"particle {_first_bad_particle(body.positions)} became non-finite at t={body.sim_time:.6g}"
        )
    cfg = body.config
    free = body.inverse_mass > 0.0

    velocity = (body.positions - body.prev_positions) * cfg.damping
    body.prev_positions = body.positions.copy()
    body.positions[free] += velocity[free]

    _project_distance_constraints(
        body.positions,
        body.inverse_mass,
        body.edges,
        body.rest_lengths,
        cfg.stiffness,
        cfg.solver_iterations,
    )

    t_new = body.sim_time + dt
    if cfg.anchor_stiffness > 0.0:
        target = body.rest_positions
        if body.heartbeat is not None:
            offset = heartbeat_displacement(body.heartbeat, t_new)
            target = target + body.heartbeat_weights[:, None] * offset[None, :]
        k = cfg.anchor_stiffness
        # two-term lerp lands exactly on the target when k is 1
        body.positions[free] = body.positions[free] * (1.0 - k) + target[free] * k
    body.sim_time = t_new

    if not np.all(np.isfinite(body.positions)):
        raise SimulationDiverged(
            f"particle {_first_bad_particle(body.positions)} became non-finite at t={t_new:.6g}"
        )


def apply_tip_contact(
    body: SoftBody, tip_position: np.ndarray, tip_radius: float, displace: bool = True
) -> ContactResult:
    """Push overlapping wall particles out of the tip sphere and grade the contact.

    Each particle closer to the tip than the radius moves outward along its
    surface normal by the overlap depth. Pinned particles do not move but
    still count toward penetration. Contact is damaging when the implied
    force exceeds the cap or when the tip centre has passed through the
    wall entirely. With displace off (a rigid wall), the report is computed
    without moving anything.
    """
    if tip_radius <= 0.0:
        raise ValueError(f"tip_radius must be positive, got {tip_radius}")
    tip_position = np.asarray(tip_position, dtype=np.float64)
    dist = np.linalg.norm(body.positions - tip_position, axis=1)
    overlap = tip_radius - dist
    touching = overlap > 0.0
    if not np.any(touching):
        return ContactResult(penetration=0.0, force=0.0, severity=SEVERITY_NONE)

    penetration = float(overlap[touching].max())
    movable = touching & (body.inverse_mass > 0.0) if displace else np.zeros(0, dtype=bool)
    if displace and np.any(movable):
        body.positions[movable] += overlap[movable, None] * body.rest_normals[movable]

    force = body.config.contact_stiffness * penetration
    through_wall = signed_distance(body.current_mesh(), tip_position) >= 0.0
    if force > body.config.force_cap or through_wall:
        severity = SEVERITY_NON_MINOR
    else:
        severity = SEVERITY_MINOR
    return ContactResult(penetration=penetration, force=force, severity=severity)
