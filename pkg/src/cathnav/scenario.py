"""Scenario files: anatomy, guidance spaces, and parameters in one place.

A scenario YAML names the mesh (file or a built-in tube generator), the
centerline (file or auto-extraction), start poses, the target region, the
exit plane, and any parameter overrides. Loading resolves everything into
a frozen Scenario whose configuration hash pins the exact world: the hash
covers mesh bytes, centerline coordinates, and every numeric parameter, so
two runs agree on it exactly when and only when they simulate the same
setup.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from cathnav.centerline import extract_centerline, load_centerline_file, save_centerline_file
from cathnav.environment import NavEnv, Plane, RewardConfig, Spaces, TargetRegion
from cathnav.errors import ConfigError
from cathnav.kinematics import CatheterSpec, TipPose
from cathnav.mesh import TriMesh, bent_path, load_obj, save_obj, straight_path, tube_along_path
from cathnav.softbody import Heartbeat, SoftBodyConfig


@dataclass(frozen=True)
class Scenario:
    """A fully resolved world description."""

    name: str
    catheter: CatheterSpec
    mesh: TriMesh
    centerline: np.ndarray
    start_poses: Sequence[TipPose]
    target_region: TargetRegion
    exit_plane: Plane
    heartbeat: Optional[Heartbeat] = None
    softbody_config: SoftBodyConfig = field(default_factory=SoftBodyConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    pin_band: float = 0.0
    rigid: bool = False
    max_episode_steps: int = 2000

    def spaces(self) -> Spaces:
        return Spaces(
            centerline=self.centerline,
            target_region=self.target_region,
            start_poses=list(self.start_poses),
            exit_plane=self.exit_plane,
        )

    def pinned_indices(self) -> Optional[np.ndarray]:
        if self.pin_band <= 0.0:
            return None
        ends = np.stack([self.centerline[0], self.centerline[-1]])
        d = np.linalg.norm(self.mesh.vertices[:, None, :] - ends[None, :, :], axis=2).min(axis=1)
        return np.flatnonzero(d < self.pin_band)

    def build_env(self, seed: Optional[int] = None) -> NavEnv:
        return NavEnv(
            mesh=self.mesh,
            spaces=self.spaces(),
            catheter=self.catheter,
            rewards=self.rewards,
            softbody_config=self.softbody_config,
            heartbeat=self.heartbeat,
            pinned=self.pinned_indices(),
            rigid=self.rigid,
            max_episode_steps=self.max_episode_steps,
            seed=seed,
        )

    def config_hash(self) -> str:
        d = {
            "name": self.name,
            "catheter": {
                "segment_length": self.catheter.segment_length,
                "theta_max": self.catheter.theta_max,
                "outer_diameter": self.catheter.outer_diameter,
                "v_max": self.catheter.v_max,
                "dt": self.catheter.dt,
            },
            "mesh": self.mesh.content_hash(),
            "centerline": hashlib.sha256(
                np.ascontiguousarray(self.centerline, dtype=np.float64).tobytes()
            ).hexdigest(),
            "start_poses": [
                [list(map(float, p.position)), p.alpha, p.gamma] for p in self.start_poses
            ],
            "target_region": [list(map(float, self.target_region.center)), self.target_region.radius],
            "exit_plane": [
                list(map(float, self.exit_plane.point)),
                list(map(float, self.exit_plane.normal)),
            ],
            "heartbeat": None
            if self.heartbeat is None
            else {
                "amplitude": list(map(float, self.heartbeat.amplitude)),
                "period": self.heartbeat.period,
                "center": None if self.heartbeat.center is None else list(map(float, self.heartbeat.center)),
                "falloff": self.heartbeat.falloff,
            },
            "softbody": {
                "stiffness": self.softbody_config.stiffness,
                "solver_iterations": self.softbody_config.solver_iterations,
                "damping": self.softbody_config.damping,
                "anchor_stiffness": self.softbody_config.anchor_stiffness,
                "contact_stiffness": self.softbody_config.contact_stiffness,
                "force_cap": self.softbody_config.force_cap,
            },
            "rewards": {
                "r_obst": self.rewards.r_obst,
                "r_exit": self.rewards.r_exit,
                "r_target": self.rewards.r_target,
                "r_step": self.rewards.r_step,
                "r_centerline": self.rewards.r_centerline,
                "r_bending": self.rewards.r_bending,
                "epsilon": self.rewards.epsilon,
                "waypoint_radius": self.rewards.waypoint_radius,
                "bend_threshold": self.rewards.bend_threshold,
                "bend_threshold_fraction": self.rewards.bend_threshold_fraction,
            },
            "pin_band": self.pin_band,
            "rigid": self.rigid,
            "max_episode_steps": self.max_episode_steps,
        }
        canonical = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


_TOP_KEYS = {
    "name",
    "catheter",
    "mesh",
    "centerline",
    "start_poses",
    "target_region",
    "exit_plane",
    "heartbeat",
    "softbody",
    "rewards",
    "pin_band",
    "rigid",
    "max_episode_steps",
}


def _require(raw: dict, key: str, path):
    if key not in raw:
        raise ConfigError(f"{path}: scenario is missing required key '{key}'")
    return raw[key]


def _take(raw: dict, allowed: set, where: str, path):
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"{path}: unknown {where} key(s): {', '.join(sorted(unknown))}")


def load_scenario(path) -> Scenario:
    """Parse and resolve a scenario YAML; relative files resolve beside it."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: not valid YAML: {e}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: scenario must be a mapping")
    _take(raw, _TOP_KEYS, "scenario", path)
    base = path.parent

    cat_raw = dict(raw.get("catheter", {}))
    _take(cat_raw, {"segment_length", "theta_max_deg", "outer_diameter", "v_max", "dt"}, "catheter", path)
    if "theta_max_deg" in cat_raw:
        cat_raw["theta_max"] = math.radians(cat_raw.pop("theta_max_deg"))
    try:
        catheter = CatheterSpec(**cat_raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path}: bad catheter spec: {e}")

    mesh_raw = _require(raw, "mesh", path)
    _take(mesh_raw, {"file", "generator"}, "mesh", path)
    if "file" in mesh_raw:
        mesh = load_obj(base / mesh_raw["file"])
    elif "generator" in mesh_raw:
        mesh = _generate_mesh(mesh_raw["generator"], path)
    else:
        raise ConfigError(f"{path}: mesh needs either 'file' or 'generator'")

    cl_raw = raw.get("centerline", {"auto": {}})
    _take(cl_raw, {"file", "auto"}, "centerline", path)
    if "file" in cl_raw:
        centerline = load_centerline_file(base / cl_raw["file"])
    else:
        auto = cl_raw.get("auto") or {}
        _take(auto, {"inlet", "outlet", "spacing"}, "centerline auto", path)
        for k in ("inlet", "outlet"):
            if k not in auto:
                raise ConfigError(f"{path}: centerline auto-extraction needs '{k}'")
        centerline = extract_centerline(
            mesh,
            np.asarray(auto["inlet"], dtype=np.float64),
            np.asarray(auto["outlet"], dtype=np.float64),
            waypoint_spacing=float(auto.get("spacing", 5.0)),
        )

    starts = []
    for sp in _require(raw, "start_poses", path):
        _take(sp, {"position", "alpha", "gamma"}, "start pose", path)
        starts.append(
            TipPose(
                position=np.asarray(sp["position"], dtype=np.float64),
                alpha=float(sp.get("alpha", 0.0)),
                gamma=float(sp.get("gamma", 0.0)),
            )
        )

    tr = _require(raw, "target_region", path)
    _take(tr, {"center", "radius"}, "target_region", path)
    target = TargetRegion(
        center=np.asarray(tr["center"], dtype=np.float64), radius=float(tr["radius"])
    )

    ep = _require(raw, "exit_plane", path)
    _take(ep, {"point", "normal"}, "exit_plane", path)
    exit_plane = Plane(
        point=np.asarray(ep["point"], dtype=np.float64),
        normal=np.asarray(ep["normal"], dtype=np.float64),
    )

    heartbeat = None
    hb = raw.get("heartbeat")
    if hb:
        _take(hb, {"amplitude", "period", "center", "falloff"}, "heartbeat", path)
        heartbeat = Heartbeat(
            amplitude=np.asarray(hb["amplitude"], dtype=np.float64),
            period=float(hb["period"]),
            center=None if hb.get("center") is None else np.asarray(hb["center"], dtype=np.float64),
            falloff=None if hb.get("falloff") is None else float(hb["falloff"]),
        )

    sb_raw = dict(raw.get("softbody", {}))
    _take(
        sb_raw,
        {"stiffness", "solver_iterations", "damping", "anchor_stiffness", "contact_stiffness", "force_cap"},
        "softbody",
        path,
    )
    rw_raw = dict(raw.get("rewards", {}))
    _take(
        rw_raw,
        {
            "r_obst",
            "r_exit",
            "r_target",
            "r_step",
            "r_centerline",
            "r_bending",
            "epsilon",
            "waypoint_radius",
            "bend_threshold",
            "bend_threshold_fraction",
        },
        "rewards",
        path,
    )
    return Scenario(
        name=str(raw.get("name", path.stem)),
        catheter=catheter,
        mesh=mesh,
        centerline=centerline,
        start_poses=starts,
        target_region=target,
        exit_plane=exit_plane,
        heartbeat=heartbeat,
        softbody_config=SoftBodyConfig(**sb_raw),
        rewards=RewardConfig(**rw_raw),
        pin_band=float(raw.get("pin_band", 0.0)),
        rigid=bool(raw.get("rigid", False)),
        max_episode_steps=int(raw.get("max_episode_steps", 2000)),
    )


def _generate_mesh(gen: dict, path) -> TriMesh:
    _take(
        gen,
        {"kind", "length", "radius", "n_around", "n_path", "straight_length", "arc_radius", "arc_angle_deg", "cap_ends"},
        "mesh generator",
        path,
    )
    kind = gen.get("kind")
    radius = float(gen.get("radius", 8.0))
    n_around = int(gen.get("n_around", 12))
    cap = bool(gen.get("cap_ends", True))
    if kind == "straight":
        p = straight_path(float(gen.get("length", 140.0)), n=int(gen.get("n_path", 21)))
    elif kind == "bent":
        p = bent_path(
            float(gen.get("straight_length", 60.0)),
            float(gen.get("arc_radius", 40.0)),
            math.radians(float(gen.get("arc_angle_deg", 60.0))),
            n_straight=int(gen.get("n_path", 13)),
            n_arc=int(gen.get("n_path", 13)),
        )
    else:
        raise ConfigError(f"{path}: unknown mesh generator kind '{kind}'")
    return tube_along_path(p, radius=radius, n_around=n_around, cap_ends=cap)


# ---------------------------------------------------------------------------
# built-in toy anatomies, used by tests and gen-scenario


def toy_scenario(kind: str = "straight", dynamic: bool = False) -> Scenario:
    """Small tube worlds with a fast catheter, for experiments and tests.

    ``dynamic`` turns on the heartbeat and wall deformability; otherwise the
    wall is rigid and still, which steps much faster.
    """
    radius = 8.0
    catheter = CatheterSpec(segment_length=50.0, theta_max=math.pi / 2, outer_diameter=7.0, v_max=25.0, dt=0.1)
    if kind == "straight":
        path = straight_path(140.0, n=21)
        mesh = tube_along_path(path, radius=radius, n_around=12, cap_ends=True)
        centerline = extract_centerline(mesh, path[0], path[-1])
        target_center = np.array([0.0, 120.0, 0.0])
        exit_plane = Plane(point=np.array([0.0, 132.0, 0.0]), normal=np.array([0.0, 1.0, 0.0]))
    elif kind == "bent":
        path = bent_path(60.0, 40.0, math.radians(60.0), n_straight=13, n_arc=13)
        mesh = tube_along_path(path, radius=radius, n_around=12, cap_ends=True)
        centerline = extract_centerline(mesh, path[0], path[-1])
        end = path[-1]
        tangent = path[-1] - path[-2]
        tangent /= np.linalg.norm(tangent)
        target_center = end - 18.0 * tangent
        exit_plane = Plane(point=end - 8.0 * tangent, normal=tangent)
    else:
        raise ConfigError(f"unknown toy scenario kind '{kind}'")
    heartbeat = (
        Heartbeat(amplitude=np.array([1.2, 0.0, 0.0]), period=0.9) if dynamic else None
    )
    return Scenario(
        name=f"toy-{kind}" + ("-dynamic" if dynamic else ""),
        catheter=catheter,
        mesh=mesh,
        centerline=centerline,
        start_poses=[TipPose(position=np.array([0.0, 6.0, 0.0]))],
        target_region=TargetRegion(center=target_center, radius=10.0),
        exit_plane=exit_plane,
        heartbeat=heartbeat,
        rigid=not dynamic,
        max_episode_steps=400,
    )


def write_scenario_files(directory, scenario: Scenario) -> Path:
    """Write mesh, centerline, and YAML for a scenario; returns the YAML path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_obj(directory / "vessel.obj", scenario.mesh)
    save_centerline_file(directory / "centerline.txt", scenario.centerline)
    doc = {
        "name": scenario.name,
        "catheter": {
            "segment_length": scenario.catheter.segment_length,
            "theta_max_deg": math.degrees(scenario.catheter.theta_max),
            "outer_diameter": scenario.catheter.outer_diameter,
            "v_max": scenario.catheter.v_max,
            "dt": scenario.catheter.dt,
        },
        "mesh": {"file": "vessel.obj"},
        "centerline": {"file": "centerline.txt"},
        "start_poses": [
            {"position": [float(x) for x in p.position], "alpha": p.alpha, "gamma": p.gamma}
            for p in scenario.start_poses
        ],
        "target_region": {
            "center": [float(x) for x in scenario.target_region.center],
            "radius": scenario.target_region.radius,
        },
        "exit_plane": {
            "point": [float(x) for x in scenario.exit_plane.point],
            "normal": [float(x) for x in scenario.exit_plane.normal],
        },
        "pin_band": scenario.pin_band,
        "rigid": scenario.rigid,
        "max_episode_steps": scenario.max_episode_steps,
    }
    if scenario.heartbeat is not None:
        doc["heartbeat"] = {
            "amplitude": [float(x) for x in scenario.heartbeat.amplitude],
            "period": scenario.heartbeat.period,
            "center": None
            if scenario.heartbeat.center is None
            else [float(x) for x in scenario.heartbeat.center],
            "falloff": scenario.heartbeat.falloff,
        }
    out = directory / "scenario.yaml"
    out.write_text(yaml.safe_dump(doc, sort_keys=False))
    return out
