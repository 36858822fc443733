"""Recording, storage, and replay of expert demonstrations.

A demonstration is the (observation, action) stream of one episode plus its
outcome, stored as JSON lines: a header record with provenance and schema
fields, one record per step, and an outcome footer. Files are written once
and never edited; readers validate the header against the scenario they are
about to train on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .environment import OBS_DIM, N_RAYS, NavEnv, Observation, Spaces
from .errors import ConfigError, SchemaMismatch
from .kinematics import Action, CatheterSpec, clamp_action, max_bend_at_step
from .validation import check_nonnegative, ensure_rng

_FORMAT_VERSION = 1


@dataclass
class Demonstration:
    """One recorded episode in the training stack's observation/action schema."""

    observations: np.ndarray  # (n, OBS_DIM)
    actions: np.ndarray  # (n, 3) rows of (alpha, gamma, dl)
    outcome: bool
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.observations = np.ascontiguousarray(self.observations, dtype=np.float64)
        self.actions = np.ascontiguousarray(self.actions, dtype=np.float64)
        if self.observations.ndim != 2 or self.actions.ndim != 2:
            raise ConfigError("demonstration arrays must be 2-d")
        if len(self.observations) != len(self.actions):
            raise ConfigError("observation and action counts differ")
        if self.actions.shape[1] != 3:
            raise ConfigError("actions must have 3 columns")

    def __len__(self) -> int:
        return len(self.actions)


# -- scripted expert -------------------------------------------------------


def _arc_tables(centerline: np.ndarray):
    seg = np.diff(centerline, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    return seg, seg_len, cum


def _arc_position(centerline, seg, seg_len, cum, p) -> float:
    """Arc-length coordinate of the point's projection onto the polyline."""
    rel = p - centerline[:-1]
    t = np.einsum("ij,ij->i", rel, seg) / np.maximum(seg_len**2, 1e-18)
    t = np.clip(t, 0.0, 1.0)
    foot = centerline[:-1] + t[:, None] * seg
    i = int(np.argmin(((foot - p) ** 2).sum(axis=1)))
    return float(cum[i] + t[i] * seg_len[i])


def _point_at(centerline, cum, s) -> np.ndarray:
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(centerline) - 2)
    span = cum[i + 1] - cum[i]
    t = (s - cum[i]) / span if span > 0 else 0.0
    return centerline[i] + t * (centerline[i + 1] - centerline[i])


def scripted_expert(
    spaces: Spaces,
    catheter: CatheterSpec,
    noise: float = 0.0,
    lookahead: float = 10.0,
) -> Callable[[Observation, np.random.Generator], Action]:
    """Pure-pursuit controller chasing the centerline, then the target.

    Steers toward the centerline point one lookahead ahead of the tip's
    projection, switching to the live target once the remaining path is
    shorter than the lookahead. Commanded bends invert the heading map
    exactly (heading = (-sin g cos a, cos g cos a, sin a)), then everything
    runs through clamp_action, so every emitted action is feasible.
    ``noise`` adds zero-mean Gaussian jitter before the clamp, in units of
    the per-step bend bound and of the full insertion step.
    """
    check_nonnegative(noise, "noise")
    if lookahead <= 0:
        raise ConfigError("lookahead must be positive")
    centerline = np.asarray(spaces.centerline, dtype=np.float64)
    seg, seg_len, cum = _arc_tables(centerline)
    total = float(cum[-1])

    def policy(obs: Observation, rng: np.random.Generator) -> Action:
        p = obs.pose.position
        to_target = obs.v
        dl = catheter.max_step_length
        s = _arc_position(centerline, seg, seg_len, cum, p)
        if total - s <= lookahead or np.linalg.norm(to_target) <= lookahead:
            aim = to_target
        else:
            aim = _point_at(centerline, cum, s + lookahead) - p
        dist = float(np.linalg.norm(aim))
        if dist < 1e-9:
            return clamp_action(catheter, Action(0.0, 0.0, 0.0))
        d = aim / dist
        # asin puts alpha* in [-pi/2, pi/2]; gamma* can leave the reachable
        # interval, so both are clipped to it before differencing.
        alpha_star = math.asin(min(1.0, max(-1.0, d[2])))
        gamma_star = math.atan2(-d[0], d[1])
        alpha_star = min(catheter.theta_max, max(-catheter.theta_max, alpha_star))
        gamma_star = min(catheter.theta_max, max(-catheter.theta_max, gamma_star))
        da = alpha_star - obs.pose.alpha
        dg = gamma_star - obs.pose.gamma
        if noise > 0.0:
            bound = max_bend_at_step(catheter, dl)
            da += rng.normal(0.0, noise * bound)
            dg += rng.normal(0.0, noise * bound)
            dl += rng.normal(0.0, noise * dl)
        return clamp_action(catheter, Action(da, dg, dl))

    return policy


# -- recording -------------------------------------------------------------


def record_episode(
    env: NavEnv,
    policy,
    rng: Optional[np.random.Generator] = None,
    scenario_name: str = "",
    config_hash: str = "",
    recorder: str = "scripted",
    date: str = "",
    max_steps: Optional[int] = None,
) -> Demonstration:
    """One environment episode logged 1:1 as a demonstration.

    Stored actions are the clamped actions the environment applied, not the
    policy's raw commands, so replays are feasible by construction. A run
    that ends without reaching the target is kept with outcome False.
    """
    result = env.run_episode(policy, rng=rng, max_steps=max_steps)
    obs = np.array([t[0].vector() for t in result.transitions], dtype=np.float64)
    act = np.array([t[1].as_array() for t in result.transitions], dtype=np.float64)
    if len(result.transitions) == 0:
        obs = np.zeros((0, OBS_DIM))
        act = np.zeros((0, 3))
    meta = {
        "scenario": scenario_name,
        "config_hash": config_hash,
        "recorder": recorder,
        "date": date,
        "obs_dim": OBS_DIM,
        "n_rays": N_RAYS,
        # enough world state to replay the exact episode without the rng
        "start_pose": int(getattr(env, "start_index", 0)),
        "target_particle": int(env.world.target_particle),
    }
    return Demonstration(observations=obs, actions=act, outcome=result.success, meta=meta)


def generate_demos(scenario, count: int, noise: float = 0.0, seed: int = 0) -> List[Demonstration]:
    """Batch of scripted-expert demonstrations, deterministic in the seed."""
    if count < 1:
        raise ConfigError("count must be at least 1")
    env = scenario.build_env(seed=seed)
    expert = scripted_expert(scenario.spaces(), scenario.catheter, noise=noise)
    rng = np.random.default_rng(seed)
    name = scenario.name
    chash = scenario.config_hash()
    return [
        record_episode(env, expert, rng=rng, scenario_name=name, config_hash=chash)
        for _ in range(count)
    ]


# -- files -----------------------------------------------------------------


def save_demo(demo: Demonstration, path) -> Path:
    path = Path(path)
    header = {"kind": "meta", "format": _FORMAT_VERSION}
    header.update(demo.meta)
    lines = [json.dumps(header, sort_keys=True)]
    for o, a in zip(demo.observations, demo.actions):
        lines.append(json.dumps({"kind": "step", "obs": o.tolist(), "action": a.tolist()}))
    lines.append(json.dumps({"kind": "outcome", "success": bool(demo.outcome), "steps": len(demo)}))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def load_demo(path, expect_hash: Optional[str] = None) -> Demonstration:
    """Parse a demonstration file, refusing schema or hash mismatches.

    Malformed or truncated input raises ConfigError naming the byte offset
    where parsing stopped; a header whose config hash disagrees with
    ``expect_hash`` raises SchemaMismatch.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"demonstration file not found: {path}")
    raw = path.read_bytes()
    records = []
    offset = 0
    for line in raw.split(b"\n"):
        stripped = line.strip()
        if stripped:
            try:
                records.append((offset, json.loads(stripped)))
            except ValueError:
                raise ConfigError(f"{path}: malformed record at byte {offset}")
        offset += len(line) + 1
    if not records:
        raise ConfigError(f"{path}: empty demonstration file")
    _, header = records[0]
    if header.get("kind") != "meta":
        raise ConfigError(f"{path}: first record at byte {records[0][0]} is not a header")
    if header.get("format") != _FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format {header.get('format')!r}")
    if records[-1][1].get("kind") != "outcome":
        raise ConfigError(f"{path}: truncated file, no outcome record (ends at byte {len(raw)})")
    meta = {k: v for k, v in header.items() if k not in ("kind", "format")}
    obs_dim = int(meta.get("obs_dim", OBS_DIM))
    if expect_hash is not None and meta.get("config_hash") != expect_hash:
        raise SchemaMismatch(
            f"{path}: recorded for config {meta.get('config_hash')!r}, expected {expect_hash!r}"
        )
    obs_rows = []
    act_rows = []
    for off, rec in records[1:-1]:
        if rec.get("kind") != "step":
            raise ConfigError(f"{path}: unexpected record kind {rec.get('kind')!r} at byte {off}")
        o = rec.get("obs")
        a = rec.get("action")
        if not isinstance(o, list) or len(o) != obs_dim:
            raise SchemaMismatch(
                f"{path}: step at byte {off} has {len(o) if isinstance(o, list) else '?'} "
                f"observation values, header says {obs_dim}"
            )
        if not isinstance(a, list) or len(a) != 3:
            raise SchemaMismatch(f"{path}: step at byte {off} lacks a 3-component action")
        obs_rows.append(o)
        act_rows.append(a)
    footer = records[-1][1]
    if footer.get("steps") != len(obs_rows):
        raise ConfigError(
            f"{path}: outcome record claims {footer.get('steps')} steps, file has {len(obs_rows)}"
        )
    obs = np.array(obs_rows, dtype=np.float64) if obs_rows else np.zeros((0, obs_dim))
    act = np.array(act_rows, dtype=np.float64) if act_rows else np.zeros((0, 3))
    return Demonstration(observations=obs, actions=act, outcome=bool(footer["success"]), meta=meta)


def save_demo_batch(demos: Sequence[Demonstration], directory) -> List[Path]:
    directory = Path(directory)
    return [save_demo(d, directory / f"demo_{i:04d}.jsonl") for i, d in enumerate(demos)]


def load_demo_batch(directory, expect_hash: Optional[str] = None) -> List[Demonstration]:
    directory = Path(directory)
    paths = sorted(directory.glob("demo_*.jsonl"))
    if not paths:
        raise ConfigError(f"no demonstration files under {directory}")
    return [load_demo(p, expect_hash=expect_hash) for p in paths]


def stack_steps(
    demos: Sequence[Demonstration], successful_only: bool = True
) -> Tuple[np.ndarray, np.ndarray]:
    """All (observation, action) rows across demonstrations, stacked."""
    keep = [d for d in demos if d.outcome or not successful_only]
    if not keep:
        raise ConfigError("no usable demonstrations (none marked successful)")
    obs = np.concatenate([d.observations for d in keep], axis=0)
    act = np.concatenate([d.actions for d in keep], axis=0)
    return obs, act
