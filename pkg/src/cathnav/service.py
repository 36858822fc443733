"""Teleoperation session server.

A Session owns one environment and enforces the trial protocol: commands
are velocity-style (bend rates and signed insertion speed), latched
last-writer-wins, and applied at a fixed service tick rate that sub-steps
down to the environment's control interval. A trial ends on success,
non-minor collision, or exactly at the 180 s trial-clock cap; leaving the
lumen or exhausting the environment's episode step budget does not end a
teleoperated trial, because the operator may steer or retract back.

The network layer serves one session per websocket connection and never
lets a slow reader stall the simulation: frames queue in a small buffer
and the stalest are dropped first. The terminal message is always the
last one queued, so it is never dropped.
"""

from __future__ import annotations

import asyncio
import dataclasses
import uuid
from enum import Enum
from typing import List, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect

from .environment import NavEnv
from .errors import CathnavError, ConfigError
from .kinematics import Action, CatheterBody
from .metrics import MetricsReport, curvature, resample_path, tracking_error
from .scenario import Scenario
from .softbody import pbd_step, target_position

INSERTION_SPEED_CAP = 5.0  # mm/s
TIME_LIMIT = 180.0  # s of trial clock
TICK_HZ = 20
SURFACE_DELTA_MIN = 0.05  # mm; smaller wall displacements are not sent


class SessionState(str, Enum):
    READY = "ready"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED_TIMEOUT = "failed_timeout"
    FAILED_COLLISION = "failed_collision"

    @property
    def terminal(self) -> bool:
        return self in (
            SessionState.SUCCEEDED,
            SessionState.FAILED_TIMEOUT,
            SessionState.FAILED_COLLISION,
        )


class SessionRejected(CathnavError):
    """A message arrived in a state where it is not allowed."""

    def __init__(self, message: str, state: SessionState):
        super().__init__(message)
        self.state = state


@dataclasses.dataclass(frozen=True)
class Command:
    """Velocity command: bend rates in rad/s, insertion speed in mm/s (signed)."""

    bend_alpha: float = 0.0
    bend_gamma: float = 0.0
    insertion: float = 0.0

    def clamped(self) -> "Command":
        v = min(max(self.insertion, -INSERTION_SPEED_CAP), INSERTION_SPEED_CAP)
        return Command(self.bend_alpha, self.bend_gamma, v)

    def to_dict(self) -> dict:
        return {
            "bend_alpha": self.bend_alpha,
            "bend_gamma": self.bend_gamma,
            "insertion": self.insertion,
        }


@dataclasses.dataclass
class StateFrame:
    """One snapshot pushed to the client; all fields are plain JSON types."""

    tick: int
    clock: float
    state: str
    position: List[float]
    alpha: float
    gamma: float
    body: List[List[float]]
    surface_deltas: List[List[float]]
    target: List[float]
    next_waypoint: Optional[List[float]]
    bend_direction: Optional[List[float]]
    distance_to_target: float
    wall_clearance: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "StateFrame":
        return cls(**{f.name: raw[f.name] for f in dataclasses.fields(cls)})


class Session:
    """One trial: an environment plus the teleoperation protocol state."""

    def __init__(
        self,
        scenario: Scenario,
        guidance: str = "centerline",
        guidance_path: Optional[np.ndarray] = None,
        tick_hz: int = TICK_HZ,
        seed: int = 0,
        session_id: Optional[str] = None,
    ):
        if tick_hz < 1:
            raise ConfigError("tick_hz must be at least 1")
        if guidance == "centerline":
            path = scenario.centerline
        elif guidance == "cgail":
            if guidance_path is None:
                raise ConfigError("guidance 'cgail' needs a planned path")
            path = np.asarray(guidance_path, dtype=np.float64)
        else:
            raise ConfigError(f"unknown guidance kind {guidance!r}")
        self.id = session_id or uuid.uuid4().hex
        self.scenario = scenario
        self.guidance_kind = guidance
        self.guidance = path
        self.tick_hz = int(tick_hz)
        self.seed = int(seed)
        self.env: NavEnv = scenario.build_env(seed=seed)
        self._begin_trial()

    def _begin_trial(self) -> None:
        obs = self.env.reset(np.random.default_rng(self.seed))
        self.state = SessionState.READY
        self.tick_count = 0
        self.latched = Command()
        self._time_acc = 0.0
        self._last_obs = obs
        self._trajectory = [self.env.pose.position.copy()]
        self._min_target_distance = float(np.linalg.norm(obs.v))
        self._forward_steps = 0
        self._terminal_clock = 0.0

    # -- protocol ----------------------------------------------------------

    @property
    def clock(self) -> float:
        return self.tick_count / self.tick_hz

    def start(self) -> None:
        if self.state is not SessionState.READY:
            raise SessionRejected(f"cannot start from state {self.state.value}", self.state)
        self.state = SessionState.RUNNING

    def reset(self) -> None:
        """Back to a fresh READY trial; allowed from any state."""
        self._begin_trial()

    def command(self, bend_alpha: float, bend_gamma: float, insertion: float) -> Command:
        if self.state is not SessionState.RUNNING:
            raise SessionRejected(
                f"command rejected in state {self.state.value}", self.state
            )
        for name, value in (
            ("bend_alpha", bend_alpha),
            ("bend_gamma", bend_gamma),
            ("insertion", insertion),
        ):
            if not np.isfinite(value):
                raise SessionRejected(f"non-finite {name}", self.state)
        self.latched = Command(float(bend_alpha), float(bend_gamma), float(insertion)).clamped()
        return self.latched

    def tick(self) -> StateFrame:
        """Advance one service tick; sub-steps the environment as time accrues."""
        if self.state is not SessionState.RUNNING:
            raise SessionRejected(f"tick in state {self.state.value}", self.state)
        self.tick_count += 1
        self._time_acc += 1.0 / self.tick_hz
        dt = self.env.catheter.dt
        while self._time_acc >= dt - 1e-12 and self.state is SessionState.RUNNING:
            self._time_acc -= dt
            self._substep(dt)
        if self.state is SessionState.RUNNING and self.clock >= TIME_LIMIT:
            self._finish(SessionState.FAILED_TIMEOUT)
        return self.frame()

    def _substep(self, dt: float) -> None:
        cmd = self.latched
        dl = cmd.insertion * dt
        if dl >= 0.0:
            action = Action(
                alpha=cmd.bend_alpha * dt, gamma=cmd.bend_gamma * dt, dl=dl
            )
            obs, _, _, info = self.env.step(action)
            self._last_obs = obs
            self._forward_steps += 1
            events = info["events"]
            self._track()
            if events.reached_target and not events.collided_non_minor:
                self._finish(SessionState.SUCCEEDED)
            elif events.collided_non_minor:
                self._finish(SessionState.FAILED_COLLISION)
        else:
            self._retract(-dl)
            if not self.env.rigid:
                pbd_step(self.env.world, dt)
            else:
                self.env.world.sim_time += dt
            self._last_obs = self.env.observe()
            self._track()

    def _retract(self, amount: float) -> None:
        """Pull the tip back along its own recorded path by ``amount`` mm."""
        history = list(self.env.body.history)
        pulled = 0.0
        while len(history) > 1 and pulled < amount:
            segment = float(
                np.linalg.norm(history[-1].position - history[-2].position)
            )
            history.pop()
            pulled += segment
        self.env.body = CatheterBody(
            history=tuple(history), max_points=self.env.body.max_points
        )
        self.env.pose = history[-1]

    def _track(self) -> None:
        self._trajectory.append(self.env.pose.position.copy())
        distance = float(
            np.linalg.norm(target_position(self.env.world) - self.env.pose.position)
        )
        self._min_target_distance = min(self._min_target_distance, distance)

    def _finish(self, state: SessionState) -> None:
        self.state = state
        self._terminal_clock = self.clock

    # -- outputs -----------------------------------------------------------

    def frame(self) -> StateFrame:
        env = self.env
        position = env.pose.position
        target = target_position(env.world)
        deltas = []
        moved = env.world.positions - env.mesh.vertices
        norms = np.linalg.norm(moved, axis=1)
        for idx in np.flatnonzero(norms > SURFACE_DELTA_MIN):
            deltas.append(
                [int(idx)] + [float(x) for x in moved[idx]]
            )
        next_waypoint = None
        if not np.all(env.visited):
            next_waypoint = env.spaces.centerline[int(np.argmax(~env.visited))]
        aim = next_waypoint if next_waypoint is not None else target
        direction = np.asarray(aim, dtype=np.float64) - position
        norm = float(np.linalg.norm(direction))
        bend_direction = None
        if norm > 1e-9:
            # expressed in the tip frame so the UI can draw a steering cue
            local = env.pose.rotation().T @ (direction / norm)
            bend_direction = [float(x) for x in local]
        return StateFrame(
            tick=self.tick_count,
            clock=self.clock,
            state=self.state.value,
            position=[float(x) for x in position],
            alpha=float(env.pose.alpha),
            gamma=float(env.pose.gamma),
            body=[[float(x) for x in p] for p in env.body.positions()],
            surface_deltas=deltas,
            target=[float(x) for x in target],
            next_waypoint=(
                [float(x) for x in next_waypoint] if next_waypoint is not None else None
            ),
            bend_direction=bend_direction,
            distance_to_target=float(np.linalg.norm(target - position)),
            wall_clearance=float(np.min(self._last_obs.o_ray) * self.env.ray_length),
        )

    def report(self) -> MetricsReport:
        """Trial metrics against the guidance path; terminal sessions only."""
        if not self.state.terminal:
            raise SessionRejected(
                f"report requires a terminal session, state is {self.state.value}",
                self.state,
            )
        trajectory = np.asarray(self._trajectory)
        dense = resample_path(self.guidance, 500)
        tracking = tracking_error(trajectory, dense)[0]
        curv = (
            curvature(trajectory)[0] if len(trajectory) >= 3 else np.zeros(0)
        )
        succeeded = self.state is SessionState.SUCCEEDED
        return MetricsReport(
            success_rate=1.0 if succeeded else 0.0,
            n_success=int(succeeded),
            n_total=1,
            mean_steps=float(self._forward_steps),
            mean_duration=self._terminal_clock,
            targeting_error=self._min_target_distance,
            tracking_series=tracking,
            tracking_mean=float(tracking.mean()) if len(tracking) else float("nan"),
            tracking_std=float(tracking.std()) if len(tracking) else float("nan"),
            curvature_mean=float(curv.mean()) if len(curv) else float("nan"),
            curvature_std=float(curv.std()) if len(curv) else float("nan"),
        )


def report_to_dict(session: Session, report: MetricsReport) -> dict:
    return {
        "session": session.id,
        "state": session.state.value,
        "success": session.state is SessionState.SUCCEEDED,
        "steps": int(report.mean_steps),
        "duration_s": report.mean_duration,
        "targeting_error_mm": report.targeting_error,
        "tracking_mean_mm": report.tracking_mean,
        "tracking_std_mm": report.tracking_std,
        "curvature_mean": report.curvature_mean,
        "curvature_std": report.curvature_std,
        "guidance": session.guidance_kind,
    }


# -- network layer ---------------------------------------------------------


def build_app(
    scenarios,
    guidance: str = "centerline",
    guidance_path: Optional[np.ndarray] = None,
    tick_hz: int = TICK_HZ,
    realtime: bool = True,
):
    """FastAPI app serving sessions over websockets.

    ``scenarios`` is one Scenario or a dict of them by name. ``realtime``
    paces ticks to wall time; tests disable it to run trials flat out.
    """
    if isinstance(scenarios, Scenario):
        scenarios = {scenarios.name: scenarios}
    if not scenarios:
        raise ConfigError("build_app needs at least one scenario")
    default_name = next(iter(scenarios))

    app = FastAPI(title="cathnav teleoperation service")
    app.state.reports = {}

    @app.get("/scenarios")
    def list_scenarios():
        return {
            "scenarios": [
                {"name": name, "config_hash": sc.config_hash()}
                for name, sc in scenarios.items()
            ]
        }

    @app.get("/reports/{session_id}")
    def get_report(session_id: str):
        if session_id not in app.state.reports:
            raise HTTPException(status_code=404, detail="no report for that session")
        return app.state.reports[session_id]

    @app.websocket("/session")
    async def session_socket(ws: WebSocket):
        await ws.accept()
        name = ws.query_params.get("scenario", default_name)
        seed = int(ws.query_params.get("seed", "0"))
        kind = ws.query_params.get("guidance", guidance)
        if name not in scenarios:
            await ws.send_json(
                {"type": "error", "message": f"unknown scenario {name!r}"}
            )
            await ws.close()
            return
        try:
            session = Session(
                scenarios[name],
                guidance=kind,
                guidance_path=guidance_path,
                tick_hz=tick_hz,
                seed=seed,
            )
        except CathnavError as err:
            await ws.send_json({"type": "error", "message": str(err)})
            await ws.close()
            return

        scenario = scenarios[name]
        await ws.send_json(
            {
                "type": "hello",
                "version": 1,
                "session": session.id,
                "scenario": name,
                "config_hash": scenario.config_hash(),
                "tick_hz": session.tick_hz,
                "time_limit_s": TIME_LIMIT,
                "insertion_cap": INSERTION_SPEED_CAP,
                "guidance_kind": session.guidance_kind,
                "guidance": [[float(x) for x in p] for p in session.guidance],
                "centerline": [[float(x) for x in p] for p in scenario.centerline],
                "mesh": {
                    "vertices": [[float(x) for x in v] for v in scenario.mesh.vertices],
                    "faces": [[int(i) for i in f] for f in scenario.mesh.faces],
                },
                "target_radius": float(scenario.target_region.radius),
                "epsilon": float(scenario.rewards.epsilon),
                "frame": session.frame().to_dict(),
            }
        )

        queue: asyncio.Queue = asyncio.Queue(maxsize=4)
        ticker: Optional[asyncio.Task] = None

        def enqueue(message: dict) -> None:
            # Drop the stalest frame rather than block the simulation.
            while True:
                try:
                    queue.put_nowait(message)
                    return
                except asyncio.QueueFull:
                    try:
                        queue.get_nowait()
                    except asyncio.QueueEmpty:
                        pass

        async def run_trial() -> None:
            while session.state is SessionState.RUNNING:
                frame = session.tick()
                if session.state.terminal:
                    report = session.report()
                    doc = report_to_dict(session, report)
                    app.state.reports[session.id] = doc
                    enqueue(
                        {"type": "terminal", "frame": frame.to_dict(), "report": doc}
                    )
                else:
                    enqueue({"type": "frame", "frame": frame.to_dict()})
                if realtime:
                    await asyncio.sleep(1.0 / session.tick_hz)
                else:
                    await asyncio.sleep(0)

        async def sender() -> None:
            while True:
                await ws.send_json(await queue.get())

        send_task = asyncio.create_task(sender())
        try:
            while True:
                raw = await ws.receive_json()
                kind = raw.get("type")
                try:
                    if kind == "start":
                        session.start()
                        ticker = asyncio.create_task(run_trial())
                        enqueue({"type": "ack", "of": "start"})
                    elif kind == "reset":
                        if ticker is not None:
                            ticker.cancel()
                            ticker = None
                        session.reset()
                        enqueue(
                            {
                                "type": "ack",
                                "of": "reset",
                                "frame": session.frame().to_dict(),
                            }
                        )
                    elif kind == "command":
                        latched = session.command(
                            float(raw.get("bend_alpha", 0.0)),
                            float(raw.get("bend_gamma", 0.0)),
                            float(raw.get("insertion", 0.0)),
                        )
                        enqueue(
                            {"type": "ack", "of": "command", "command": latched.to_dict()}
                        )
                    else:
                        enqueue(
                            {
                                "type": "error",
                                "message": f"unknown message type {kind!r}",
                                "state": session.state.value,
                            }
                        )
                except SessionRejected as err:
                    enqueue(
                        {
                            "type": "error",
                            "message": str(err),
                            "state": err.state.value,
                        }
                    )
        except WebSocketDisconnect:
            pass
        finally:
            if ticker is not None:
                ticker.cancel()
            send_task.cancel()

    return app
