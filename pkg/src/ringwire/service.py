"""Real-time WebSocket service bridging the trial engine to a browser UI.

Three cooperating asyncio tasks with explicit contracts:

1. the simulation task is the single writer of engine state; it paces the
   fixed-step engine against the monotonic clock (optionally time-scaled)
   and drains a bounded command queue each iteration;
2. the network reader decodes frames and feeds that queue, dropping the
   oldest entry when full so the newest command always gets through;
3. the publisher sends StateUpdates at a fixed rate, always built from
   the newest engine snapshot, with a single send in flight, so a slow
   client drops intermediate frames instead of queueing them.

One trainee at a time; served trials persist logs in exactly the headless
format, so any served trial's command stream replays bit-identically in
the headless engine.
"""

from __future__ import annotations

import asyncio
import http
import json
import time
from dataclasses import dataclass, field as dc_field

from .experiment import build_session_plan
from .forcefield import FieldMode, ForceFieldConfig
from .geometry import WirePath, build_canonical_path
from .logio import TrialRecord, path_hash, write_commands, write_trial
from .metrics import MetricsConfig, compute_trial_metrics, quartiles
from .protocol import (
    ControlMessage,
    EventMessage,
    InputMessage,
    ProtocolError,
    StateUpdate,
    decode,
    encode,
)
from .simulator import OperatorCommand, SimConfig, TrialEngine, TrialPhase

CLOSE_BUSY = 4000            # a trainee is already connected
CLOSE_PROTOCOL_ERROR = 4002  # malformed frame

_QUEUE_MAX = 128


@dataclass
class SessionConfig:
    subject: str = "S01"
    group: FieldMode = FieldMode.NULL
    log_dir: str = "service-logs"
    publish_hz: float = 60.0
    time_scale: float = 1.0       # >1 accelerates sim time (tests only)
    start_day: int = 1
    field: dict = dc_field(default_factory=dict)
    sim: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if isinstance(self.group, str):
            self.group = FieldMode.from_str(self.group)
        if self.publish_hz <= 0 or self.time_scale <= 0:
            raise ValueError("publish_hz and time_scale must be positive")


class TrainingService:
    """Session state machine plus the three service tasks."""

    def __init__(self, cfg: SessionConfig, path: WirePath | None = None):
        self.cfg = cfg
        self.path = path or build_canonical_path()
        self._path_json = self.path.to_json()
        self._phash = path_hash(self.path)
        self.plan = None
        self.day_pos = 0           # index into plan.days
        self.trial_pos = 0         # index into the current day's trial list
        self.engine: TrialEngine | None = None
        self.session_phase = "idle"  # idle|ready|running|day_complete|session_complete
        self._day_metrics: list[dict] = []  # completed-trial metrics for the current day
        self._commands: asyncio.Queue = asyncio.Queue(maxsize=_QUEUE_MAX)
        self._client = None
        self._seq = 0
        self._wall_anchor = 0.0    # monotonic time when the current trial's engine started
        self._stop = asyncio.Event()

    # -- helpers ------------------------------------------------------------

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    async def _send(self, msg):
        if self._client is None:
            return
        try:
            await self._client.send(encode(msg, self._next_seq()))
        except Exception:
            pass  # disconnects are handled by the reader

    async def _send_event(self, kind: str, **data):
        await self._send(EventMessage(kind=kind, data=data))

    def _current_day(self):
        return self.plan.days[self.day_pos]

    def _current_trial(self):
        day, trials = self._current_day()
        return day, trials[self.trial_pos]

    def _day_quartiles(self) -> dict:
        """Per-metric (q25, q50, q75) over the day's completed trials."""
        out: dict = {}
        for name in ("time", "tpe", "rpe", "cet"):
            vals = [m[name] for m in self._day_metrics if name in m]
            if vals:
                out[name] = list(quartiles(vals))
        return out

    # -- control verbs ------------------------------------------------------

    async def handle_control(self, msg: ControlMessage):
        verb = msg.verb
        if verb == "start_session":
            if self.session_phase != "idle":
                await self._send_event("error", code="bad_phase", message="session already started")
                return
            self.plan = build_session_plan(self.cfg.subject, self.cfg.group)
            self.day_pos = max(0, min(len(self.plan.days) - 1, self.cfg.start_day - 1))
            self.trial_pos = 0
            self._day_metrics = []
            self.session_phase = "ready"
            day, (trial_index, mode) = self._current_trial()
            await self._send_event(
                "session",
                subject=self.cfg.subject,
                group=self.cfg.group.value,
                day=day,
                trial_index=trial_index,
                field_mode=mode.value,
                path_hash=self._phash,
            )
        elif verb == "start_trial":
            if self.session_phase != "ready":
                await self._send_event("error", code="bad_phase", message=f"cannot start a trial while {self.session_phase}")
                return
            day, (trial_index, mode) = self._current_trial()
            field_cfg = ForceFieldConfig(**{**self.cfg.field, "mode": mode})
            sim_cfg = SimConfig(**self.cfg.sim)
            self.engine = TrialEngine(self.path, field_cfg, sim_cfg)
            self._drain_commands()
            self._wall_anchor = time.monotonic()
            self.session_phase = "running"
            await self._send_event("trial_started", day=day, trial_index=trial_index, field_mode=mode.value)
        elif verb == "abort_trial":
            if self.session_phase != "running" or self.engine is None:
                await self._send_event("error", code="bad_phase", message="no running trial to abort")
                return
            self.engine.trial.phase = TrialPhase.ABORTED
            self.engine.trial.abort_reason = "operator abort"
            await self._finish_trial()
        elif verb == "next_day":
            if self.session_phase != "day_complete":
                await self._send_event("error", code="bad_phase", message="day not complete")
                return
            self.day_pos += 1
            self.trial_pos = 0
            self._day_metrics = []
            self.session_phase = "ready"
            day, (trial_index, mode) = self._current_trial()
            await self._send_event("session", day=day, trial_index=trial_index, field_mode=mode.value)

    def _drain_commands(self):
        while not self._commands.empty():
            self._commands.get_nowait()

    # -- trial lifecycle ----------------------------------------------------

    async def _finish_trial(self):
        engine = self.engine
        day, (trial_index, mode) = self._current_trial()
        status = "completed" if engine.trial.phase is TrialPhase.COMPLETED else "aborted"
        rec = TrialRecord(
            trial_id=f"{self.cfg.subject}_d{day}_t{trial_index:02d}",
            subject=self.cfg.subject,
            group=self.cfg.group.value,
            day=day,
            trial_index=trial_index,
            field_mode=mode.value,
            field_cfg=engine.field_cfg,
            sim_cfg=engine.cfg,
            seed=0,
            status=status,
            abort_reason=engine.trial.abort_reason,
            path_hash=self._phash,
            events=engine.trial.events,
            samples=engine.trial.samples,
        )
        if status == "completed" and len(rec.samples) >= 2:
            rec.metrics = compute_trial_metrics(rec.samples, MetricsConfig())
        sub_dir = f"{self.cfg.log_dir}/{self.cfg.subject}"
        write_trial(rec, sub_dir)
        write_commands(rec, engine.command_log, sub_dir)

        if status == "completed":
            if rec.metrics is not None:
                self._day_metrics.append(rec.metrics.to_dict())
            await self._send_event(
                "trial_completed",
                day=day,
                trial_index=trial_index,
                metrics=rec.metrics.to_dict() if rec.metrics else None,
            )
        else:
            await self._send_event("trial_aborted", day=day, trial_index=trial_index, reason=rec.abort_reason)

        self.engine = None
        _, trials = self._current_day()
        self.trial_pos += 1
        if self.trial_pos >= len(trials):
            if self.day_pos + 1 >= len(self.plan.days):
                self.session_phase = "session_complete"
                await self._send_event("session_complete", subject=self.cfg.subject)
            else:
                self.session_phase = "day_complete"
                await self._send_event("day_complete", day=day, quartiles=self._day_quartiles())
        else:
            self.session_phase = "ready"

    # -- tasks --------------------------------------------------------------

    async def sim_task(self):
        """Single writer of engine state; paces sim time to the wall clock."""
        while not self._stop.is_set():
            engine = self.engine
            if engine is None or self.session_phase != "running":
                await asyncio.sleep(0.005)
                continue
            while not self._commands.empty():
                msg = self._commands.get_nowait()
                engine.apply_command(
                    OperatorCommand(
                        linear=msg.linear,
                        angular=msg.angular,
                        grip_closed=msg.grip,
                        timestamp=msg.timestamp,
                    )
                )
            wall = (time.monotonic() - self._wall_anchor) * self.cfg.time_scale
            target = int(wall / engine.cfg.dt)
            # bounded catch-up so one stall cannot freeze the loop
            budget = 5000
            while engine.step_count < target and budget > 0:
                engine.step()
                budget -= 1
                if engine.trial.phase in (TrialPhase.COMPLETED, TrialPhase.ABORTED):
                    break
            if engine.trial.phase in (TrialPhase.COMPLETED, TrialPhase.ABORTED):
                await self._finish_trial()
                continue
            await asyncio.sleep(0.002)

    async def publish_task(self):
        period = 1.0 / self.cfg.publish_hz
        while not self._stop.is_set():
            engine = self.engine
            if self._client is not None and engine is not None:
                snap = engine.snapshot()
                day, (trial_index, _mode) = self._current_trial()
                update = StateUpdate(
                    phase=snap.phase.value,
                    sim_time=snap.sim_time,
                    elapsed=snap.elapsed,
                    ring_position=snap.ring_position,
                    ring_rotation=snap.ring_rotation,
                    instrument_position=snap.instrument_position,
                    instrument_rotation=snap.instrument_rotation,
                    color=snap.color,
                    deviation_mm=snap.deviation * 1000.0,
                    ang_deviation=snap.ang_deviation,
                    s_star=snap.s_star,
                    progress=snap.progress,
                    grip_closed=snap.grip_closed,
                    holding_ring=snap.holding_ring,
                    trial_index=trial_index,
                    day=day,
                )
                await self._send(update)
            await asyncio.sleep(period)

    async def handler(self, connection):
        if self._client is not None:
            await connection.close(CLOSE_BUSY, "a trainee is already connected")
            return
        self._client = connection
        try:
            async for frame in connection:
                try:
                    msg, _seq = decode(frame)
                except ProtocolError as e:
                    await self._send_event("error", code="protocol", message=str(e))
                    await connection.close(CLOSE_PROTOCOL_ERROR, str(e)[:100])
                    break
                if isinstance(msg, InputMessage):
                    if self._commands.full():
                        self._commands.get_nowait()  # drop the oldest
                    self._commands.put_nowait(msg)
                elif isinstance(msg, ControlMessage):
                    await self.handle_control(msg)
                else:
                    await self._send_event("error", code="unexpected", message=f"unexpected {msg.TYPE} message")
        finally:
            self._client = None
            if self.session_phase == "running" and self.engine is not None:
                self.engine.trial.phase = TrialPhase.ABORTED
                self.engine.trial.abort_reason = "client disconnected"
                await self._finish_trial()

    def process_request(self, connection, request):
        """HTTP hook: serves the wire geometry as JSON; WebSocket otherwise."""
        if request.path == "/path.json":
            response = connection.respond(http.HTTPStatus.OK, self._path_json)
            del response.headers["Content-Type"]
            response.headers["Content-Type"] = "application/json"
            return response
        if request.path == "/healthz":
            return connection.respond(http.HTTPStatus.OK, json.dumps({"status": "ok"}))
        return None  # proceed with the WebSocket handshake

    def stop(self):
        self._stop.set()


async def serve_async(port: int, cfg: SessionConfig, host: str = "127.0.0.1"):
    """Run the service until cancelled; returns only on stop()."""
    from websockets.asyncio.server import serve as ws_serve

    service = TrainingService(cfg)
    async with ws_serve(service.handler, host, port, process_request=service.process_request):
        tasks = [
            asyncio.create_task(service.sim_task()),
            asyncio.create_task(service.publish_task()),
        ]
        try:
            await service._stop.wait()
        finally:
            for t in tasks:
                t.cancel()
            await asyncio.gather(*tasks, return_exceptions=True)


def serve(port: int, cfg: SessionConfig, host: str = "127.0.0.1"):
    """Blocking entry point for the CLI."""
    try:
        asyncio.run(serve_async(port, cfg, host=host))
    except KeyboardInterrupt:
        pass
