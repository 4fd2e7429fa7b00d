"""Wire protocol for the real-time service: JSON text frames.

Every frame is an envelope {"type": ..., "seq": ..., "payload": {...}}.
Unknown payload fields are ignored on decode (forward compatibility);
encode(decode(x)) is the identity on the known fields. Decoding problems
raise ProtocolError rather than crashing the caller.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


class ProtocolError(ValueError):
    pass


_VERBS = ("start_session", "start_trial", "abort_trial", "next_day")


@dataclass
class InputMessage:
    """Operator command from the client."""

    linear: tuple = (0.0, 0.0, 0.0)
    angular: tuple = (0.0, 0.0, 0.0)
    grip: bool = False
    timestamp: float = 0.0

    TYPE = "input"

    def to_payload(self) -> dict:
        return {
            "linear": list(self.linear),
            "angular": list(self.angular),
            "grip": self.grip,
            "timestamp": self.timestamp,
        }

    @staticmethod
    def from_payload(p: dict) -> "InputMessage":
        return InputMessage(
            linear=_vec3(p, "linear"),
            angular=_vec3(p, "angular"),
            grip=_bool(p, "grip"),
            timestamp=_num(p, "timestamp"),
        )


@dataclass
class ControlMessage:
    """Session flow verb from the client."""

    verb: str = "start_trial"
    params: dict = field(default_factory=dict)

    TYPE = "control"

    def __post_init__(self):
        if self.verb not in _VERBS:
            raise ProtocolError(f"unknown verb {self.verb!r}")

    def to_payload(self) -> dict:
        return {"verb": self.verb, "params": dict(self.params)}

    @staticmethod
    def from_payload(p: dict) -> "ControlMessage":
        verb = p.get("verb")
        if not isinstance(verb, str):
            raise ProtocolError("control message needs a string verb")
        params = p.get("params", {})
        if not isinstance(params, dict):
            raise ProtocolError("params must be an object")
        return ControlMessage(verb=verb, params=params)


@dataclass
class StateUpdate:
    """Server-to-client state snapshot, published at a fixed rate."""

    phase: str = "ready"
    sim_time: float = 0.0
    elapsed: float = 0.0
    ring_position: tuple = (0.0, 0.0, 0.0)
    ring_rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    instrument_position: tuple = (0.0, 0.0, 0.0)
    instrument_rotation: tuple = (1.0, 0.0, 0.0, 0.0)
    color: float = 1.0
    deviation_mm: float = 0.0
    ang_deviation: float = 0.0
    s_star: float = 0.0
    progress: float = 0.0
    grip_closed: bool = False
    holding_ring: bool = False
    trial_index: int = 0
    day: int = 0

    TYPE = "state"

    def to_payload(self) -> dict:
        return {
            "phase": self.phase,
            "sim_time": self.sim_time,
            "elapsed": self.elapsed,
            "ring_position": list(self.ring_position),
            "ring_rotation": list(self.ring_rotation),
            "instrument_position": list(self.instrument_position),
            "instrument_rotation": list(self.instrument_rotation),
            "color": self.color,
            "deviation_mm": self.deviation_mm,
            "ang_deviation": self.ang_deviation,
            "s_star": self.s_star,
            "progress": self.progress,
            "grip_closed": self.grip_closed,
            "holding_ring": self.holding_ring,
            "trial_index": self.trial_index,
            "day": self.day,
        }

    @staticmethod
    def from_payload(p: dict) -> "StateUpdate":
        return StateUpdate(
            phase=_str(p, "phase"),
            sim_time=_num(p, "sim_time"),
            elapsed=_num(p, "elapsed"),
            ring_position=_vec3(p, "ring_position"),
            ring_rotation=_vec4(p, "ring_rotation"),
            instrument_position=_vec3(p, "instrument_position"),
            instrument_rotation=_vec4(p, "instrument_rotation"),
            color=_num(p, "color"),
            deviation_mm=_num(p, "deviation_mm"),
            ang_deviation=_num(p, "ang_deviation"),
            s_star=_num(p, "s_star"),
            progress=_num(p, "progress"),
            grip_closed=_bool(p, "grip_closed"),
            holding_ring=_bool(p, "holding_ring"),
            trial_index=_int(p, "trial_index"),
            day=_int(p, "day"),
        )


@dataclass
class EventMessage:
    """Server-to-client events: trial lifecycle, metrics, errors."""

    kind: str = "info"         # trial_completed | trial_aborted | session | day_complete | error | info
    data: dict = field(default_factory=dict)

    TYPE = "event"

    def to_payload(self) -> dict:
        return {"kind": self.kind, "data": dict(self.data)}

    @staticmethod
    def from_payload(p: dict) -> "EventMessage":
        kind = p.get("kind")
        if not isinstance(kind, str):
            raise ProtocolError("event needs a string kind")
        data = p.get("data", {})
        if not isinstance(data, dict):
            raise ProtocolError("event data must be an object")
        return EventMessage(kind=kind, data=data)


_TYPES = {
    InputMessage.TYPE: InputMessage,
    ControlMessage.TYPE: ControlMessage,
    StateUpdate.TYPE: StateUpdate,
    EventMessage.TYPE: EventMessage,
}


def encode(msg, seq: int) -> str:
    return json.dumps(
        {"type": msg.TYPE, "seq": int(seq), "payload": msg.to_payload()},
        sort_keys=True,
        separators=(",", ":"),
    )


def decode(frame) -> tuple:
    """Decode one frame; returns (message, seq). Raises ProtocolError."""
    if isinstance(frame, (bytes, bytearray)):
        try:
            frame = frame.decode()
        except UnicodeDecodeError as e:
            raise ProtocolError("frame is not valid UTF-8") from e
    try:
        obj = json.loads(frame)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"invalid JSON frame: {e.msg}") from e
    if not isinstance(obj, dict):
        raise ProtocolError("frame must be a JSON object")
    mtype = obj.get("type")
    if mtype not in _TYPES:
        raise ProtocolError(f"unknown message type {mtype!r}")
    seq = obj.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool):
        raise ProtocolError("seq must be an integer")
    payload = obj.get("payload")
    if not isinstance(payload, dict):
        raise ProtocolError("payload must be an object")
    try:
        msg = _TYPES[mtype].from_payload(payload)
    except ProtocolError:
        raise
    except (TypeError, ValueError, KeyError) as e:
        raise ProtocolError(f"malformed {mtype} payload: {e}") from e
    return msg, seq


# -- payload field extraction helpers ---------------------------------------


def _num(p: dict, key: str) -> float:
    v = p.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ProtocolError(f"{key} must be a finite number")
    return float(v)


def _int(p: dict, key: str) -> int:
    v = p.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        raise ProtocolError(f"{key} must be an integer")
    return v


def _bool(p: dict, key: str) -> bool:
    v = p.get(key)
    if not isinstance(v, bool):
        raise ProtocolError(f"{key} must be a boolean")
    return v


def _str(p: dict, key: str) -> str:
    v = p.get(key)
    if not isinstance(v, str):
        raise ProtocolError(f"{key} must be a string")
    return v


def _vecn(p: dict, key: str, n: int) -> tuple:
    v = p.get(key)
    if (
        not isinstance(v, (list, tuple))
        or len(v) != n
        or not all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in v)
    ):
        raise ProtocolError(f"{key} must be a {n}-vector of numbers")
    out = tuple(float(c) for c in v)
    if not all(math.isfinite(c) for c in out):
        raise ProtocolError(f"{key} must be finite")
    return out


def _vec3(p: dict, key: str) -> tuple:
    return _vecn(p, key, 3)


def _vec4(p: dict, key: str) -> tuple:
    return _vecn(p, key, 4)
