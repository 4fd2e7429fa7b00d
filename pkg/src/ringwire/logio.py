"""Trial log persistence.

One JSON Lines file per trial: a header line (trial metadata, field
config, path hash, computed metrics) followed by one line per 30 Hz
PoseSample. Command streams go to a sibling ``*.cmd.jsonl`` file in the
same envelope so any trial can be replayed headless.

All serialization uses sorted keys and repr-roundtrip floats, so a
rewrite of identical data is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from .forcefield import ForceFieldConfig
from .geometry import WirePath
from .metrics import TrialMetrics
from .simulator import OperatorCommand, PoseSample, SimConfig


class LogFormatError(ValueError):
    """Malformed log file; message carries file name and line number."""


@dataclass
class TrialRecord:
    trial_id: str
    subject: str
    group: str
    day: int
    trial_index: int
    field_mode: str          # active field for this trial (baseline may differ from group)
    field_cfg: ForceFieldConfig
    sim_cfg: SimConfig
    seed: int
    status: str              # "completed" | "aborted"
    abort_reason: str | None
    path_hash: str
    events: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    metrics: TrialMetrics | None = None


def path_hash(path: WirePath) -> str:
    return hashlib.sha256(path.to_json().encode()).hexdigest()[:16]


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sample_to_dict(s: PoseSample) -> dict:
    return {
        "kind": "sample",
        "t": s.t,
        "p": list(s.position),
        "q": list(s.rotation),
        "v": list(s.linear_vel),
        "w": list(s.angular_vel),
        "grip": s.grip_closed,
        "s": s.s_star,
        "dev": s.deviation,
        "ang": s.ang_deviation,
        "f": list(s.force),
        "tau": list(s.torque),
    }


def _sample_from_dict(d: dict) -> PoseSample:
    return PoseSample(
        t=d["t"],
        position=tuple(d["p"]),
        rotation=tuple(d["q"]),
        linear_vel=tuple(d["v"]),
        angular_vel=tuple(d["w"]),
        grip_closed=d["grip"],
        s_star=d["s"],
        deviation=d["dev"],
        ang_deviation=d["ang"],
        force=tuple(d["f"]),
        torque=tuple(d["tau"]),
    )


def _header_dict(rec: TrialRecord) -> dict:
    return {
        "kind": "header",
        "trial_id": rec.trial_id,
        "subject": rec.subject,
        "group": rec.group,
        "day": rec.day,
        "trial_index": rec.trial_index,
        "field_mode": rec.field_mode,
        "field_cfg": rec.field_cfg.to_dict(),
        "sim_cfg": rec.sim_cfg.to_dict(),
        "seed": rec.seed,
        "status": rec.status,
        "abort_reason": rec.abort_reason,
        "path_hash": rec.path_hash,
        "events": rec.events,
        "metrics": rec.metrics.to_dict() if rec.metrics else None,
    }


def write_trial(rec: TrialRecord, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    fname = os.path.join(directory, f"{rec.trial_id}.jsonl")
    with open(fname, "w") as fh:
        fh.write(_dump(_header_dict(rec)) + "\n")
        for s in rec.samples:
            fh.write(_dump(_sample_to_dict(s)) + "\n")
    return fname


def write_commands(rec: TrialRecord, command_log, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    fname = os.path.join(directory, f"{rec.trial_id}.cmd.jsonl")
    with open(fname, "w") as fh:
        header = _header_dict(rec)
        header["kind"] = "cmd-header"
        header["metrics"] = None
        fh.write(_dump(header) + "\n")
        for step, cmd in command_log:
            fh.write(
                _dump(
                    {
                        "kind": "cmd",
                        "step": step,
                        "lin": list(cmd.linear),
                        "ang": list(cmd.angular),
                        "grip": cmd.grip_closed,
                        "ts": cmd.timestamp,
                    }
                )
                + "\n"
            )
    return fname


def read_trial(fname: str) -> TrialRecord:
    rec = None
    with open(fname) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise LogFormatError(f"{fname}:{lineno}: invalid JSON ({e.msg})") from e
            kind = d.get("kind")
            if lineno == 1:
                if kind != "header":
                    raise LogFormatError(f"{fname}:1: first line must be a header")
                try:
                    rec = TrialRecord(
                        trial_id=d["trial_id"],
                        subject=d["subject"],
                        group=d["group"],
                        day=d["day"],
                        trial_index=d["trial_index"],
                        field_mode=d["field_mode"],
                        field_cfg=ForceFieldConfig.from_dict(d["field_cfg"]),
                        sim_cfg=SimConfig.from_dict(d["sim_cfg"]),
                        seed=d["seed"],
                        status=d["status"],
                        abort_reason=d["abort_reason"],
                        path_hash=d["path_hash"],
                        events=d["events"],
                        metrics=TrialMetrics.from_dict(d["metrics"]) if d["metrics"] else None,
                    )
                except KeyError as e:
                    raise LogFormatError(f"{fname}:1: header missing field {e}") from e
            else:
                if kind != "sample":
                    raise LogFormatError(f"{fname}:{lineno}: expected a sample line")
                try:
                    rec.samples.append(_sample_from_dict(d))
                except KeyError as e:
                    raise LogFormatError(f"{fname}:{lineno}: sample missing field {e}") from e
    if rec is None:
        raise LogFormatError(f"{fname}: empty log file")
    return rec


def read_commands(fname: str):
    """Returns (header_dict, [(step, OperatorCommand), ...])."""
    header = None
    commands = []
    with open(fname) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as e:
                raise LogFormatError(f"{fname}:{lineno}: invalid JSON ({e.msg})") from e
            if lineno == 1:
                if d.get("kind") != "cmd-header":
                    raise LogFormatError(f"{fname}:1: first line must be a cmd-header")
                header = d
            else:
                if d.get("kind") != "cmd":
                    raise LogFormatError(f"{fname}:{lineno}: expected a cmd line")
                try:
                    commands.append(
                        (
                            d["step"],
                            OperatorCommand(
                                linear=tuple(d["lin"]),
                                angular=tuple(d["ang"]),
                                grip_closed=d["grip"],
                                timestamp=d["ts"],
                            ),
                        )
                    )
                except KeyError as e:
                    raise LogFormatError(f"{fname}:{lineno}: cmd missing field {e}") from e
    if header is None:
        raise LogFormatError(f"{fname}: empty command log")
    return header, commands


def load_trials(directory: str) -> list:
    """Load every trial log under a directory tree, sorted by file path."""
    records = []
    for root, _dirs, files in sorted(os.walk(directory)):
        for name in sorted(files):
            if name.endswith(".jsonl") and not name.endswith(".cmd.jsonl"):
                records.append(read_trial(os.path.join(root, name)))
    return records
