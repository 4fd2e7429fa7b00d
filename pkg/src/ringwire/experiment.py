"""Study protocol engine: group assignment, the 5-day schedule, synthetic
operators, and the headless experiment driver.

The schedule per subject is 100 trials over 5 days: day 1 opens with 5
null-field baseline trials then 15 trials in the assigned field, days 2-4
are 20 assigned-field trials each, and day 5 is 20 null-field evaluation
trials.

Synthetic operators are pursuit controllers with Gaussian motor noise and
a reaction lag; noise shrinks by a fixed factor after every completed
trial (floored at 20% of its initial level), which stands in for novice
learning. Everything is driven by a master seed fanned out through a
hash-based counter scheme, so runs are reproducible and adding a subject
never perturbs the others' random streams.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import deque
from dataclasses import dataclass, field as dc_field, replace

from .forcefield import FieldMode, ForceFieldConfig
from .geometry import WirePath, build_canonical_path
from .logio import TrialRecord, path_hash, write_commands, write_trial
from .simulator import OperatorCommand, SimConfig, TrialEngine, TrialPhase

_GROUP_MODES = (FieldMode.CONVERGENT, FieldMode.DIVERGENT, FieldMode.NULL)

BASELINE_TRIALS = 5      # day-1 null trials before the assigned field
TRIALS_PER_DAY = 20
TRAINING_DAYS = (2, 3, 4)
FINAL_DAY = 5


# ---------------------------------------------------------------------------
# group assignment and schedule
# ---------------------------------------------------------------------------


def pseudo_randomize(subject_ids, seed: int) -> dict:
    """Balanced block randomization: blocks of 3, one subject per group.

    Group sizes differ by at most 1; the assignment is a pure function of
    the subject order and the seed.
    """
    subjects = list(subject_ids)
    if len(subjects) < 3:
        raise ValueError("need at least 3 subjects")
    rng = random.Random(seed)
    assignment = {}
    for start in range(0, len(subjects), 3):
        block = subjects[start:start + 3]
        modes = list(_GROUP_MODES)
        rng.shuffle(modes)
        for sid, mode in zip(block, modes):
            assignment[sid] = mode
    return assignment


@dataclass
class SessionPlan:
    subject: str
    group: FieldMode
    # (day index, [(trial index, active field), ...]) per day
    days: list

    @property
    def total_trials(self) -> int:
        return sum(len(trials) for _, trials in self.days)


def build_session_plan(subject: str, group: FieldMode) -> SessionPlan:
    days = []
    day1 = [(i, FieldMode.NULL) for i in range(1, BASELINE_TRIALS + 1)]
    day1 += [(i, group) for i in range(BASELINE_TRIALS + 1, TRIALS_PER_DAY + 1)]
    days.append((1, day1))
    for day in TRAINING_DAYS:
        days.append((day, [(i, group) for i in range(1, TRIALS_PER_DAY + 1)]))
    days.append((FINAL_DAY, [(i, FieldMode.NULL) for i in range(1, TRIALS_PER_DAY + 1)]))
    return SessionPlan(subject=subject, group=group, days=days)


# ---------------------------------------------------------------------------
# synthetic operator
# ---------------------------------------------------------------------------


@dataclass
class SubjectModel:
    gain: float = 14.0            # pursuit gain, 1/s
    rot_gain: float = 7.0         # orientation correction gain, 1/s
    lookahead: float = 0.006      # pursuit target lead along the path, m
    noise_sd_lin: float = 0.03    # motor noise on velocity commands, m/s
    noise_sd_rot: float = 0.5     # motor noise on angular commands, rad/s
    reaction_lag: float = 0.06    # command issue delay, s
    learning_rate: float = 0.05   # noise decay factor per completed trial
    noise_floor: float = 0.2      # fraction of initial noise retained at plateau
    command_hz: float = 50.0      # operator command rate
    # assistance-dependent skill: learning accrued per completed trial is
    # scaled down when a convergent field did part of the work, and scaled
    # up under divergent error augmentation
    assist_sensitivity: float = 0.75
    augment_boost: float = 1.25
    seed: int = 0

    def __post_init__(self):
        if self.noise_sd_lin < 0 or self.noise_sd_rot < 0:
            raise ValueError("noise sd must be non-negative")
        if not 0.0 <= self.learning_rate < 1.0:
            raise ValueError("learning rate must be in [0, 1)")
        if self.gain < 0 or self.rot_gain < 0:
            raise ValueError("gains must be non-negative")
        if not 0.0 <= self.assist_sensitivity <= 1.0:
            raise ValueError("assist_sensitivity must be in [0, 1]")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def synthetic_command(model: SubjectModel, snap, path: WirePath, rng, noise_scale: float = 1.0) -> OperatorCommand:
    """Un-lagged pursuit command toward a lookahead target on the path.

    Velocity = gain * (target point - ring position) + Gaussian noise;
    angular rate = rot_gain * rotation error to the lookahead frame +
    Gaussian noise. The grip stays closed throughout.
    """
    if not snap.holding_ring:
        # not holding: stay put and (re)close the grip at the ring
        return OperatorCommand(grip_closed=True, timestamp=snap.sim_time)
    s_t = min(snap.s_star + model.lookahead, path.length)
    target = path.point_at_s(s_t)
    rx, ry, rz = snap.ring_position
    sd_l = model.noise_sd_lin * noise_scale
    lin = (
        model.gain * (float(target[0]) - rx) + rng.gauss(0.0, sd_l),
        model.gain * (float(target[1]) - ry) + rng.gauss(0.0, sd_l),
        model.gain * (float(target[2]) - rz) + rng.gauss(0.0, sd_l),
    )
    # rotation error to the lookahead frame, as an axis-angle vector
    dw, dx, dy, dz = path.frame_at_s(s_t)
    qw, qx, qy, qz = snap.ring_rotation
    # rel = desired * conj(ring)
    rw = dw * qw + dx * qx + dy * qy + dz * qz
    ex = -dw * qx + dx * qw - dy * qz + dz * qy
    ey = -dw * qy + dx * qz + dy * qw - dz * qx
    ez = -dw * qz - dx * qy + dy * qx + dz * qw
    vn = math.sqrt(ex * ex + ey * ey + ez * ez)
    ang = 2.0 * math.atan2(vn, abs(rw))
    if vn > 1e-12:
        k = (ang if rw >= 0.0 else -ang) / vn
    else:
        k = 0.0
    sd_r = model.noise_sd_rot * noise_scale
    angular = (
        model.rot_gain * k * ex + rng.gauss(0.0, sd_r),
        model.rot_gain * k * ey + rng.gauss(0.0, sd_r),
        model.rot_gain * k * ez + rng.gauss(0.0, sd_r),
    )
    return OperatorCommand(linear=lin, angular=angular, grip_closed=True, timestamp=snap.sim_time)


class SyntheticOperator:
    """Stateful wrapper: reaction lag, seeded noise, per-trial noise decay."""

    def __init__(self, model: SubjectModel, path: WirePath):
        self.model = model
        self.path = path
        self.trials_completed = 0
        self.skill = 0.0           # effective practice accrued across trials
        self._rng = random.Random(model.seed)
        self._lag_ticks = max(0, int(round(model.reaction_lag * model.command_hz)))
        self._pending: deque = deque()

    @property
    def noise_scale(self) -> float:
        decayed = (1.0 - self.model.learning_rate) ** self.skill
        return max(self.model.noise_floor, decayed)

    def begin_trial(self, trial_seed: int):
        self._rng = random.Random(trial_seed)
        self._pending = deque()

    def command(self, snap) -> OperatorCommand:
        cmd = synthetic_command(self.model, snap, self.path, self._rng, self.noise_scale)
        self._pending.append(cmd)
        if len(self._pending) > self._lag_ticks:
            return self._pending.popleft()
        # reaction lag not yet elapsed: hold position, grip closed
        return OperatorCommand(grip_closed=True, timestamp=snap.sim_time)

    def notify_completed(self, mode: FieldMode = FieldMode.NULL):
        self.trials_completed += 1
        if mode is FieldMode.CONVERGENT:
            self.skill += 1.0 - self.model.assist_sensitivity
        elif mode is FieldMode.DIVERGENT:
            self.skill += self.model.augment_boost
        else:
            self.skill += 1.0


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    subjects: int = 12
    master_seed: int = 2024
    cf_policy: object = "derive"          # "derive" or a fixed positive float
    output_dir: str = "experiment-out"
    dunn_adjustment: str = "bonferroni"
    field: dict = dc_field(default_factory=dict)     # ForceFieldConfig overrides (mode set per trial)
    sim: dict = dc_field(default_factory=dict)       # SimConfig overrides
    operator: dict = dc_field(default_factory=dict)  # SubjectModel overrides (seed set per subject)

    def __post_init__(self):
        if self.subjects < 3:
            raise ValueError("need at least 3 subjects")
        if self.cf_policy != "derive":
            if not isinstance(self.cf_policy, (int, float)) or self.cf_policy <= 0:
                raise ValueError('cf_policy must be "derive" or a positive number')
        if self.dunn_adjustment not in ("bonferroni", "none"):
            raise ValueError("dunn_adjustment must be 'bonferroni' or 'none'")
        # fail fast on bad overrides
        ForceFieldConfig(**self.field)
        SimConfig(**self.sim)
        SubjectModel(**self.operator)

    def to_dict(self) -> dict:
        # output_dir is a runtime location, not an experiment parameter;
        # leaving it out keeps the persisted config identical across runs.
        return {
            "subjects": self.subjects,
            "master_seed": self.master_seed,
            "cf_policy": self.cf_policy,
            "dunn_adjustment": self.dunn_adjustment,
            "field": dict(self.field),
            "sim": dict(self.sim),
            "operator": dict(self.operator),
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        return ExperimentConfig(**d)

    @staticmethod
    def from_json_file(fname: str) -> "ExperimentConfig":
        with open(fname) as fh:
            return ExperimentConfig.from_dict(json.load(fh))


def derive_seed(master_seed: int, *labels) -> int:
    """Splittable seed derivation: hash of the master seed and a label path."""
    key = ":".join([str(master_seed), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


def subject_model_for(cfg: ExperimentConfig, subject: str) -> SubjectModel:
    """Base model with mild per-subject heterogeneity from the subject seed."""
    seed = derive_seed(cfg.master_seed, "subject", subject)
    rng = random.Random(seed)
    base = SubjectModel(**cfg.operator)
    return replace(
        base,
        gain=base.gain * rng.uniform(0.85, 1.2),
        rot_gain=base.rot_gain * rng.uniform(0.85, 1.2),
        noise_sd_lin=base.noise_sd_lin * rng.uniform(0.7, 1.4),
        noise_sd_rot=base.noise_sd_rot * rng.uniform(0.7, 1.4),
        reaction_lag=base.reaction_lag * rng.uniform(0.8, 1.2),
        learning_rate=min(0.99, base.learning_rate * rng.uniform(0.8, 1.2)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# trial and experiment drivers
# ---------------------------------------------------------------------------


def run_trial(
    path: WirePath,
    mode: FieldMode,
    operator: SyntheticOperator,
    trial_seed: int,
    field_overrides: dict | None = None,
    sim_overrides: dict | None = None,
):
    """Run one closed-loop synthetic trial; returns (engine, status)."""
    field_cfg = ForceFieldConfig(**{**(field_overrides or {}), "mode": mode})
    sim_cfg = SimConfig(**(sim_overrides or {}))
    engine = TrialEngine(path, field_cfg, sim_cfg)
    operator.begin_trial(trial_seed)
    steps_per_cmd = max(1, int(round(1.0 / (operator.model.command_hz * sim_cfg.dt))))
    while engine.trial.phase in (TrialPhase.READY, TrialPhase.RUNNING):
        if engine.step_count % steps_per_cmd == 0:
            engine.apply_command(operator.command(engine.snapshot()))
        engine.step()
    if engine.trial.phase is TrialPhase.COMPLETED:
        operator.notify_completed(mode)
    return engine


def run_subject(cfg: ExperimentConfig, subject: str, group: FieldMode, path: WirePath) -> list:
    """Simulate one subject's full 5-day plan; returns TrialRecords (no metrics yet)."""
    plan = build_session_plan(subject, group)
    model = subject_model_for(cfg, subject)
    operator = SyntheticOperator(model, path)
    phash = path_hash(path)
    records = []
    for day, trials in plan.days:
        for trial_index, mode in trials:
            trial_seed = derive_seed(cfg.master_seed, "trial", subject, day, trial_index)
            engine = run_trial(path, mode, operator, trial_seed, cfg.field, cfg.sim)
            status = "completed" if engine.trial.phase is TrialPhase.COMPLETED else "aborted"
            rec = TrialRecord(
                trial_id=f"{subject}_d{day}_t{trial_index:02d}",
                subject=subject,
                group=group.value,
                day=day,
                trial_index=trial_index,
                field_mode=mode.value,
                field_cfg=engine.field_cfg,
                sim_cfg=engine.cfg,
                seed=trial_seed,
                status=status,
                abort_reason=engine.trial.abort_reason,
                path_hash=phash,
                events=engine.trial.events,
                samples=engine.trial.samples,
            )
            records.append((rec, engine.command_log))
    return records


def run_experiment(cfg: ExperimentConfig):
    """Run the full multi-subject study and persist logs plus the report.

    Returns the ExperimentReport. Deterministic under cfg.master_seed: the
    subject loop is an ordered fold, per-subject streams are independent,
    and all output serialization is key-sorted.
    """
    import os

    from .report import build_report, emit_report

    path = build_canonical_path()
    subjects = [f"S{i:02d}" for i in range(1, cfg.subjects + 1)]
    assignment = pseudo_randomize(subjects, derive_seed(cfg.master_seed, "groups"))

    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")

    log_dir = os.path.join(cfg.output_dir, "logs")
    all_records = []
    for subject in subjects:
        sub_records = run_subject(cfg, subject, assignment[subject], path)
        sub_dir = os.path.join(log_dir, subject)
        for rec, _cmds in sub_records:
            all_records.append(rec)
        _attach_and_write(cfg, sub_dir, sub_records)

    report = build_report(all_records, cf_policy=cfg.cf_policy, dunn_adjustment=cfg.dunn_adjustment)
    emit_report(report, os.path.join(cfg.output_dir, "report"))
    return report


def _attach_and_write(cfg: ExperimentConfig, sub_dir: str, sub_records):
    """Compute per-trial metrics and persist this subject's logs."""
    from .metrics import MetricsConfig, compute_trial_metrics
    # the log stores metrics under the provisional cf; the report always
    # recomputes CET under the experiment-level cf policy
    mcfg = MetricsConfig(cf=cfg.cf_policy if cfg.cf_policy != "derive" else 17.0)
    for rec, cmds in sub_records:
        if rec.status == "completed" and len(rec.samples) >= 2:
            rec.metrics = compute_trial_metrics(rec.samples, mcfg)
        write_trial(rec, sub_dir)
        write_commands(rec, cmds, sub_dir)
