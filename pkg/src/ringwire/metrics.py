"""Per-trial and per-session performance metrics.

Time is trial duration in seconds. TPE and RPE are arc-length-weighted
error integrals along the reference wire: at each logged sample the
deviation is weighted by the reference arc length traversed since the
previous sample, giving mm^2 for the translational integral and rad*mm
for the rotational one. CET combines them with the speed-accuracy
weighting CET = Time * (RPE + cf * TPE); the weighting factor cf is the
ratio of average RPE to average TPE over a trial set.

Internally the simulator works in meters; this module is the single
point where deviations and arc lengths convert to millimeters.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

_MM = 1000.0


class InvalidTrialError(ValueError):
    pass


@dataclass
class MetricsConfig:
    cf: float = 17.0  # rad/mm

    def __post_init__(self):
        if self.cf <= 0:
            raise ValueError("cf must be positive")


@dataclass
class TrialMetrics:
    time: float  # s
    tpe: float   # mm^2
    rpe: float   # rad*mm
    cet: float   # rad*mm*s

    def to_dict(self) -> dict:
        return {"time": self.time, "tpe": self.tpe, "rpe": self.rpe, "cet": self.cet}

    @staticmethod
    def from_dict(d: dict) -> "TrialMetrics":
        return TrialMetrics(d["time"], d["tpe"], d["rpe"], d["cet"])


def trial_time(samples) -> float:
    """Trial duration: last sample time minus first."""
    if len(samples) < 2:
        raise InvalidTrialError("need at least 2 samples")
    return samples[-1].t - samples[0].t


def _arc_weighted_sum(samples, values_mm_or_rad) -> float:
    total = 0.0
    traversed = 0.0
    for i in range(1, len(samples)):
        ds = abs(samples[i].s_star - samples[i - 1].s_star) * _MM
        traversed += ds
        total += values_mm_or_rad[i] * ds
    if traversed == 0.0:
        warnings.warn("degenerate trial: no reference arc length traversed", stacklevel=3)
        return 0.0
    return total


def translational_path_error(samples) -> float:
    """TPE in mm^2: sum of deviation (mm) times arc length traversed (mm)."""
    if len(samples) < 2:
        raise InvalidTrialError("need at least 2 samples")
    devs = [s.deviation * _MM for s in samples]
    return _arc_weighted_sum(samples, devs)


def rotational_path_error(samples) -> float:
    """RPE in rad*mm: sum of orientation error (rad) times arc length (mm)."""
    if len(samples) < 2:
        raise InvalidTrialError("need at least 2 samples")
    angs = [s.ang_deviation for s in samples]
    return _arc_weighted_sum(samples, angs)


def combined_error_time(time: float, tpe: float, rpe: float, cfg: MetricsConfig) -> float:
    """CET = Time * (RPE + cf * TPE), rad*mm*s."""
    if min(time, tpe, rpe) < 0:
        raise ValueError("inputs must be non-negative")
    return time * (rpe + cfg.cf * tpe)


def compute_trial_metrics(samples, cfg: MetricsConfig) -> TrialMetrics:
    t = trial_time(samples)
    tpe = translational_path_error(samples)
    rpe = rotational_path_error(samples)
    return TrialMetrics(time=t, tpe=tpe, rpe=rpe, cet=combined_error_time(t, tpe, rpe, cfg))


class UndefinedCfError(ValueError):
    pass


def derive_cf(trials) -> float:
    """cf = mean(RPE) / mean(TPE) over all supplied trials, rad/mm."""
    trials = list(trials)
    if not trials:
        raise UndefinedCfError("no trials")
    mean_tpe = sum(t.tpe for t in trials) / len(trials)
    mean_rpe = sum(t.rpe for t in trials) / len(trials)
    if mean_tpe == 0.0:
        raise UndefinedCfError("all TPE values are zero; cf undefined")
    return mean_rpe / mean_tpe


def improvement(baseline_values, final_values) -> float:
    """mean(final) - mean(baseline); negative means improvement for error metrics."""
    baseline = list(baseline_values)
    final = list(final_values)
    if not baseline or not final:
        raise ValueError("both trial sets must be non-empty")
    return sum(final) / len(final) - sum(baseline) / len(baseline)


def combined_performance_variability(cet_values) -> float:
    """Sample standard deviation (n-1) of CET across trials."""
    vals = [float(v) for v in cet_values]
    if len(vals) < 2:
        raise ValueError("need at least 2 trials for variability")
    m = sum(vals) / len(vals)
    return math.sqrt(sum((v - m) ** 2 for v in vals) / (len(vals) - 1))


def quartiles(values) -> tuple:
    """(q25, q50, q75) by linear interpolation between order statistics."""
    vals = np.asarray(list(values), dtype=float)
    if vals.size == 0:
        raise ValueError("empty value set")
    q = np.percentile(vals, [25.0, 50.0, 75.0], method="linear")
    return (float(q[0]), float(q[1]), float(q[2]))
