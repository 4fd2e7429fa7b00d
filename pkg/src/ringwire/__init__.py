"""Deterministic ring-on-wire teleoperation trainer.

A fixed-step (1 kHz) simulator of guiding a ring along a curved wire
under convergent, divergent, or null force fields, with trial metrics,
a multi-day training protocol driven by synthetic operators,
nonparametric statistics, a WebSocket service for live trainees, and a
command-line interface.
"""

from .experiment import (
    ExperimentConfig,
    SubjectModel,
    SyntheticOperator,
    build_session_plan,
    pseudo_randomize,
    run_experiment,
    run_trial,
)
from .forcefield import FieldMode, ForceFieldConfig, compute_wrench
from .geometry import WirePath, build_canonical_path
from .logio import TrialRecord, load_trials, read_trial, write_trial
from .metrics import MetricsConfig, TrialMetrics, compute_trial_metrics, quartiles
from .report import build_report, emit_report
from .service import SessionConfig, TrainingService, serve
from .simulator import OperatorCommand, SimConfig, TrialEngine, TrialPhase
from .stats import dunn_test, kruskal_wallis, wilcoxon_signed_rank

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig",
    "FieldMode",
    "ForceFieldConfig",
    "MetricsConfig",
    "OperatorCommand",
    "SessionConfig",
    "SimConfig",
    "SubjectModel",
    "SyntheticOperator",
    "TrainingService",
    "TrialEngine",
    "TrialMetrics",
    "TrialPhase",
    "TrialRecord",
    "WirePath",
    "build_canonical_path",
    "build_report",
    "build_session_plan",
    "compute_trial_metrics",
    "compute_wrench",
    "dunn_test",
    "emit_report",
    "kruskal_wallis",
    "load_trials",
    "pseudo_randomize",
    "quartiles",
    "read_trial",
    "run_experiment",
    "run_trial",
    "serve",
    "wilcoxon_signed_rank",
    "write_trial",
    "__version__",
]
