"""Command-line interface: headless experiments, reports, replay, serving."""

from __future__ import annotations

import json
import os
import sys

import click

from .experiment import ExperimentConfig, run_experiment
from .forcefield import FieldMode, ForceFieldConfig
from .geometry import build_canonical_path
from .logio import load_trials, path_hash, read_commands, read_trial
from .report import build_report, emit_report
from .simulator import SimConfig, replay as replay_engine


@click.group()
def main():
    """Ring-on-wire teleoperation training simulator."""


@main.command("run-experiment")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="Experiment config JSON; defaults are used when omitted.")
@click.option("--output", "output_dir", default=None, help="Override the output directory.")
def run_experiment_cmd(config_file, output_dir):
    """Run a full headless multi-subject experiment and write logs + report."""
    if config_file:
        cfg = ExperimentConfig.from_json_file(config_file)
    else:
        cfg = ExperimentConfig()
    if output_dir:
        cfg.output_dir = output_dir
    report = run_experiment(cfg)
    click.echo(f"completed {report.n_completed}/{report.n_trials} trials "
               f"({report.n_aborted} aborted), cf={report.cf:.6g} rad/mm")
    click.echo(f"output in {cfg.output_dir}")


@main.command("report")
@click.option("--logs", "log_dir", type=click.Path(exists=True), required=True,
              help="Directory tree of trial logs.")
@click.option("--out", "out_dir", default=None, help="Report output directory (default: <logs>/../report).")
@click.option("--cf", default=None, help='cf policy: "derive" or a number.')
@click.option("--dunn", default=None, type=click.Choice(["bonferroni", "none"]),
              help="Dunn multiplicity adjustment.")
@click.option("--figures/--no-figures", default=True)
def report_cmd(log_dir, out_dir, cf, dunn, figures):
    """Regenerate the report from persisted trial logs."""
    cf_policy = "derive"
    adjustment = "bonferroni"
    cfg_file = os.path.join(os.path.dirname(os.path.abspath(log_dir)), "config.json")
    if os.path.exists(cfg_file):
        with open(cfg_file) as fh:
            stored = json.load(fh)
        cf_policy = stored.get("cf_policy", cf_policy)
        adjustment = stored.get("dunn_adjustment", adjustment)
    if cf is not None:
        cf_policy = cf if cf == "derive" else float(cf)
    if dunn is not None:
        adjustment = dunn
    records = load_trials(log_dir)
    if not records:
        raise click.ClickException(f"no trial logs found under {log_dir}")
    report = build_report(records, cf_policy=cf_policy, dunn_adjustment=adjustment)
    out_dir = out_dir or os.path.join(os.path.dirname(os.path.abspath(log_dir)), "report")
    written = emit_report(report, out_dir, figures=figures)
    for f in written:
        click.echo(f)


@main.command("replay")
@click.option("--trial", "trial_file", type=click.Path(exists=True), required=True,
              help="Trial log (.jsonl) or command log (.cmd.jsonl).")
def replay_cmd(trial_file):
    """Re-run a trial from its command log and verify it against the samples."""
    if trial_file.endswith(".cmd.jsonl"):
        cmd_file = trial_file
        log_file = trial_file[: -len(".cmd.jsonl")] + ".jsonl"
    else:
        log_file = trial_file
        cmd_file = trial_file[: -len(".jsonl")] + ".cmd.jsonl"
    if not os.path.exists(cmd_file):
        raise click.ClickException(f"command log not found: {cmd_file}")
    header, commands = read_commands(cmd_file)

    path = build_canonical_path()
    if header["path_hash"] != path_hash(path):
        raise click.ClickException(
            "trial was recorded on a different path (hash mismatch); cannot replay"
        )
    field_cfg = ForceFieldConfig.from_dict(header["field_cfg"])
    sim_cfg = SimConfig.from_dict(header["sim_cfg"])
    n_steps = int(sim_cfg.timeout / sim_cfg.dt) + 1
    engine = replay_engine(path, field_cfg, sim_cfg, commands, n_steps)
    click.echo(f"replayed {header['trial_id']}: phase={engine.trial.phase.value}, "
               f"elapsed={engine.trial.elapsed:.3f}s, samples={len(engine.trial.samples)}")

    if os.path.exists(log_file):
        original = read_trial(log_file)
        if original.samples == engine.trial.samples:
            click.echo("verification: samples identical to the recorded log")
        else:
            click.echo("verification FAILED: replay diverged from the recorded log", err=True)
            sys.exit(1)
    else:
        click.echo(f"(no sample log at {log_file}; skipped verification)")


@main.command("serve")
@click.option("--port", default=None, type=int, help="Port (env RINGWIRE_PORT, default 8765).")
@click.option("--config", "config_file", type=click.Path(exists=True), default=None,
              help="Session config JSON.")
@click.option("--subject", default=None, help="Subject id override.")
@click.option("--group", default=None, type=click.Choice(["c", "d", "n", "convergent", "divergent", "null"]),
              help="Training group override.")
@click.option("--host", default="127.0.0.1")
def serve_cmd(port, config_file, subject, group, host):
    """Serve the real-time WebSocket training session."""
    from .service import SessionConfig, serve

    kwargs = {}
    if config_file:
        with open(config_file) as fh:
            kwargs = json.load(fh)
    cfg = SessionConfig(**kwargs)
    if subject:
        cfg.subject = subject
    if group:
        cfg.group = FieldMode.from_str(group)
    env_logs = os.environ.get("RINGWIRE_LOG_DIR")
    if env_logs and "log_dir" not in kwargs:
        cfg.log_dir = env_logs
    if port is None:
        port = int(os.environ.get("RINGWIRE_PORT", "8765"))
    click.echo(f"serving {cfg.subject} ({cfg.group.value}) on ws://{host}:{port}")
    serve(port, cfg, host=host)


@main.command("export-path")
@click.option("--out", "out_file", default="-", help="Output file (default stdout).")
@click.option("--samples", default=256, type=int, help="Polyline sample count.")
def export_path_cmd(out_file, samples):
    """Export the canonical wire geometry as JSON."""
    text = build_canonical_path().to_json(samples=samples)
    if out_file == "-":
        click.echo(text)
    else:
        with open(out_file, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {out_file}")


if __name__ == "__main__":
    main()
