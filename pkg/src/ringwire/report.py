"""Experiment report: a pure, deterministic function of the trial logs.

Everything here is recomputed from persisted TrialRecords (never from
in-memory experiment state), so regenerating a report from loaded logs is
byte-identical to the original. Output formats: JSON, a plain-text table,
a per-trial CSV, and matplotlib figures.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

from .metrics import (
    TrialMetrics,
    combined_error_time,
    combined_performance_variability,
    derive_cf,
    MetricsConfig,
    quartiles,
    rotational_path_error,
    translational_path_error,
    trial_time,
)
from .stats import NoInformationError, dunn_test, kruskal_wallis, wilcoxon_signed_rank

METRIC_NAMES = ("time", "tpe", "rpe", "cet")
_BASELINE_DAY = 1
_FINAL_DAY = 5


@dataclass
class ExperimentReport:
    cf: float
    cf_policy: object
    dunn_adjustment: str
    n_trials: int
    n_completed: int
    n_aborted: int
    excluded_subjects: list
    groups: dict                      # group name -> sorted subject ids (included only)
    trials: list = field(default_factory=list)       # per-trial rows (dicts)
    quartiles: dict = field(default_factory=dict)    # group -> day -> metric -> [q25,q50,q75]
    improvement: dict = field(default_factory=dict)  # subject -> metric -> final-baseline
    cpv: dict = field(default_factory=dict)          # subject -> {baseline, final}
    tests: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cf": self.cf,
            "cf_policy": self.cf_policy,
            "dunn_adjustment": self.dunn_adjustment,
            "n_trials": self.n_trials,
            "n_completed": self.n_completed,
            "n_aborted": self.n_aborted,
            "excluded_subjects": self.excluded_subjects,
            "groups": self.groups,
            "trials": self.trials,
            "quartiles": self.quartiles,
            "improvement": self.improvement,
            "cpv": self.cpv,
            "tests": self.tests,
        }


def _result_dict(res) -> dict:
    d = res.to_dict()
    if "pair" in d:
        d["pair"] = list(d["pair"])
    return d


def _kw_dunn(groups_values: dict, adjustment: str, with_dunn: bool = True) -> dict:
    """KW (+ optional Dunn) over a {group name: values} mapping."""
    names = sorted(groups_values)
    values = [groups_values[g] for g in names]
    out: dict = {"groups": names}
    try:
        out["kw"] = _result_dict(kruskal_wallis(values))
    except ValueError as e:
        out["kw"] = {"error": str(e)}
        return out
    if with_dunn:
        pairwise = []
        for res in dunn_test(values, adjustment=adjustment):
            d = _result_dict(res)
            i, j = d["pair"]
            d["pair"] = [names[i], names[j]]
            pairwise.append(d)
        out["dunn"] = pairwise
    return out


def build_report(records, cf_policy="derive", dunn_adjustment: str = "bonferroni") -> ExperimentReport:
    """Assemble the full report from trial records.

    Per-trial time/TPE/RPE are recomputed from the logged samples; cf is
    derived from those trials (or fixed by policy) and CET recomputed
    under it, so the report never trusts anything but the logs.
    """
    records = sorted(records, key=lambda r: (r.subject, r.day, r.trial_index))
    n_aborted = sum(1 for r in records if r.status != "completed")
    # a subject with any aborted trial is incomplete and excluded from analysis
    excluded = sorted({r.subject for r in records if r.status != "completed"})
    included = [r for r in records if r.subject not in excluded and r.status == "completed"]

    base = {}  # trial_id -> (time, tpe, rpe)
    for r in included:
        base[r.trial_id] = (
            trial_time(r.samples),
            translational_path_error(r.samples),
            rotational_path_error(r.samples),
        )
    partial = [TrialMetrics(t, tpe, rpe, 0.0) for t, tpe, rpe in base.values()]
    cf = derive_cf(partial) if cf_policy == "derive" else float(cf_policy)
    mcfg = MetricsConfig(cf=cf)

    trial_rows = []
    per_trial = {}  # trial_id -> {metric: value}
    for r in included:
        t, tpe, rpe = base[r.trial_id]
        cet = combined_error_time(t, tpe, rpe, mcfg)
        vals = {"time": t, "tpe": tpe, "rpe": rpe, "cet": cet}
        per_trial[r.trial_id] = vals
        trial_rows.append(
            {
                "trial_id": r.trial_id,
                "subject": r.subject,
                "group": r.group,
                "day": r.day,
                "trial_index": r.trial_index,
                "field_mode": r.field_mode,
                "status": r.status,
                **vals,
            }
        )
    for r in records:
        if r.status != "completed" or r.subject in excluded:
            trial_rows.append(
                {
                    "trial_id": r.trial_id,
                    "subject": r.subject,
                    "group": r.group,
                    "day": r.day,
                    "trial_index": r.trial_index,
                    "field_mode": r.field_mode,
                    "status": r.status if r.status != "completed" else "excluded",
                    "time": None, "tpe": None, "rpe": None, "cet": None,
                }
            )
    trial_rows.sort(key=lambda d: (d["subject"], d["day"], d["trial_index"]))

    groups: dict = {}
    for r in included:
        groups.setdefault(r.group, set()).add(r.subject)
    groups = {g: sorted(s) for g, s in sorted(groups.items())}

    # quartiles per group per day per metric, pooled over the group's trials
    quart: dict = {}
    for g, subjects in groups.items():
        quart[g] = {}
        for day in range(1, 6):
            day_trials = [per_trial[r.trial_id] for r in included if r.group == g and r.day == day]
            if not day_trials:
                continue
            quart[g][str(day)] = {
                m: list(quartiles([tv[m] for tv in day_trials])) for m in METRIC_NAMES
            }

    # per-subject baseline (day-1 null) and final (day-5 null) means
    def _subject_mean(subject: str, day: int, null_only: bool):
        vals = {m: [] for m in METRIC_NAMES}
        for r in included:
            if r.subject == subject and r.day == day and (not null_only or r.field_mode == "null"):
                for m in METRIC_NAMES:
                    vals[m].append(per_trial[r.trial_id][m])
        return {m: (sum(v) / len(v) if v else None) for m, v in vals.items()}

    subjects_all = sorted({r.subject for r in included})
    baseline_means = {s: _subject_mean(s, _BASELINE_DAY, null_only=True) for s in subjects_all}
    final_means = {s: _subject_mean(s, _FINAL_DAY, null_only=True) for s in subjects_all}

    improvement = {}
    for s in subjects_all:
        improvement[s] = {}
        for m in METRIC_NAMES:
            b, f = baseline_means[s][m], final_means[s][m]
            improvement[s][m] = (f - b) if (b is not None and f is not None) else None

    # CPV: sd of CET over the baseline and final evaluation trials
    cpv = {}
    for s in subjects_all:
        entry = {}
        for label, day in (("baseline", _BASELINE_DAY), ("final", _FINAL_DAY)):
            cets = [
                per_trial[r.trial_id]["cet"]
                for r in included
                if r.subject == s and r.day == day and r.field_mode == "null"
            ]
            entry[label] = combined_performance_variability(cets) if len(cets) >= 2 else None
        cpv[s] = entry

    # statistical battery
    tests: dict = {"baseline": {}, "final": {}, "improvement": {}, "wsr": {}, "cpv": {}}
    for m in METRIC_NAMES:
        tests["baseline"][m] = _kw_dunn(
            {g: [baseline_means[s][m] for s in subs] for g, subs in groups.items()},
            dunn_adjustment,
        )
        tests["final"][m] = _kw_dunn(
            {g: [final_means[s][m] for s in subs] for g, subs in groups.items()},
            dunn_adjustment,
        )
        tests["improvement"][m] = _kw_dunn(
            {g: [improvement[s][m] for s in subs] for g, subs in groups.items()},
            dunn_adjustment,
            with_dunn=False,
        )
    for g, subs in groups.items():
        tests["wsr"][g] = {}
        for m in METRIC_NAMES:
            diffs = [improvement[s][m] for s in subs if improvement[s][m] is not None]
            try:
                tests["wsr"][g][m] = _result_dict(wilcoxon_signed_rank(diffs))
            except (NoInformationError, ValueError) as e:
                tests["wsr"][g][m] = {"error": str(e)}
    for label in ("baseline", "final"):
        tests["cpv"][label] = _kw_dunn(
            {g: [cpv[s][label] for s in subs if cpv[s][label] is not None] for g, subs in groups.items()},
            dunn_adjustment,
        )

    return ExperimentReport(
        cf=cf,
        cf_policy=cf_policy,
        dunn_adjustment=dunn_adjustment,
        n_trials=len(records),
        n_completed=sum(1 for r in records if r.status == "completed"),
        n_aborted=n_aborted,
        excluded_subjects=excluded,
        groups=groups,
        trials=trial_rows,
        quartiles=quart,
        improvement=improvement,
        cpv=cpv,
        tests=tests,
    )


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _render_text(report: ExperimentReport) -> str:
    lines = []
    lines.append("Ring-on-wire training experiment report")
    lines.append("=" * 40)
    lines.append(f"trials: {report.n_trials} ({report.n_completed} completed, {report.n_aborted} aborted)")
    lines.append(f"cf: {_fmt(report.cf)} rad/mm (policy: {report.cf_policy})")
    if report.excluded_subjects:
        lines.append(f"excluded subjects (incomplete): {', '.join(report.excluded_subjects)}")
    lines.append("")
    for m in METRIC_NAMES:
        lines.append(f"{m.upper()} quartiles (q25 / q50 / q75) by group and day")
        lines.append("-" * 56)
        for g in sorted(report.quartiles):
            for day in sorted(report.quartiles[g], key=int):
                q = report.quartiles[g][day][m]
                lines.append(f"  {g:<11} day {day}:  {_fmt(q[0])} / {_fmt(q[1])} / {_fmt(q[2])}")
        lines.append("")
    for label in ("baseline", "final"):
        lines.append(f"Between-group differences, {label} evaluation")
        lines.append("-" * 56)
        for m in METRIC_NAMES:
            block = report.tests[label][m]
            kw = block["kw"]
            if "error" in kw:
                lines.append(f"  {m.upper()}: KW unavailable ({kw['error']})")
                continue
            lines.append(
                f"  {m.upper()}: KW; chi2={_fmt(kw['statistic'])}, df={kw['df']}, p={_fmt(kw['p_value'])}"
            )
            for d in block.get("dunn", []):
                a, b = d["pair"]
                lines.append(
                    f"    Dunn {a} vs {b}: Z={_fmt(d['statistic'])}, p={_fmt(d['p_value'])} ({d['adjustment']})"
                )
        lines.append("")
    lines.append("Improvement (final - baseline), between-group KW")
    lines.append("-" * 56)
    for m in METRIC_NAMES:
        kw = report.tests["improvement"][m]["kw"]
        if "error" in kw:
            lines.append(f"  {m.upper()}: KW unavailable ({kw['error']})")
        else:
            lines.append(
                f"  {m.upper()}: KW; chi2={_fmt(kw['statistic'])}, df={kw['df']}, p={_fmt(kw['p_value'])}"
            )
    lines.append("")
    lines.append("Within-group baseline-vs-final (Wilcoxon signed-rank)")
    lines.append("-" * 56)
    for g in sorted(report.tests["wsr"]):
        for m in METRIC_NAMES:
            r = report.tests["wsr"][g][m]
            if "error" in r:
                lines.append(f"  {g:<11} {m.upper()}: unavailable ({r['error']})")
            else:
                lines.append(
                    f"  {g:<11} {m.upper()}: W={_fmt(r['statistic'])}, p={_fmt(r['p_value'])} ({r['method']}, n={r['n']})"
                )
    lines.append("")
    lines.append("CPV between-group differences")
    lines.append("-" * 56)
    for label in ("baseline", "final"):
        kw = report.tests["cpv"][label]["kw"]
        if "error" in kw:
            lines.append(f"  {label}: KW unavailable ({kw['error']})")
        else:
            lines.append(
                f"  {label}: KW; chi2={_fmt(kw['statistic'])}, df={kw['df']}, p={_fmt(kw['p_value'])}"
            )
    lines.append("")
    return "\n".join(lines)


def _write_figures(report: ExperimentReport, out_dir: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    colors = {"convergent": "#1f77b4", "divergent": "#d62728", "null": "#7f7f7f"}
    for m in METRIC_NAMES:
        fig, ax = plt.subplots(figsize=(6, 4))
        for g in sorted(report.quartiles):
            days = sorted(report.quartiles[g], key=int)
            if not days:
                continue
            xs = [int(d) for d in days]
            q25 = [report.quartiles[g][d][m][0] for d in days]
            q50 = [report.quartiles[g][d][m][1] for d in days]
            q75 = [report.quartiles[g][d][m][2] for d in days]
            c = colors.get(g, None)
            ax.plot(xs, q50, marker="o", label=g, color=c)
            ax.fill_between(xs, q25, q75, alpha=0.2, color=c)
        ax.set_xlabel("day")
        ax.set_ylabel(m.upper())
        ax.set_xticks([1, 2, 3, 4, 5])
        ax.set_title(f"{m.upper()} per day (median, IQR band)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, f"fig_quartiles_{m}.png"), dpi=100)
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    names = sorted(report.groups)
    width = 0.8 / max(1, len(names))
    means = {}
    for g in names:
        means[g] = []
        for m in METRIC_NAMES:
            per = [report.improvement[s][m] for s in report.groups[g] if report.improvement[s][m] is not None]
            means[g].append(sum(per) / len(per) if per else 0.0)
    # metrics live on wildly different scales; normalize each by its largest
    # group magnitude so one shared axis stays readable
    scales = [max((abs(means[g][mi]) for g in names), default=1.0) or 1.0 for mi in range(len(METRIC_NAMES))]
    for gi, g in enumerate(names):
        xs = [mi + gi * width for mi in range(len(METRIC_NAMES))]
        ax.bar(xs, [means[g][mi] / scales[mi] for mi in range(len(METRIC_NAMES))],
               width=width, label=g, color=colors.get(g, None))
    ax.set_xticks([mi + 0.4 - width / 2 for mi in range(len(METRIC_NAMES))])
    ax.set_xticklabels([m.upper() for m in METRIC_NAMES])
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_ylabel("mean improvement (relative units)")
    ax.set_title("Improvement by group")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "fig_improvement.png"), dpi=100)
    plt.close(fig)


def emit_report(report: ExperimentReport, out_dir: str, figures: bool = True) -> list:
    """Write report.json, report.txt, trials.csv and figures; returns file names."""
    os.makedirs(out_dir, exist_ok=True)
    written = []

    jpath = os.path.join(out_dir, "report.json")
    with open(jpath, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(jpath)

    tpath = os.path.join(out_dir, "report.txt")
    with open(tpath, "w") as fh:
        fh.write(_render_text(report))
    written.append(tpath)

    cpath = os.path.join(out_dir, "trials.csv")
    cols = ["trial_id", "subject", "group", "day", "trial_index", "field_mode", "status",
            "time", "tpe", "rpe", "cet"]
    with open(cpath, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols)
        writer.writeheader()
        for row in report.trials:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in cols})
    written.append(cpath)

    if figures:
        _write_figures(report, out_dir)
        written += [os.path.join(out_dir, f"fig_quartiles_{m}.png") for m in METRIC_NAMES]
        written.append(os.path.join(out_dir, "fig_improvement.png"))
    return written
