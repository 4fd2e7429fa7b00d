"""Acceptance gate: one test per top-level criterion, each printing a
single PASS line with the measured margin when it holds."""

import filecmp
import json
import math
import os
import random
import statistics
import time

import numpy as np
import pytest

from ringwire.experiment import (
    ExperimentConfig,
    SubjectModel,
    SyntheticOperator,
    build_session_plan,
    run_experiment,
    run_trial,
)
from ringwire.forcefield import (
    FieldMode,
    ForceFieldConfig,
    Wrench,
    compute_wrench,
)
from ringwire.geometry import (
    Pose,
    Twist,
    build_canonical_path,
    quat_error_rpy,
    quat_mul,
    quat_normalize,
    quat_to_matrix,
    rotation_angle,
)
from ringwire.logio import load_trials
from ringwire.metrics import (
    MetricsConfig,
    TrialMetrics,
    compute_trial_metrics,
    derive_cf,
)
from ringwire.report import build_report, emit_report
from ringwire.simulator import (
    OperatorCommand,
    SimConfig,
    TrialEngine,
    TrialPhase,
)
from ringwire.stats import dunn_test, kruskal_wallis, wilcoxon_signed_rank


@pytest.fixture(scope="module")
def path():
    return build_canonical_path()


def _random_pose(rng):
    q = quat_normalize(tuple(rng.standard_normal(4)))
    return Pose(rng.uniform(-0.3, 0.3, 3), q)


def _random_twist(rng):
    return Twist(rng.uniform(-1, 1, 3), rng.uniform(-3, 3, 3))


# ---------------------------------------------------------------------------


def test_wrench_law_suite():
    t0 = time.time()
    rng = np.random.default_rng(0)
    conv = ForceFieldConfig(mode=FieldMode.CONVERGENT)
    div = ForceFieldConfig(mode=FieldMode.DIVERGENT)

    # zero wrench at zero error and zero velocity
    pose = _random_pose(rng)
    still = Twist((0, 0, 0), (0, 0, 0))
    w = compute_wrench(pose, still, pose, conv, grip_closed=True)
    assert np.allclose(w.force, 0.0) and np.allclose(w.torque, 0.0)

    # grip-open gating: zero wrench in 1e5 random states
    n_gate = 100_000
    poses = rng.uniform(-0.3, 0.3, (n_gate, 3))
    gate_ok = 0
    for i in range(n_gate):
        cur = Pose(poses[i], quat_normalize(tuple(rng.standard_normal(4))))
        w = compute_wrench(cur, _random_twist(rng), pose, conv, grip_closed=False)
        if not w.force.any() and not w.torque.any():
            gate_ok += 1
    assert gate_ok == n_gate

    # convergent/divergent antisymmetry (stiffness term, pre-saturation) and
    # displacement linearity within 1e-12
    big = ForceFieldConfig(mode=FieldMode.CONVERGENT, f_max=1e9, tau_max=1e9)
    bigd = ForceFieldConfig(mode=FieldMode.DIVERGENT, f_max=1e9, tau_max=1e9)
    for _ in range(2000):
        desired = _random_pose(rng)
        d = rng.uniform(-0.05, 0.05, 3)
        cur = Pose(desired.translation + d, desired.rotation)
        wc = compute_wrench(cur, still, desired, big, grip_closed=True)
        wd = compute_wrench(cur, still, desired, bigd, grip_closed=True)
        assert np.array_equal(wc.force, -wd.force)
        cur2 = Pose(desired.translation + 2.0 * d, desired.rotation)
        w2 = compute_wrench(cur2, still, desired, big, grip_closed=True)
        assert np.all(np.abs(w2.force - 2.0 * wc.force) <= 1e-12 * np.maximum(1.0, np.abs(w2.force)))

    # damping passivity: the damping component opposes motion (P = F.v <= 0)
    null = ForceFieldConfig(mode=FieldMode.NULL, f_max=1e9, tau_max=1e9)
    for _ in range(2000):
        tw = _random_twist(rng)
        w = compute_wrench(pose, tw, pose, null, grip_closed=True)
        assert float(np.dot(w.force, tw.linear)) <= 1e-12
        assert float(np.dot(w.torque, tw.angular)) <= 1e-12

    dt = time.time() - t0
    assert dt < 5.0
    print(f"\nPASS wrench-law suite (gating 100000/100000, linearity 1e-12, {dt:.2f}s < 5s)")


def test_projection_oracle(path):
    t0 = time.time()
    rng = np.random.default_rng(1)
    dense_t = np.linspace(0.0, path.n_segments, 100_000)
    dense_p = path.point_at_t(dense_t)
    worst = 0.0
    for _ in range(1000):
        q = rng.uniform(-0.1, 0.3, 3)
        _, _, _, dist = path.project(tuple(q))
        brute = float(np.min(np.linalg.norm(dense_p - q, axis=1)))
        worst = max(worst, abs(dist - brute))
    dt = time.time() - t0
    assert worst <= 1e-5
    assert dt < 30.0
    print(f"\nPASS projection oracle (worst discrepancy {worst:.2e} m <= 1e-5, {dt:.1f}s < 30s)")


def test_quaternion_suite():
    rng = np.random.default_rng(2)

    def rpy_matrix(roll, pitch, yaw):
        cr, sr = math.cos(roll), math.sin(roll)
        cp, sp = math.cos(pitch), math.sin(pitch)
        cy, sy = math.cos(yaw), math.sin(yaw)
        rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1.0]])
        ry = np.array([[cp, 0, sp], [0, 1.0, 0], [-sp, 0, cp]])
        rx = np.array([[1.0, 0, 0], [0, cr, -sr], [0, sr, cr]])
        return rz @ ry @ rx

    worst = 0.0
    for _ in range(10_000):
        a = quat_normalize(tuple(rng.standard_normal(4)))
        b = quat_normalize(tuple(rng.standard_normal(4)))
        roll, pitch, yaw = quat_error_rpy(a, b)
        rel = quat_mul(a, (b[0], -b[1], -b[2], -b[3]))
        err = float(np.max(np.abs(np.asarray(quat_to_matrix(rel)) - rpy_matrix(roll, pitch, yaw))))
        worst = max(worst, err)
        # double cover: negating either quaternion changes nothing, exactly
        na = (-a[0], -a[1], -a[2], -a[3])
        assert quat_error_rpy(na, b) == (roll, pitch, yaw)
        assert rotation_angle(a, b) == rotation_angle(na, b)
    assert worst <= 1e-9
    print(f"\nPASS quaternion suite (rpy round-trip worst {worst:.2e} <= 1e-9, double cover exact)")


def test_metrics_oracle():
    class S:
        def __init__(self, t, s_star, deviation, ang_deviation):
            self.t, self.s_star = t, s_star
            self.deviation, self.ang_deviation = deviation, ang_deviation

    L, duration = 0.25, 8.0
    dev = lambda s: 0.002 + 0.001 * math.sin(4 * math.pi * s / L)
    ang = lambda s: 0.15 + 0.05 * math.cos(2 * math.pi * s / L)

    def traj(n):
        return [S(duration * i / n, L * i / n, dev(L * i / n), ang(L * i / n)) for i in range(n + 1)]

    cfg = MetricsConfig(cf=17.0)
    m = compute_trial_metrics(traj(240), cfg)
    grid = np.linspace(0, L, 200_001)
    mids = 0.5 * (grid[1:] + grid[:-1])
    ds_mm = np.diff(grid) * 1000.0
    tpe_oracle = float(np.sum(np.array([dev(s) for s in mids]) * 1000.0 * ds_mm))
    rpe_oracle = float(np.sum(np.array([ang(s) for s in mids]) * ds_mm))
    tpe_err = abs(m.tpe - tpe_oracle) / tpe_oracle
    rpe_err = abs(m.rpe - rpe_oracle) / rpe_oracle
    assert tpe_err < 0.005 and rpe_err < 0.005

    # CET identity exact
    assert m.cet == m.time * (m.rpe + cfg.cf * m.tpe)

    # cf construction: dataset built with mean(RPE)/mean(TPE) = 17 exactly
    trials = [TrialMetrics(1.0, 2.0, 30.0, 0.0), TrialMetrics(1.0, 4.0, 72.0, 0.0)]
    assert derive_cf(trials) == pytest.approx(17.0, abs=1e-12)

    # resampling-rate invariance within 2%
    base = compute_trial_metrics(traj(int(duration * 30)), cfg)
    for hz in (15, 60):
        other = compute_trial_metrics(traj(int(duration * hz)), cfg)
        assert abs(other.tpe - base.tpe) / base.tpe < 0.02
        assert abs(other.rpe - base.rpe) / base.rpe < 0.02
    print(f"\nPASS metrics oracle (quadrature err {max(tpe_err, rpe_err):.2e} < 0.5%, CET exact, cf=17, resampling < 2%)")


def test_statistics_oracle():
    t0 = time.time()

    res = kruskal_wallis([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    assert res.statistic == pytest.approx(7.2, abs=1e-12) and res.df == 2
    extreme = [r for r in dunn_test([[1, 2, 3], [4, 5, 6], [7, 8, 9]], adjustment="none")
               if r.detail["pair"] == (0, 2)][0]
    assert abs(extreme.statistic) == pytest.approx(6 / math.sqrt(5), abs=1e-12)
    assert wilcoxon_signed_rank([1, 2, 3, 4, 5]).p_value == 0.0625

    # independent naive reimplementation
    def naive_ranks(vals):
        return [sum(1 for u in vals if u < v) + (sum(1 for u in vals if u == v) + 1) / 2 for v in vals]

    def naive_kw(groups):
        pooled = [v for g in groups for v in g]
        ranks = naive_ranks(pooled)
        n = len(pooled)
        rbar = sum(ranks) / n
        sst = sum((r - rbar) ** 2 for r in ranks)
        if sst == 0:
            return 0.0
        idx, ssb = 0, 0.0
        for g in groups:
            gr = ranks[idx:idx + len(g)]
            idx += len(g)
            ssb += len(gr) * (sum(gr) / len(gr) - rbar) ** 2
        return (n - 1) * ssb / sst

    def naive_dunn_z(groups, i, j):
        pooled = [v for g in groups for v in g]
        ranks = naive_ranks(pooled)
        n = len(pooled)
        sizes = [len(g) for g in groups]
        starts = [sum(sizes[:k]) for k in range(len(groups))]
        mi = sum(ranks[starts[i]:starts[i] + sizes[i]]) / sizes[i]
        mj = sum(ranks[starts[j]:starts[j] + sizes[j]]) / sizes[j]
        ties = sum(t ** 3 - t for t in (pooled.count(v) for v in set(pooled)))
        var = (n * (n + 1) / 12 - ties / (12 * (n - 1))) * (1 / sizes[i] + 1 / sizes[j])
        return (mi - mj) / math.sqrt(var)

    rng = np.random.default_rng(3)
    worst_stat, worst_p = 0.0, 0.0
    for _ in range(200):
        groups = [[float(v) for v in rng.integers(0, 10, int(rng.integers(3, 9)))]
                  for _ in range(int(rng.integers(2, 5)))]
        mine = kruskal_wallis(groups)
        h = naive_kw(groups)
        worst_stat = max(worst_stat, abs(mine.statistic - h))
        for r in dunn_test(groups, adjustment="none"):
            i, j = r.detail["pair"]
            z = naive_dunn_z(groups, i, j)
            worst_stat = max(worst_stat, abs(r.statistic - z))
            naive_p = min(1.0, math.erfc(abs(z) / math.sqrt(2)))
            worst_p = max(worst_p, abs(r.detail["p_unadjusted"] - naive_p))
    assert worst_stat <= 1e-10
    assert worst_p <= 1e-8

    # KW with two groups equals the squared Dunn Z (tie-free data)
    worst_sq = 0.0
    for _ in range(50):
        vals = rng.permutation(np.arange(40, dtype=float) + rng.uniform(0, 0.3))
        cut = int(rng.integers(4, 12))
        groups = [list(vals[:cut]), list(vals[cut:cut + int(rng.integers(4, 12))])]
        h = kruskal_wallis(groups).statistic
        z = dunn_test(groups, adjustment="none")[0].statistic
        worst_sq = max(worst_sq, abs(h - z * z))
    assert worst_sq <= 1e-9

    dt = time.time() - t0
    assert dt < 60.0
    print(f"\nPASS statistics oracle (hand cases, 200 datasets: stat {worst_stat:.1e} <= 1e-10, "
          f"p {worst_p:.1e} <= 1e-8, H=Z^2 {worst_sq:.1e} <= 1e-9, {dt:.1f}s < 60s)")


def test_protocol_conformance_10000_plans():
    rng = random.Random(4)
    groups = [FieldMode.CONVERGENT, FieldMode.DIVERGENT, FieldMode.NULL]
    for k in range(10_000):
        group = rng.choice(groups)
        plan = build_session_plan(f"S{k}", group)
        assert plan.total_trials == 100
        days = dict(plan.days)
        assert [m for _, m in days[1][:5]] == [FieldMode.NULL] * 5
        assert [m for _, m in days[1][5:]] == [group] * 15
        for d in (2, 3, 4):
            assert [m for _, m in days[d]] == [group] * 20
        assert [m for _, m in days[5]] == [FieldMode.NULL] * 20
    print("\nPASS protocol conformance (10000/10000 plans satisfy the 5-day structure)")


def test_field_dynamics_ordering(path):
    conforming = 0
    for seed in range(20):
        med = {}
        for mode in (FieldMode.CONVERGENT, FieldMode.NULL, FieldMode.DIVERGENT):
            op = SyntheticOperator(SubjectModel(seed=seed), path)
            engine = run_trial(path, mode, op, 5000 + seed)
            assert engine.trial.phase is TrialPhase.COMPLETED
            med[mode] = statistics.median(s.deviation for s in engine.trial.samples)
        if med[FieldMode.CONVERGENT] < med[FieldMode.NULL] < med[FieldMode.DIVERGENT]:
            conforming += 1
    assert conforming >= 18
    print(f"\nPASS field-dynamics ordering (convergent < null < divergent in {conforming}/20 seeds >= 18)")


def test_divergent_stability_100_trials(path):
    worst = 0.0
    for seed in range(100):
        op = SyntheticOperator(SubjectModel(seed=seed), path)
        engine = run_trial(path, FieldMode.DIVERGENT, op, 9000 + seed,
                           sim_overrides={"timeout": 30.0})
        for s in engine.trial.samples:
            r = math.sqrt(sum(c * c for c in s.position))
            worst = max(worst, r)
            assert all(math.isfinite(c) for c in s.position)
        assert worst < 1.0  # well inside the bounded workspace
    print(f"\nPASS divergent stability (100 trials bounded, max |ring| {worst:.3f} m < 1 m)")


def test_30hz_sampling_exactly_301_samples(path):
    engine = TrialEngine(path, ForceFieldConfig(mode=FieldMode.NULL), SimConfig(timeout=3600.0))
    engine.apply_command(OperatorCommand(grip_closed=True))
    for _ in range(10_000):  # 10 s simulated while holding
        engine.step()
    assert engine.trial.phase is TrialPhase.RUNNING
    assert len(engine.trial.samples) == 301
    print("\nPASS 30 Hz logging (10 s trial -> exactly 301 samples)")


def _tree_files(root):
    out = {}
    for dirpath, _dirs, files in os.walk(root):
        for f in files:
            full = os.path.join(dirpath, f)
            out[os.path.relpath(full, root)] = full
    return out


def test_end_to_end_determinism(tmp_path, path):
    cfg_kwargs = dict(subjects=12, master_seed=20240817)

    t0 = time.time()
    rep1 = run_experiment(ExperimentConfig(output_dir=str(tmp_path / "run1"), **cfg_kwargs))
    elapsed = time.time() - t0
    assert elapsed < 600.0, f"experiment took {elapsed:.0f}s"
    assert rep1.n_trials == 1200

    rep2 = run_experiment(ExperimentConfig(output_dir=str(tmp_path / "run2"), **cfg_kwargs))
    assert rep2.n_trials == 1200

    files1 = _tree_files(tmp_path / "run1")
    files2 = _tree_files(tmp_path / "run2")
    assert sorted(files1) == sorted(files2)
    for rel in sorted(files1):
        assert filecmp.cmp(files1[rel], files2[rel], shallow=False), f"{rel} differs between runs"

    # regenerating the report from the persisted logs is identical
    records = load_trials(str(tmp_path / "run1" / "logs"))
    assert len(records) == 1200
    regen = build_report(records, cf_policy="derive", dunn_adjustment="bonferroni")
    emit_report(regen, str(tmp_path / "regen"))
    for name in sorted(os.listdir(tmp_path / "run1" / "report")):
        assert filecmp.cmp(
            os.path.join(tmp_path, "run1", "report", name),
            os.path.join(tmp_path, "regen", name),
            shallow=False,
        ), f"report file {name} changed when regenerated from logs"

    print(f"\nPASS end-to-end determinism (1200 trials in {elapsed:.0f}s < 600s, "
          f"two runs byte-identical, report regeneration identical)")
