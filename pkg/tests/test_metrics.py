import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ringwire.metrics import (
    InvalidTrialError,
    MetricsConfig,
    TrialMetrics,
    UndefinedCfError,
    combined_error_time,
    combined_performance_variability,
    compute_trial_metrics,
    derive_cf,
    improvement,
    quartiles,
    rotational_path_error,
    translational_path_error,
    trial_time,
)


@dataclass
class Sample:
    t: float
    s_star: float          # m
    deviation: float       # m
    ang_deviation: float   # rad


def traversal(n, total_s, dev_fn, ang_fn, duration=None):
    """Samples traversing [0, total_s] m with deviation/angle profiles of s."""
    duration = duration if duration is not None else n / 30.0
    out = []
    for i in range(n + 1):
        s = total_s * i / n
        out.append(Sample(t=duration * i / n, s_star=s, deviation=dev_fn(s), ang_deviation=ang_fn(s)))
    return out


# -- time -------------------------------------------------------------------


def test_trial_time_two_samples():
    samples = [Sample(0.0, 0, 0, 0), Sample(12.5, 0, 0, 0)]
    assert trial_time(samples) == 12.5


def test_trial_time_301_samples():
    samples = [Sample(i / 30.0, 0, 0, 0) for i in range(301)]
    assert trial_time(samples) == pytest.approx(10.0, abs=1e-12)


def test_trial_time_too_few_samples():
    with pytest.raises(InvalidTrialError):
        trial_time([Sample(0, 0, 0, 0)])


# -- path errors ------------------------------------------------------------


def test_tpe_constant_deviation():
    # 2 mm deviation over 100 mm of wire -> 200 mm^2
    samples = traversal(100, 0.1, lambda s: 0.002, lambda s: 0.0)
    assert translational_path_error(samples) == pytest.approx(200.0, rel=1e-12)


def test_tpe_perfect_tracking():
    samples = traversal(100, 0.1, lambda s: 0.0, lambda s: 0.0)
    assert translational_path_error(samples) == 0.0


def test_rpe_constant_error():
    samples = traversal(100, 0.1, lambda s: 0.0, lambda s: 0.1)
    assert rotational_path_error(samples) == pytest.approx(10.0, rel=1e-12)


def test_rpe_perfect_orientation():
    samples = traversal(100, 0.1, lambda s: 0.0, lambda s: 0.0)
    assert rotational_path_error(samples) == 0.0


def test_path_errors_match_quadrature_oracle():
    L = 0.2
    dev = lambda s: 0.002 + 0.001 * math.sin(4 * math.pi * s / L)
    ang = lambda s: 0.1 + 0.05 * math.cos(2 * math.pi * s / L)
    samples = traversal(300, L, dev, ang)
    # fine-grid midpoint quadrature of the arc-length integrals
    grid = np.linspace(0, L, 100_001)
    mids = 0.5 * (grid[1:] + grid[:-1])
    ds_mm = np.diff(grid) * 1000.0
    tpe_oracle = float(np.sum([dev(s) * 1000.0 for s in mids] * ds_mm))
    rpe_oracle = float(np.sum([ang(s) for s in mids] * ds_mm))
    assert translational_path_error(samples) == pytest.approx(tpe_oracle, rel=0.005)
    assert rotational_path_error(samples) == pytest.approx(rpe_oracle, rel=0.005)


def test_zero_traversal_warns_and_returns_zero():
    samples = [Sample(0.0, 0.05, 0.002, 0.1), Sample(1.0, 0.05, 0.002, 0.1)]
    with pytest.warns(UserWarning):
        assert translational_path_error(samples) == 0.0


def test_tpe_scales_linearly_with_deviation():
    base = traversal(120, 0.15, lambda s: 0.001 + 0.002 * s, lambda s: 0.0)
    scaled = traversal(120, 0.15, lambda s: 3.0 * (0.001 + 0.002 * s), lambda s: 0.0)
    assert translational_path_error(scaled) == pytest.approx(3.0 * translational_path_error(base), rel=1e-12)


def test_resampling_rate_invariance():
    L = 0.25
    dev = lambda s: 0.003 + 0.001 * math.sin(2 * math.pi * s / L)
    ang = lambda s: 0.2 + 0.1 * math.sin(3 * math.pi * s / L)
    duration = 10.0
    results = []
    for hz in (15, 30, 60):
        samples = traversal(int(duration * hz), L, dev, ang, duration=duration)
        results.append((translational_path_error(samples), rotational_path_error(samples)))
    for tpe, rpe in results[1:]:
        assert tpe == pytest.approx(results[0][0], rel=0.02)
        assert rpe == pytest.approx(results[0][1], rel=0.02)


# -- CET / cf ---------------------------------------------------------------


def test_cet_direct_formula():
    assert combined_error_time(10.0, 0.1, 2.0, MetricsConfig(cf=17.0)) == pytest.approx(37.0, abs=1e-12)


def test_cet_zero_time():
    assert combined_error_time(0.0, 5.0, 5.0, MetricsConfig()) == 0.0


def test_cet_zero_errors():
    assert combined_error_time(10.0, 0.0, 0.0, MetricsConfig()) == 0.0


def test_cet_identity_holds_for_computed_metrics():
    cfg = MetricsConfig(cf=17.0)
    samples = traversal(200, 0.2, lambda s: 0.002 + 0.001 * s, lambda s: 0.05)
    m = compute_trial_metrics(samples, cfg)
    assert m.cet == m.time * (m.rpe + cfg.cf * m.tpe)


def test_derive_cf_constructed_17():
    trials = [TrialMetrics(1.0, 1.0, 30.0, 0.0), TrialMetrics(1.0, 3.0, 38.0, 0.0)]
    # mean tpe = 2, mean rpe = 34
    assert derive_cf(trials) == pytest.approx(17.0, abs=1e-12)


def test_derive_cf_single_trial():
    assert derive_cf([TrialMetrics(1.0, 1.0, 5.0, 0.0)]) == 5.0


def test_derive_cf_matches_recomputation():
    rng = np.random.default_rng(0)
    trials = [TrialMetrics(1.0, float(rng.uniform(0.5, 5)), float(rng.uniform(1, 50)), 0.0) for _ in range(100)]
    oracle = np.mean([t.rpe for t in trials]) / np.mean([t.tpe for t in trials])
    assert derive_cf(trials) == pytest.approx(float(oracle), abs=1e-12)


def test_derive_cf_all_zero_tpe():
    with pytest.raises(UndefinedCfError):
        derive_cf([TrialMetrics(1.0, 0.0, 5.0, 0.0)])


def test_derived_cf_balances_error_terms():
    rng = np.random.default_rng(1)
    trials = [TrialMetrics(1.0, float(rng.uniform(0.5, 5)), float(rng.uniform(1, 50)), 0.0) for _ in range(50)]
    cf = derive_cf(trials)
    total_rpe = sum(t.rpe for t in trials)
    total_tpe = sum(t.tpe for t in trials)
    assert total_rpe == pytest.approx(cf * total_tpe, rel=1e-9)


# -- improvement / variability / quartiles ----------------------------------


def test_improvement_example():
    assert improvement([20.0, 20.0], [12.0, 12.0]) == -8.0


def test_improvement_identical_sets():
    vals = [3.0, 4.0, 5.0]
    assert improvement(vals, vals) == 0.0


def test_improvement_matches_oracle():
    rng = np.random.default_rng(2)
    a = rng.uniform(0, 10, 37)
    b = rng.uniform(0, 10, 21)
    assert improvement(a, b) == pytest.approx(float(np.mean(b) - np.mean(a)), abs=1e-12)


def test_improvement_empty_set():
    with pytest.raises(ValueError):
        improvement([], [1.0])


def test_cpv_constant():
    assert combined_performance_variability([10.0, 10.0, 10.0]) == 0.0


def test_cpv_two_point():
    assert combined_performance_variability([1.0, 3.0]) == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_cpv_matches_two_pass_oracle():
    rng = np.random.default_rng(3)
    vals = rng.uniform(0, 100, 500)
    assert combined_performance_variability(vals) == pytest.approx(float(np.std(vals, ddof=1)), rel=1e-10)


def test_cpv_requires_two_trials():
    with pytest.raises(ValueError):
        combined_performance_variability([1.0])


def test_quartiles_hand_case():
    assert quartiles([1, 2, 3, 4, 5]) == (2.0, 3.0, 4.0)


def test_quartiles_singleton():
    assert quartiles([7.0]) == (7.0, 7.0, 7.0)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50), st.randoms())
def test_quartiles_permutation_invariant_and_ordered(vals, rnd):
    q = quartiles(vals)
    assert q[0] <= q[1] <= q[2]
    shuffled = list(vals)
    rnd.shuffle(shuffled)
    assert quartiles(shuffled) == q
