import math

import numpy as np
import pytest

from ringwire.forcefield import FieldMode, ForceFieldConfig, Wrench, compute_wrench, saturate
from ringwire.geometry import Pose, Twist, quat_from_axis_angle


def cfg(mode=FieldMode.CONVERGENT, **kw):
    return ForceFieldConfig(mode=mode, **kw)


def random_state(rng):
    qc = rng.normal(size=4)
    qc /= np.linalg.norm(qc)
    qd = rng.normal(size=4)
    qd /= np.linalg.norm(qd)
    current = Pose(rng.uniform(-0.1, 0.1, 3), tuple(qc))
    desired = Pose(rng.uniform(-0.1, 0.1, 3), tuple(qd))
    twist = Twist(rng.uniform(-0.3, 0.3, 3), rng.uniform(-2, 2, 3))
    return current, twist, desired


def test_zero_error_zero_velocity_zero_wrench():
    p = Pose.identity()
    w = compute_wrench(p, Twist.zero(), p, cfg(), grip_closed=True)
    assert np.all(w.force == 0) and np.all(w.torque == 0)


def test_convergent_force_toward_path():
    current = Pose(np.array([0.001, 0, 0]), (1.0, 0, 0, 0))
    desired = Pose.identity()
    w = compute_wrench(current, Twist.zero(), desired, cfg(k_t=100.0), grip_closed=True)
    assert w.force == pytest.approx([-0.1, 0, 0], abs=1e-15)
    assert w.torque == pytest.approx([0, 0, 0], abs=1e-15)


def test_divergent_force_away_from_path():
    current = Pose(np.array([0.001, 0, 0]), (1.0, 0, 0, 0))
    desired = Pose.identity()
    w = compute_wrench(current, Twist.zero(), desired, cfg(FieldMode.DIVERGENT, k_t=100.0), grip_closed=True)
    assert w.force == pytest.approx([0.1, 0, 0], abs=1e-15)


def test_grip_open_gating_random_states():
    rng = np.random.default_rng(1)
    for mode in FieldMode:
        for _ in range(200):
            current, twist, desired = random_state(rng)
            w = compute_wrench(current, twist, desired, cfg(mode), grip_closed=False)
            assert np.all(w.force == 0) and np.all(w.torque == 0)


def test_null_mode_pure_damping():
    current = Pose.identity()
    twist = Twist(np.array([0.01, 0, 0]), np.zeros(3))
    w = compute_wrench(current, twist, current, cfg(FieldMode.NULL, d_t=5.0), grip_closed=True)
    assert w.force == pytest.approx([-0.05, 0, 0], abs=1e-15)


def test_null_mode_zero_velocity_zero_wrench():
    rng = np.random.default_rng(2)
    for _ in range(100):
        current, _, desired = random_state(rng)
        w = compute_wrench(current, Twist.zero(), desired, cfg(FieldMode.NULL), grip_closed=True)
        assert np.all(w.force == 0) and np.all(w.torque == 0)


def test_convergent_divergent_antisymmetry():
    # zero twist so only the stiffness terms remain; must negate exactly
    rng = np.random.default_rng(3)
    big = cfg(f_max=1e9, tau_max=1e9)  # avoid saturation
    big_d = cfg(FieldMode.DIVERGENT, f_max=1e9, tau_max=1e9)
    for _ in range(300):
        current, _, desired = random_state(rng)
        wc = compute_wrench(current, Twist.zero(), desired, big, grip_closed=True)
        wd = compute_wrench(current, Twist.zero(), desired, big_d, grip_closed=True)
        assert np.array_equal(wc.force, -wd.force)
        assert np.array_equal(wc.torque, -wd.torque)


def test_displacement_linearity():
    desired = Pose.identity()
    d = np.array([0.004, -0.002, 0.001])
    c = cfg(f_max=1e9)
    w1 = compute_wrench(Pose(d, (1.0, 0, 0, 0)), Twist.zero(), desired, c, grip_closed=True)
    w2 = compute_wrench(Pose(2 * d, (1.0, 0, 0, 0)), Twist.zero(), desired, c, grip_closed=True)
    assert np.max(np.abs(w2.force - 2 * w1.force)) < 1e-12


def test_damping_passivity():
    rng = np.random.default_rng(4)
    c = cfg(FieldMode.NULL)  # isolates the damping term
    for _ in range(300):
        current, twist, desired = random_state(rng)
        w = compute_wrench(current, twist, desired, c, grip_closed=True)
        power = float(np.dot(w.force, twist.linear) + np.dot(w.torque, twist.angular))
        assert power <= 1e-15


def test_convergence_direction():
    rng = np.random.default_rng(5)
    for _ in range(300):
        current, _, desired = random_state(rng)
        disp = current.translation - desired.translation
        wc = compute_wrench(current, Twist.zero(), desired, cfg(), grip_closed=True)
        wd = compute_wrench(current, Twist.zero(), desired, cfg(FieldMode.DIVERGENT), grip_closed=True)
        assert float(np.dot(wc.force, disp)) <= 1e-15
        assert float(np.dot(wd.force, disp)) >= -1e-15


def test_rotational_restoring_direction():
    # convergent torque rotates current toward desired (positive along the error)
    desired = Pose(np.zeros(3), quat_from_axis_angle((0, 0, 1), 0.3))
    current = Pose.identity()
    w = compute_wrench(current, Twist.zero(), desired, cfg(), grip_closed=True)
    assert w.torque[2] > 0


def test_saturation_untouched_below_cap():
    c = cfg()
    w = Wrench(np.array([0.5 * c.f_max, 0, 0]), np.zeros(3))
    out = saturate(w, c)
    assert np.array_equal(out.force, w.force)


def test_saturation_rescales_to_cap():
    c = cfg()
    out = saturate(Wrench(np.array([3 * c.f_max, 0, 0]), np.zeros(3)), c)
    assert out.force == pytest.approx([c.f_max, 0, 0])


def test_saturation_preserves_direction():
    rng = np.random.default_rng(6)
    c = cfg()
    for _ in range(300):
        f = rng.uniform(-20, 20, 3)
        tau = rng.uniform(-1, 1, 3)
        out = saturate(Wrench(f, tau), c)
        assert np.linalg.norm(out.force) <= c.f_max + 1e-12
        assert np.linalg.norm(out.torque) <= c.tau_max + 1e-12
        if np.linalg.norm(f) > 0:
            cosine = np.dot(out.force, f) / (np.linalg.norm(out.force) * np.linalg.norm(f))
            assert cosine == pytest.approx(1.0, abs=1e-12)


def test_wrench_obeys_caps():
    rng = np.random.default_rng(7)
    c = cfg(FieldMode.DIVERGENT)
    for _ in range(200):
        current, twist, desired = random_state(rng)
        w = compute_wrench(current, twist, desired, c, grip_closed=True)
        assert np.linalg.norm(w.force) <= c.f_max + 1e-12
        assert np.linalg.norm(w.torque) <= c.tau_max + 1e-12


def test_non_unit_quaternion_is_contract_violation():
    bad = Pose.identity()
    bad.rotation = (0.9, 0.1, 0.0, 0.0)  # bypass constructor check
    with pytest.raises(ValueError):
        compute_wrench(bad, Twist.zero(), Pose.identity(), cfg(), grip_closed=True)


def test_config_validation():
    with pytest.raises(ValueError):
        ForceFieldConfig(k_t=-1.0)
    with pytest.raises(ValueError):
        ForceFieldConfig(f_max=0.0)


def test_mode_signs():
    assert FieldMode.CONVERGENT.sign == 1.0
    assert FieldMode.DIVERGENT.sign == -1.0
    assert FieldMode.NULL.sign == 0.0


def test_config_roundtrip():
    c = cfg(FieldMode.DIVERGENT, k_t=120.0)
    assert ForceFieldConfig.from_dict(c.to_dict()) == c
