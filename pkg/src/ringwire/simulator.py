"""Fixed-timestep ring-on-wire trial engine.

One engine instance runs one trial: the instrument integrates latched
operator velocity commands at a fixed control rate (default 1 kHz); while
the ring is grasped, the training field wrench displaces the pose through
an admittance response; state is logged at 30 Hz in trial time.

All timing derives from the step counter, never the wall clock, so a
trial replayed from its command log is bit-identical. The trial clock
(and with it logging) runs only while the ring is held: dropping the
ring pauses the clock penalty-free until re-grasp, and the pause is
noted in the event log.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .forcefield import ForceFieldConfig, saturate_raw, wrench_raw
from .geometry import (
    Pose,
    Twist,
    WirePath,
    quat_canonical,
    quat_conj,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
)

_SAMPLE_EPS = 1e-9


@dataclass
class SimConfig:
    dt: float = 0.001               # control period, s
    sample_hz: float = 30.0         # logging rate in trial time
    capture_radius: float = 0.005   # grasp capture radius, m (boundary inclusive)
    d_red: float = 0.010            # deviation at which the ring is fully red, m
    c_lin: float = 0.012            # admittance compliance, m/(N*s)
    c_rot: float = 36.0             # admittance compliance, rad/(N*m*s)
    max_lin_speed: float = 0.25     # command clamp, m/s
    max_ang_speed: float = 3.0      # command clamp, rad/s
    end_tolerance: float = 0.005    # completion margin from the path end, m
    timeout: float = 300.0          # total simulated time before abort, s
    workspace_limit: float = 0.5    # per-axis position clamp, m

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @staticmethod
    def from_dict(d: dict) -> "SimConfig":
        return SimConfig(**d)


class TrialPhase(Enum):
    READY = "ready"
    RUNNING = "running"
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass
class OperatorCommand:
    linear: tuple = (0.0, 0.0, 0.0)     # m/s
    angular: tuple = (0.0, 0.0, 0.0)    # rad/s
    grip_closed: bool = False
    timestamp: float = 0.0

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (*self.linear, *self.angular, self.timestamp))


@dataclass
class InstrumentState:
    pose: Pose
    twist: Twist
    grip_closed: bool = False
    holding_ring: bool = False


@dataclass
class PoseSample:
    t: float                 # trial time, s
    position: tuple          # ring position, m
    rotation: tuple          # ring orientation quaternion (w, x, y, z)
    linear_vel: tuple
    angular_vel: tuple
    grip_closed: bool
    s_star: float            # arc length of the closest path point, m
    deviation: float         # translational deviation, m
    ang_deviation: float     # rotation angle to the desired frame, rad
    force: tuple
    torque: tuple


@dataclass
class TrialState:
    phase: TrialPhase = TrialPhase.READY
    elapsed: float = 0.0
    samples: list = field(default_factory=list)
    progress: float = 0.0    # max s_star reached while holding, m
    events: list = field(default_factory=list)
    abort_reason: str | None = None


def try_grasp(instrument: InstrumentState, ring_pose: Pose, capture_radius: float = 0.005) -> bool:
    """Grasp succeeds iff the tip is within the capture radius (inclusive)."""
    d = float(np.linalg.norm(instrument.pose.translation - ring_pose.translation))
    return d <= capture_radius


def ring_color(deviation: float, d_red: float = 0.010) -> float:
    """Accuracy color scalar: 1 (yellow) on the wire, 0 (red) at >= d_red."""
    if deviation <= 0.0:
        return 1.0
    if deviation >= d_red:
        return 0.0
    return 1.0 - deviation / d_red


def check_completion(state: TrialState, path: WirePath, end_tolerance: float = 0.005) -> bool:
    """True iff the ring was carried past the end of the wire (within tolerance)."""
    done = state.progress >= path.length - end_tolerance
    if done and state.phase is TrialPhase.RUNNING:
        state.phase = TrialPhase.COMPLETED
    return done


@dataclass
class SimSnapshot:
    """Immutable view of the engine published to operators and the service."""

    phase: TrialPhase
    sim_time: float
    elapsed: float
    ring_position: tuple
    ring_rotation: tuple
    instrument_position: tuple
    instrument_rotation: tuple
    linear_vel: tuple
    angular_vel: tuple
    grip_closed: bool
    holding_ring: bool
    s_star: float
    deviation: float
    ang_deviation: float
    color: float
    progress: float


class TrialEngine:
    """Single-writer trial simulation; advance with step(), read snapshots."""

    def __init__(self, path: WirePath, field_cfg: ForceFieldConfig, sim_cfg: SimConfig | None = None):
        self.path = path
        self.field_cfg = field_cfg
        self.cfg = sim_cfg or SimConfig()
        self.trial = TrialState()

        start = path.point_at_s(0.0)
        q0 = path.frame_at_s(0.0)
        # ring rests at the start of the wire, instrument starts at the ring
        self._ring_p = [float(start[0]), float(start[1]), float(start[2])]
        self._ring_q = list(q0)
        self._inst_p = list(self._ring_p)
        self._inst_q = list(q0)
        self._prev_ring_p = list(self._ring_p)
        self._prev_ring_q = list(self._ring_q)
        self._vel = [0.0, 0.0, 0.0]
        self._omega = [0.0, 0.0, 0.0]
        self._grip = False
        self._holding = False
        self._offset_p = (0.0, 0.0, 0.0)   # ring pose in the instrument frame
        self._offset_q = (1.0, 0.0, 0.0, 0.0)

        self._cmd = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, False)
        self.command_log: list = []        # (step_index, OperatorCommand)
        self.step_count = 0
        self._held_steps = 0
        self._samples_emitted = 0
        self._last_wrench = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

        # scalar copies of the path tables for the hot loop
        self._coeffs = [tuple(float(v) for v in path.coeffs[j].ravel()) for j in range(path.n_segments)]
        self._n_seg = path.n_segments
        self._frame_s = [float(s) for s in path.frame_s]
        self._frame_q = [tuple(float(c) for c in q) for q in path.frames]
        self._lut_u = path.lut_u
        self._lut_s = path.lut_s
        self._lut_s_list = [float(s) for s in path.lut_s]
        self._lut_n = len(self._lut_s_list) - 1
        self._t_proj = 0.0
        self._steps_since_reseed = 0
        self._s_star = 0.0
        self._deviation = 0.0
        self._ang_dev = 0.0
        self._update_projection(force_global=True)

    # -- command interface --------------------------------------------------

    def apply_command(self, cmd: OperatorCommand, record: bool = True):
        """Latch a velocity command (zero-order hold until the next one)."""
        if not cmd.is_finite():
            if self.trial.phase in (TrialPhase.READY, TrialPhase.RUNNING):
                self.trial.phase = TrialPhase.ABORTED
                self.trial.abort_reason = "non-finite operator command"
                self.trial.events.append({"step": self.step_count, "event": "abort", "reason": self.trial.abort_reason})
            return
        vx, vy, vz = cmd.linear
        wx, wy, wz = cmd.angular
        vn = math.sqrt(vx * vx + vy * vy + vz * vz)
        if vn > self.cfg.max_lin_speed:
            r = self.cfg.max_lin_speed / vn
            vx, vy, vz = vx * r, vy * r, vz * r
        wn = math.sqrt(wx * wx + wy * wy + wz * wz)
        if wn > self.cfg.max_ang_speed:
            r = self.cfg.max_ang_speed / wn
            wx, wy, wz = wx * r, wy * r, wz * r
        self._cmd = (vx, vy, vz, wx, wy, wz, bool(cmd.grip_closed))
        if record:
            self.command_log.append((self.step_count, cmd))

    # -- stepping -----------------------------------------------------------

    def step(self):
        """Advance one fixed control period."""
        if self.trial.phase in (TrialPhase.COMPLETED, TrialPhase.ABORTED):
            return
        cfg = self.cfg
        dt = cfg.dt
        vx, vy, vz, wx, wy, wz, grip_cmd = self._cmd

        # grip edge handling
        if grip_cmd and not self._grip:
            self._on_grip_close()
        elif not grip_cmd and self._grip:
            self._on_grip_open()
        self._grip = grip_cmd

        # integrate the commanded velocities plus the admittance response to
        # the wrench computed at the end of the previous step (one-period lag)
        p = self._inst_p
        f, tau = self._last_wrench
        cl = cfg.c_lin * dt if self._holding else 0.0
        p[0] += vx * dt + cl * f[0]
        p[1] += vy * dt + cl * f[1]
        p[2] += vz * dt + cl * f[2]
        lim = cfg.workspace_limit
        for i in range(3):
            if p[i] > lim:
                p[i] = lim
            elif p[i] < -lim:
                p[i] = -lim
        # net rotation increment: commanded rate plus admittance torque rate
        rx = wx * dt
        ry = wy * dt
        rz = wz * dt
        if self._holding:
            cr = cfg.c_rot * dt
            rx += cr * tau[0]
            ry += cr * tau[1]
            rz += cr * tau[2]
        rmag = math.sqrt(rx * rx + ry * ry + rz * rz)
        if rmag > 0.0:
            h = 0.5 * rmag
            s = math.sin(h) / rmag
            dw, dx, dy, dz = math.cos(h), rx * s, ry * s, rz * s
            qw, qx, qy, qz = self._inst_q
            nw = dw * qw - dx * qx - dy * qy - dz * qz
            nx = dw * qx + dx * qw + dy * qz - dz * qy
            ny = dw * qy - dx * qz + dy * qw + dz * qx
            nz = dw * qz + dx * qy - dy * qx + dz * qw
            n = 1.0 / math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
            self._inst_q = [nw * n, nx * n, ny * n, nz * n]

        if self._holding:
            self._attach_ring()
            self._update_projection()
            if self._s_star > self.trial.progress:
                self.trial.progress = self._s_star

        # ring twist by finite difference (feeds next step's damping)
        rp, pp = self._ring_p, self._prev_ring_p
        self._vel = [(rp[0] - pp[0]) / dt, (rp[1] - pp[1]) / dt, (rp[2] - pp[2]) / dt]
        aw, ax, ay, az = self._ring_q
        bw, bx, by, bz = self._prev_ring_q
        relw = aw * bw + ax * bx + ay * by + az * bz
        relx = -aw * bx + ax * bw - ay * bz + az * by
        rely = -aw * by + ax * bz + ay * bw - az * bx
        relz = -aw * bz - ax * by + ay * bx + az * bw
        vn = math.sqrt(relx * relx + rely * rely + relz * relz)
        ang = 2.0 * math.atan2(vn, abs(relw))
        if ang > 1e-12:
            k = (ang if relw >= 0.0 else -ang) / (vn * dt)
            self._omega = [relx * k, rely * k, relz * k]
        else:
            self._omega = [0.0, 0.0, 0.0]
        self._prev_ring_p = list(rp)
        self._prev_ring_q = list(self._ring_q)

        # wrench for the next step from the post-update state
        if self._holding:
            ex, ey, ez = self._rpy_to_desired()
            f, tau = wrench_raw(
                self._ring_p[0] - self._des_p[0],
                self._ring_p[1] - self._des_p[1],
                self._ring_p[2] - self._des_p[2],
                self._vel[0], self._vel[1], self._vel[2],
                ex, ey, ez,
                self._omega[0], self._omega[1], self._omega[2],
                self.field_cfg.mode.sign, self.field_cfg,
            )
            self._last_wrench = saturate_raw(f, tau, self.field_cfg.f_max, self.field_cfg.tau_max)
        else:
            self._last_wrench = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

        # trial clock: runs only while the ring is held
        if self.trial.phase is TrialPhase.RUNNING and self._holding:
            self._held_steps += 1
            self.trial.elapsed = self._held_steps * dt
            while self.trial.elapsed * self.cfg.sample_hz + _SAMPLE_EPS >= self._samples_emitted:
                self._emit_sample()
            check_completion(self.trial, self.path, cfg.end_tolerance)

        self.step_count += 1
        if self.step_count * dt > cfg.timeout and self.trial.phase in (TrialPhase.READY, TrialPhase.RUNNING):
            self.trial.phase = TrialPhase.ABORTED
            self.trial.abort_reason = "timeout"
            self.trial.events.append({"step": self.step_count, "event": "abort", "reason": "timeout"})

    # -- grip / attachment --------------------------------------------------

    def _on_grip_close(self):
        d = math.dist(self._inst_p, self._ring_p)
        if d <= self.cfg.capture_radius:
            self._holding = True
            # freeze the ring's pose relative to the instrument tip
            inv_q = quat_conj(tuple(self._inst_q))
            dp = (
                self._ring_p[0] - self._inst_p[0],
                self._ring_p[1] - self._inst_p[1],
                self._ring_p[2] - self._inst_p[2],
            )
            self._offset_p = quat_rotate(inv_q, dp)
            self._offset_q = quat_mul(inv_q, tuple(self._ring_q))
            if self.trial.phase is TrialPhase.READY:
                self.trial.phase = TrialPhase.RUNNING
                self.trial.events.append({"step": self.step_count, "event": "start"})
                self._held_steps = 0
                self.trial.elapsed = 0.0
                self._emit_sample()
            else:
                self.trial.events.append({"step": self.step_count, "event": "regrasp"})

    def _on_grip_open(self):
        if self._holding:
            self._holding = False
            if self.trial.phase is TrialPhase.RUNNING:
                self.trial.events.append({"step": self.step_count, "event": "drop"})

    def _attach_ring(self):
        qw, qx, qy, qz = self._inst_q
        ox, oy, oz = self._offset_p
        # inline quat_rotate(q, offset)
        tx = 2.0 * (qy * oz - qz * oy)
        ty = 2.0 * (qz * ox - qx * oz)
        tz = 2.0 * (qx * oy - qy * ox)
        self._ring_p = [
            self._inst_p[0] + ox + qw * tx + (qy * tz - qz * ty),
            self._inst_p[1] + oy + qw * ty + (qz * tx - qx * tz),
            self._inst_p[2] + oz + qw * tz + (qx * ty - qy * tx),
        ]
        bw, bx, by, bz = self._offset_q
        nw = qw * bw - qx * bx - qy * by - qz * bz
        nx = qw * bx + qx * bw + qy * bz - qz * by
        ny = qw * by - qx * bz + qy * bw + qz * bx
        nz = qw * bz + qx * by - qy * bx + qz * bw
        n = 1.0 / math.sqrt(nw * nw + nx * nx + ny * ny + nz * nz)
        self._ring_q = [nw * n, nx * n, ny * n, nz * n]

    # -- projection (scalar hot path) ---------------------------------------

    def _eval_seg(self, t: float):
        j = int(t)
        if j >= self._n_seg:
            j = self._n_seg - 1
        elif j < 0:
            j = 0
        tau = t - j
        c = self._coeffs[j]
        px = c[0] + tau * (c[1] + tau * (c[2] + tau * c[3]))
        py = c[4] + tau * (c[5] + tau * (c[6] + tau * c[7]))
        pz = c[8] + tau * (c[9] + tau * (c[10] + tau * c[11]))
        dx = c[1] + tau * (2.0 * c[2] + 3.0 * tau * c[3])
        dy = c[5] + tau * (2.0 * c[6] + 3.0 * tau * c[7])
        dz = c[9] + tau * (2.0 * c[10] + 3.0 * tau * c[11])
        ddx = 2.0 * c[2] + 6.0 * tau * c[3]
        ddy = 2.0 * c[6] + 6.0 * tau * c[7]
        ddz = 2.0 * c[10] + 6.0 * tau * c[11]
        return px, py, pz, dx, dy, dz, ddx, ddy, ddz

    def _update_projection(self, force_global: bool = False):
        qx, qy, qz = self._ring_p
        self._steps_since_reseed += 1
        if force_global or self._steps_since_reseed >= 1024:
            # periodic global re-seed keeps the tracker out of wrong basins
            t, _, _, _ = self.path.project((qx, qy, qz))
            self._t_proj = t
            self._steps_since_reseed = 0
        else:
            t = self._t_proj
            for _ in range(2):
                px, py, pz, dx, dy, dz, ddx, ddy, ddz = self._eval_seg(t)
                ex, ey, ez = px - qx, py - qy, pz - qz
                g = 2.0 * (ex * dx + ey * dy + ez * dz)
                h = 2.0 * (dx * dx + dy * dy + dz * dz + ex * ddx + ey * ddy + ez * ddz)
                if h <= 1e-30:
                    break
                step = g / h
                if step > 0.05:
                    step = 0.05
                elif step < -0.05:
                    step = -0.05
                t -= step
                if t < 0.0:
                    t = 0.0
                elif t > self._n_seg:
                    t = float(self._n_seg)
                if abs(step) < 1e-12:
                    break
            self._t_proj = t
        px, py, pz, _, _, _, _, _, _ = self._eval_seg(self._t_proj)
        self._des_p = (px, py, pz)
        self._deviation = math.sqrt((px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2)
        # lut_u is a uniform grid, so the s(u) interpolation is direct indexing
        u = self._t_proj / self._n_seg
        x = u * self._lut_n
        i = int(x)
        if i >= self._lut_n:
            i = self._lut_n - 1
        frac = x - i
        ls = self._lut_s_list
        self._s_star = ls[i] + frac * (ls[i + 1] - ls[i])
        self._des_q = self._frame_at_s(self._s_star)
        # geodesic angle to the desired frame (inline of rotation_angle)
        rw, rx, ry, rz = self._ring_q
        n = 1.0 / math.sqrt(rw * rw + rx * rx + ry * ry + rz * rz)
        dw, dx_, dy_, dz_ = self._des_q
        d = abs(rw * dw + rx * dx_ + ry * dy_ + rz * dz_) * n
        self._ang_dev = 2.0 * math.acos(d if d < 1.0 else 1.0)

    def _frame_at_s(self, s: float):
        i = bisect_right(self._frame_s, s) - 1
        if i < 0:
            i = 0
        elif i > len(self._frame_s) - 2:
            i = len(self._frame_s) - 2
        s0, s1 = self._frame_s[i], self._frame_s[i + 1]
        w = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
        a, b = self._frame_q[i], self._frame_q[i + 1]
        # frames table is sign-continuous; nlerp is accurate at this density
        q = (
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
            a[3] + w * (b[3] - a[3]),
        )
        return quat_canonical(quat_normalize(q))

    def _rpy_to_desired(self):
        # inline of quat_error_rpy on (desired * conj(ring)), hot path
        aw, ax, ay, az = self._des_q
        bw, bx, by, bz = self._ring_q
        n = 1.0 / math.sqrt(bw * bw + bx * bx + by * by + bz * bz)
        bw, bx, by, bz = bw * n, -bx * n, -by * n, -bz * n
        w = aw * bw - ax * bx - ay * by - az * bz
        x = aw * bx + ax * bw + ay * bz - az * by
        y = aw * by - ax * bz + ay * bw + az * bx
        z = aw * bz + ax * by - ay * bx + az * bw
        sp = -2.0 * (x * z - w * y)
        if sp > 1.0:
            sp = 1.0
        elif sp < -1.0:
            sp = -1.0
        pitch = math.asin(sp)
        if abs(abs(pitch) - 0.5 * math.pi) < 1e-6:
            roll = 0.0
            yaw = math.atan2(-2.0 * (x * y - w * z), 1.0 - 2.0 * (x * x + z * z))
        else:
            roll = math.atan2(2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y))
            yaw = math.atan2(2.0 * (x * y + w * z), 1.0 - 2.0 * (y * y + z * z))
        return roll, pitch, yaw

    # -- sampling / snapshots -----------------------------------------------

    def _emit_sample(self):
        f, tau = self._last_wrench
        self.trial.samples.append(
            PoseSample(
                t=self.trial.elapsed,
                position=tuple(self._ring_p),
                rotation=tuple(self._ring_q),
                linear_vel=tuple(self._vel),
                angular_vel=tuple(self._omega),
                grip_closed=self._grip,
                s_star=self._s_star,
                deviation=self._deviation,
                ang_deviation=self._ang_dev,
                force=f,
                torque=tau,
            )
        )
        self._samples_emitted += 1

    @property
    def sim_time(self) -> float:
        return self.step_count * self.cfg.dt

    def snapshot(self) -> SimSnapshot:
        return SimSnapshot(
            phase=self.trial.phase,
            sim_time=self.sim_time,
            elapsed=self.trial.elapsed,
            ring_position=tuple(self._ring_p),
            ring_rotation=tuple(self._ring_q),
            instrument_position=tuple(self._inst_p),
            instrument_rotation=tuple(self._inst_q),
            linear_vel=tuple(self._vel),
            angular_vel=tuple(self._omega),
            grip_closed=self._grip,
            holding_ring=self._holding,
            s_star=self._s_star,
            deviation=self._deviation,
            ang_deviation=self._ang_dev,
            color=ring_color(self._deviation, self.cfg.d_red),
            progress=self.trial.progress,
        )

    def instrument_state(self) -> InstrumentState:
        return InstrumentState(
            pose=Pose(np.array(self._inst_p), quat_canonical(quat_normalize(tuple(self._inst_q)))),
            twist=Twist(np.array(self._vel), np.array(self._omega)),
            grip_closed=self._grip,
            holding_ring=self._holding,
        )

    # -- teleport helpers for tests and scripted scenarios -------------------

    def force_state(self, position=None, rotation=None, holding: bool | None = None):
        """Directly set instrument state (test scaffolding, not the normal API)."""
        if position is not None:
            self._inst_p = [float(v) for v in position]
        if rotation is not None:
            self._inst_q = list(quat_normalize(tuple(rotation)))
        if holding is not None:
            self._holding = holding
            self._grip = holding
            if holding:
                self._offset_p = (0.0, 0.0, 0.0)
                self._offset_q = quat_mul(quat_conj(tuple(self._inst_q)), tuple(self._ring_q))
        if self._holding:
            self._attach_ring()
        self._prev_ring_p = list(self._ring_p)
        self._prev_ring_q = list(self._ring_q)
        self._vel = [0.0, 0.0, 0.0]
        self._omega = [0.0, 0.0, 0.0]
        self._update_projection(force_global=True)


def replay(path: WirePath, field_cfg: ForceFieldConfig, sim_cfg: SimConfig, command_log, n_steps: int) -> TrialEngine:
    """Re-run a trial from a recorded command stream; bit-identical to the original."""
    engine = TrialEngine(path, field_cfg, sim_cfg)
    log = sorted(command_log, key=lambda e: e[0])
    idx = 0
    for _ in range(n_steps):
        while idx < len(log) and log[idx][0] <= engine.step_count:
            engine.apply_command(log[idx][1], record=False)
            idx += 1
        engine.step()
        if engine.trial.phase in (TrialPhase.COMPLETED, TrialPhase.ABORTED):
            break
    return engine
