"""Spring-damper training force field.

Three modes share one wrench law. The stiffness term pulls the instrument
toward the desired pose in Convergent mode, pushes it away in Divergent
mode, and vanishes in Null mode; damping opposes the current rates in all
modes. The wrench is active only while the gripper is closed on the ring,
and is norm-saturated so the divergent (unstable) field stays bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .geometry import Pose, Twist, quat_error_rpy, quat_norm


class FieldMode(Enum):
    CONVERGENT = "convergent"
    DIVERGENT = "divergent"
    NULL = "null"

    @property
    def sign(self) -> float:
        """Stiffness sign: +1 convergent (restoring), -1 divergent, 0 null."""
        if self is FieldMode.CONVERGENT:
            return 1.0
        if self is FieldMode.DIVERGENT:
            return -1.0
        return 0.0

    @staticmethod
    def from_str(s: str) -> "FieldMode":
        key = s.strip().lower()
        aliases = {"c": "convergent", "d": "divergent", "n": "null"}
        return FieldMode(aliases.get(key, key))


@dataclass
class ForceFieldConfig:
    mode: FieldMode = FieldMode.NULL
    k_t: float = 150.0      # translational stiffness, N/m
    k_r: float = 0.05       # rotational stiffness, N*m/rad
    d_t: float = 10.0       # translational damping, N*s/m
    d_r: float = 0.002      # rotational damping, N*m*s/rad
    f_max: float = 4.0      # force saturation, N
    tau_max: float = 0.05   # torque saturation, N*m

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = FieldMode.from_str(self.mode)
        if min(self.k_t, self.k_r, self.d_t, self.d_r) < 0:
            raise ValueError("gains must be non-negative")
        if self.f_max <= 0 or self.tau_max <= 0:
            raise ValueError("saturation limits must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "k_t": self.k_t,
            "k_r": self.k_r,
            "d_t": self.d_t,
            "d_r": self.d_r,
            "f_max": self.f_max,
            "tau_max": self.tau_max,
        }

    @staticmethod
    def from_dict(d: dict) -> "ForceFieldConfig":
        return ForceFieldConfig(**d)


@dataclass
class Wrench:
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise ValueError("wrench must be finite")

    @staticmethod
    def zero() -> "Wrench":
        return Wrench(np.zeros(3), np.zeros(3))


def wrench_raw(dx, dy, dz, vx, vy, vz, er, ep, ey, wx, wy, wz, sigma, cfg: ForceFieldConfig):
    """Pre-saturation wrench from scalar state, as plain tuples.

    (dx,dy,dz) is T_C - T_D; (er,ep,ey) is the roll-pitch-yaw of the
    relative rotation from current to desired. With sigma=+1 both terms
    restore toward the desired pose; damping always opposes the rates.
    Hot-path kernel shared with the simulator loop.
    """
    skt = sigma * cfg.k_t
    skr = sigma * cfg.k_r
    return (
        (-skt * dx - cfg.d_t * vx, -skt * dy - cfg.d_t * vy, -skt * dz - cfg.d_t * vz),
        (skr * er - cfg.d_r * wx, skr * ep - cfg.d_r * wy, skr * ey - cfg.d_r * wz),
    )


def saturate_raw(f, tau, f_max: float, tau_max: float):
    fx, fy, fz = f
    tx, ty, tz = tau
    fn = math.sqrt(fx * fx + fy * fy + fz * fz)
    if fn > f_max:
        r = f_max / fn
        fx, fy, fz = fx * r, fy * r, fz * r
    tn = math.sqrt(tx * tx + ty * ty + tz * tz)
    if tn > tau_max:
        r = tau_max / tn
        tx, ty, tz = tx * r, ty * r, tz * r
    return (fx, fy, fz), (tx, ty, tz)


def saturate(w: Wrench, cfg: ForceFieldConfig) -> Wrench:
    """Norm-rescale force and torque to the caps, preserving direction."""
    f, tau = saturate_raw(tuple(w.force), tuple(w.torque), cfg.f_max, cfg.tau_max)
    return Wrench(np.array(f), np.array(tau))


def compute_wrench(
    current: Pose,
    twist: Twist,
    desired: Pose,
    cfg: ForceFieldConfig,
    grip_closed: bool,
) -> Wrench:
    """Field wrench on the instrument tip; zero unless the grip is closed."""
    if abs(quat_norm(current.rotation) - 1.0) > 1e-9 or abs(quat_norm(desired.rotation) - 1.0) > 1e-9:
        raise ValueError("pose quaternions must be unit norm")
    if not grip_closed:
        return Wrench.zero()
    err = quat_error_rpy(desired.rotation, current.rotation)
    d = current.translation - desired.translation
    f, tau = wrench_raw(
        d[0], d[1], d[2],
        twist.linear[0], twist.linear[1], twist.linear[2],
        err[0], err[1], err[2],
        twist.angular[0], twist.angular[1], twist.angular[2],
        cfg.mode.sign, cfg,
    )
    f, tau = saturate_raw(f, tau, cfg.f_max, cfg.tau_max)
    return Wrench(np.array(f), np.array(tau))


__all__ = [
    "FieldMode",
    "ForceFieldConfig",
    "Wrench",
    "compute_wrench",
    "saturate",
    "wrench_raw",
    "saturate_raw",
]
