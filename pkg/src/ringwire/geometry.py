"""Reference wire geometry and rotation utilities.

The task path is a piecewise cubic (Catmull-Rom style Hermite segments)
through fixed control points, with:

- an arc-length lookup table mapping the global curve parameter u in [0, 1]
  to cumulative arc length s in meters,
- a dense table of tangent-aligned orientation frames built by the
  double-reflection rotation-minimizing construction plus a linear twist
  about the tangent from start to end.

Quaternions are stored (w, x, y, z). All units are SI (meters, radians);
reporting layers convert to millimeters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

# ---------------------------------------------------------------------------
# quaternion helpers
# ---------------------------------------------------------------------------


def quat_norm(q) -> float:
    w, x, y, z = q
    return math.sqrt(w * w + x * x + y * y + z * z)


def quat_normalize(q):
    n = quat_norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion")
    w, x, y, z = q
    return (w / n, x / n, y / n, z / n)


def quat_canonical(q):
    """Flip sign so the scalar part is non-negative (double-cover pick)."""
    w, x, y, z = q
    if w < 0.0 or (w == 0.0 and (x < 0.0 or (x == 0.0 and (y < 0.0 or (y == 0.0 and z < 0.0))))):
        return (-w, -x, -y, -z)
    return (w, x, y, z)


def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_conj(q):
    w, x, y, z = q
    return (w, -x, -y, -z)


def quat_from_axis_angle(axis, angle: float):
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n < 1e-300:
        return (1.0, 0.0, 0.0, 0.0)
    h = 0.5 * angle
    s = math.sin(h) / n
    return (math.cos(h), ax * s, ay * s, az * s)


def quat_rotate(q, v):
    """Rotate 3-vector v by unit quaternion q."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * cross(q.xyz, v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + cross(q.xyz, t)
    return (
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=float,
    )


def quat_from_matrix(R) -> tuple:
    """Shepperd's method; returns a unit quaternion with w >= 0."""
    tr = R[0][0] + R[1][1] + R[2][2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = (0.25 * s, (R[2][1] - R[1][2]) / s, (R[0][2] - R[2][0]) / s, (R[1][0] - R[0][1]) / s)
    elif R[0][0] > R[1][1] and R[0][0] > R[2][2]:
        s = math.sqrt(1.0 + R[0][0] - R[1][1] - R[2][2]) * 2.0
        q = ((R[2][1] - R[1][2]) / s, 0.25 * s, (R[0][1] + R[1][0]) / s, (R[0][2] + R[2][0]) / s)
    elif R[1][1] > R[2][2]:
        s = math.sqrt(1.0 + R[1][1] - R[0][0] - R[2][2]) * 2.0
        q = ((R[0][2] - R[2][0]) / s, (R[0][1] + R[1][0]) / s, 0.25 * s, (R[1][2] + R[2][1]) / s)
    else:
        s = math.sqrt(1.0 + R[2][2] - R[0][0] - R[1][1]) * 2.0
        q = ((R[1][0] - R[0][1]) / s, (R[0][2] + R[2][0]) / s, (R[1][2] + R[2][1]) / s, 0.25 * s)
    return quat_canonical(quat_normalize(q))


def quat_slerp(a, b, t: float):
    """Spherical interpolation taking the short arc."""
    dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
    if dot < 0.0:
        b = (-b[0], -b[1], -b[2], -b[3])
        dot = -dot
    if dot > 0.9999995:
        q = tuple(a[i] + t * (b[i] - a[i]) for i in range(4))
        return quat_normalize(q)
    theta = math.acos(min(1.0, dot))
    s = math.sin(theta)
    wa = math.sin((1.0 - t) * theta) / s
    wb = math.sin(t * theta) / s
    return (
        wa * a[0] + wb * b[0],
        wa * a[1] + wb * b[1],
        wa * a[2] + wb * b[2],
        wa * a[3] + wb * b[3],
    )


def _require_unit(q, tol: float = 1e-9):
    if abs(quat_norm(q) - 1.0) > tol:
        raise ValueError(f"quaternion not unit norm: {q}")


_GIMBAL_EPS = 1e-6


def quat_error_rpy(desired, current):
    """Roll-pitch-yaw of the relative rotation desired * current^-1.

    Intrinsic Z-Y-X convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll).
    Near the pitch singularity (|pitch| within ~1e-6 of pi/2) roll is
    forced to 0 and yaw absorbs the remaining rotation.
    """
    _require_unit(desired)
    _require_unit(current)
    w, x, y, z = quat_normalize(quat_mul(desired, quat_conj(current)))
    # elements of the rotation matrix needed for ZYX extraction
    r20 = 2.0 * (x * z - w * y)
    sp = -r20
    if sp > 1.0:
        sp = 1.0
    elif sp < -1.0:
        sp = -1.0
    pitch = math.asin(sp)
    if abs(abs(pitch) - 0.5 * math.pi) < _GIMBAL_EPS:
        # gimbal lock: only yaw +/- roll is observable; put it all in yaw
        r01 = 2.0 * (x * y - w * z)
        r11 = 1.0 - 2.0 * (x * x + z * z)
        roll = 0.0
        yaw = math.atan2(-r01, r11)
    else:
        r21 = 2.0 * (y * z + w * x)
        r22 = 1.0 - 2.0 * (x * x + y * y)
        r10 = 2.0 * (x * y + w * z)
        r00 = 1.0 - 2.0 * (y * y + z * z)
        roll = math.atan2(r21, r22)
        yaw = math.atan2(r10, r00)
    return (roll, pitch, yaw)


def rotation_angle(q1, q2) -> float:
    """Geodesic angle between two rotations, in [0, pi]."""
    _require_unit(q1)
    _require_unit(q2)
    d = abs(q1[0] * q2[0] + q1[1] * q2[1] + q1[2] * q2[2] + q1[3] * q2[3])
    if d > 1.0:
        d = 1.0
    return 2.0 * math.acos(d)


# ---------------------------------------------------------------------------
# pose / twist
# ---------------------------------------------------------------------------


@dataclass
class Pose:
    """Rigid-body pose: translation (m) and unit quaternion rotation."""

    translation: np.ndarray
    rotation: tuple

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=float)
        if self.translation.shape != (3,):
            raise ValueError("translation must be a 3-vector")
        if not np.all(np.isfinite(self.translation)):
            raise ValueError("translation must be finite")
        q = tuple(float(c) for c in self.rotation)
        _require_unit(q)
        self.rotation = quat_canonical(q)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), (1.0, 0.0, 0.0, 0.0))


@dataclass
class Twist:
    """Linear (m/s) and angular (rad/s) velocity."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float)
        self.angular = np.asarray(self.angular, dtype=float)
        if self.linear.shape != (3,) or self.angular.shape != (3,):
            raise ValueError("twist components must be 3-vectors")
        if not (np.all(np.isfinite(self.linear)) and np.all(np.isfinite(self.angular))):
            raise ValueError("twist must be finite")

    @staticmethod
    def zero() -> "Twist":
        return Twist(np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------------------
# wire path
# ---------------------------------------------------------------------------

_LUT_N = 4096       # arc-length table intervals
_FRAME_N = 2048     # rotation-minimizing frame samples
_COARSE_N = 512     # coarse projection grid


@dataclass
class WirePath:
    control_points: np.ndarray          # (n, 3)
    twist_angle: float                  # total twist about the tangent, rad
    coeffs: np.ndarray = field(init=False)      # (n_seg, 3, 4): a + b*t + c*t^2 + d*t^3
    lut_u: np.ndarray = field(init=False)
    lut_s: np.ndarray = field(init=False)
    frame_s: np.ndarray = field(init=False)
    frames: np.ndarray = field(init=False)      # (m, 4) unit quaternions
    _coarse_t: np.ndarray = field(init=False)
    _coarse_pts: np.ndarray = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.control_points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 4:
            raise ValueError("need at least 4 control points of dimension 3")
        self.control_points = pts
        self.coeffs = _catmull_rom_coeffs(pts)
        self._build_arclength_table()
        self._build_frames()
        tc = np.linspace(0.0, self.n_segments, _COARSE_N)
        self._coarse_t = tc
        self._coarse_pts = self.point_at_t(tc)

    # -- parameterization ---------------------------------------------------

    @property
    def n_segments(self) -> int:
        return self.coeffs.shape[0]

    @property
    def length(self) -> float:
        return float(self.lut_s[-1])

    def point_at_t(self, t):
        """Evaluate at global segment parameter t in [0, n_segments]."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        j = np.clip(np.floor(t).astype(int), 0, self.n_segments - 1)
        tau = t - j
        c = self.coeffs[j]  # (k, 3, 4)
        p = c[:, :, 0] + tau[:, None] * (c[:, :, 1] + tau[:, None] * (c[:, :, 2] + tau[:, None] * c[:, :, 3]))
        return p[0] if scalar else p

    def deriv_at_t(self, t: float) -> np.ndarray:
        j = min(max(int(math.floor(t)), 0), self.n_segments - 1)
        tau = t - j
        c = self.coeffs[j]
        return c[:, 1] + tau * (2.0 * c[:, 2] + tau * 3.0 * c[:, 3])

    def _second_deriv_at_t(self, t: float) -> np.ndarray:
        j = min(max(int(math.floor(t)), 0), self.n_segments - 1)
        tau = t - j
        c = self.coeffs[j]
        return 2.0 * c[:, 2] + tau * 6.0 * c[:, 3]

    def s_from_t(self, t: float) -> float:
        u = t / self.n_segments
        return float(np.interp(u, self.lut_u, self.lut_s))

    def t_from_s(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        u = float(np.interp(s, self.lut_s, self.lut_u))
        return u * self.n_segments

    def point_at_s(self, s: float) -> np.ndarray:
        return self.point_at_t(self.t_from_s(s))

    def tangent_at_s(self, s: float) -> np.ndarray:
        d = self.deriv_at_t(self.t_from_s(s))
        return d / np.linalg.norm(d)

    def frame_at_s(self, s: float) -> tuple:
        """Tangent-aligned frame (unit quaternion) at arc length s, by slerp
        between dense rotation-minimizing samples."""
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self.frame_s, s, side="right")) - 1
        i = min(max(i, 0), len(self.frame_s) - 2)
        s0, s1 = self.frame_s[i], self.frame_s[i + 1]
        w = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
        q = quat_slerp(tuple(self.frames[i]), tuple(self.frames[i + 1]), w)
        return quat_canonical(q)

    def pose_at_s(self, s: float) -> Pose:
        return Pose(self.point_at_s(s), self.frame_at_s(s))

    # -- construction internals --------------------------------------------

    def _build_arclength_table(self):
        u = np.linspace(0.0, 1.0, _LUT_N + 1)
        p = self.point_at_t(u * self.n_segments)
        seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        if not np.all(np.diff(s) > 0.0):
            raise ValueError("degenerate path: arc length not strictly increasing")
        self.lut_u = u
        self.lut_s = s

    def _build_frames(self):
        m = _FRAME_N
        t = np.linspace(0.0, self.n_segments, m)
        pts = self.point_at_t(t)
        tangents = np.array([self.deriv_at_t(ti) for ti in t])
        tangents /= np.linalg.norm(tangents, axis=1)[:, None]
        s_vals = np.array([self.s_from_t(ti) for ti in t])

        # initial frame: x along the tangent, y from a fixed world up
        x0 = tangents[0]
        up = np.array([0.0, 0.0, 1.0])
        if abs(np.dot(up, x0)) > 0.99:
            up = np.array([0.0, 1.0, 0.0])
        y0 = np.cross(up, x0)
        y0 /= np.linalg.norm(y0)
        z0 = np.cross(x0, y0)
        frames_r = np.empty((m, 3))  # rotation-minimizing normal (the y axis)
        frames_r[0] = y0

        # double-reflection transport of the normal along the samples
        r = y0
        for i in range(m - 1):
            v1 = pts[i + 1] - pts[i]
            c1 = float(np.dot(v1, v1))
            if c1 < 1e-30:
                frames_r[i + 1] = r
                continue
            rl = r - (2.0 / c1) * np.dot(v1, r) * v1
            tl = tangents[i] - (2.0 / c1) * np.dot(v1, tangents[i]) * v1
            v2 = tangents[i + 1] - tl
            c2 = float(np.dot(v2, v2))
            if c2 > 1e-30:
                r = rl - (2.0 / c2) * np.dot(v2, rl) * v2
            else:
                r = rl
            r = r - np.dot(r, tangents[i + 1]) * tangents[i + 1]
            r /= np.linalg.norm(r)
            frames_r[i + 1] = r

        total = self.lut_s[-1]
        quats = np.empty((m, 4))
        prev = None
        for i in range(m):
            x = tangents[i]
            y = frames_r[i]
            z = np.cross(x, y)
            R = np.column_stack([x, y, z])
            q = quat_from_matrix(R)
            # linear twist about the local tangent (body x axis)
            tw = quat_from_axis_angle((1.0, 0.0, 0.0), self.twist_angle * s_vals[i] / total)
            q = quat_normalize(quat_mul(q, tw))
            if prev is not None and (q[0] * prev[0] + q[1] * prev[1] + q[2] * prev[2] + q[3] * prev[3]) < 0.0:
                q = (-q[0], -q[1], -q[2], -q[3])
            quats[i] = q
            prev = q
        self.frame_s = s_vals
        self.frames = quats

    # -- projection ---------------------------------------------------------

    def refine_t(self, query, t0: float, iters: int = 20, tol: float = 1e-10) -> float:
        """Newton refinement of the squared-distance minimizer from t0."""
        q = np.asarray(query, dtype=float)
        t = min(max(t0, 0.0), float(self.n_segments))
        for _ in range(iters):
            d = self.point_at_t(t) - q
            dp = self.deriv_at_t(t)
            ddp = self._second_deriv_at_t(t)
            g = 2.0 * float(np.dot(d, dp))
            h = 2.0 * (float(np.dot(dp, dp)) + float(np.dot(d, ddp)))
            if h <= 1e-30:
                break
            step = g / h
            # keep the step within one coarse cell to stay in the local basin
            cell = self.n_segments / (_COARSE_N - 1)
            if step > cell:
                step = cell
            elif step < -cell:
                step = -cell
            t_new = min(max(t - step, 0.0), float(self.n_segments))
            if abs(t_new - t) < tol:
                t = t_new
                break
            t = t_new
        return t

    def project(self, query) -> tuple:
        """Globally closest point: returns (t_star, s_star, point, distance)."""
        q = np.asarray(query, dtype=float)
        d2 = np.einsum("ij,ij->i", self._coarse_pts - q, self._coarse_pts - q)
        i = int(np.argmin(d2))
        best_t = float(self._coarse_t[i])
        t = self.refine_t(q, best_t)
        # guard against refinement leaving the basin
        cand = [t]
        if i > 0:
            cand.append(self.refine_t(q, float(self._coarse_t[i - 1])))
        if i < _COARSE_N - 1:
            cand.append(self.refine_t(q, float(self._coarse_t[i + 1])))
        best = None
        for tc in cand:
            p = self.point_at_t(tc)
            dist = float(np.linalg.norm(p - q))
            if best is None or dist < best[3]:
                best = (tc, self.s_from_t(tc), p, dist)
        return best

    # -- export -------------------------------------------------------------

    def to_json(self, samples: int = 256) -> str:
        """Serialize the rendered curve for clients (same geometry everywhere)."""
        s = np.linspace(0.0, self.length, samples)
        entries = []
        for si in s:
            p = self.point_at_s(float(si))
            q = self.frame_at_s(float(si))
            entries.append({"s": float(si), "p": [float(v) for v in p], "q": [float(v) for v in q]})
        doc = {
            "control_points": [[float(v) for v in row] for row in self.control_points],
            "twist_angle": float(self.twist_angle),
            "length": self.length,
            "samples": entries,
        }
        return json.dumps(doc, sort_keys=True)


def _catmull_rom_coeffs(pts: np.ndarray) -> np.ndarray:
    """Hermite coefficients for uniform Catmull-Rom tangents (C1 at joints)."""
    n = pts.shape[0]
    tangents = np.empty_like(pts)
    tangents[0] = pts[1] - pts[0]
    tangents[-1] = pts[-1] - pts[-2]
    tangents[1:-1] = 0.5 * (pts[2:] - pts[:-2])
    n_seg = n - 1
    coeffs = np.empty((n_seg, 3, 4))
    for j in range(n_seg):
        p0, p1 = pts[j], pts[j + 1]
        m0, m1 = tangents[j], tangents[j + 1]
        coeffs[j, :, 0] = p0
        coeffs[j, :, 1] = m0
        coeffs[j, :, 2] = -3.0 * p0 + 3.0 * p1 - 2.0 * m0 - m1
        coeffs[j, :, 3] = 2.0 * p0 - 2.0 * p1 + m0 + m1
    return coeffs


# canonical task path: S-curve with excursions on all three axes, ~0.24 m long
_CANONICAL_CONTROL_POINTS = (
    (0.000, 0.000, 0.000),
    (0.025, 0.020, 0.010),
    (0.055, 0.030, -0.010),
    (0.085, 0.000, -0.020),
    (0.110, -0.030, 0.000),
    (0.140, -0.020, 0.025),
    (0.165, 0.010, 0.030),
    (0.190, 0.030, 0.015),
)

_CANONICAL_TWIST = 7.0 * math.pi / 6.0  # 210 degrees of twist start to end


def build_canonical_path() -> WirePath:
    """The fixed training path. Deterministic: same float inputs, same tables."""
    return WirePath(np.array(_CANONICAL_CONTROL_POINTS), _CANONICAL_TWIST)


def closest_pose(path: WirePath, query) -> tuple:
    """Project a point onto the path.

    Returns (s_star, desired_pose, distance): arc length of the closest
    point, the tangent-aligned desired pose there, and the Euclidean
    distance from the query.
    """
    q = np.asarray(query, dtype=float)
    if q.shape != (3,) or not np.all(np.isfinite(q)):
        raise ValueError("query must be a finite 3-vector")
    _, s_star, p, dist = path.project(q)
    return s_star, Pose(p, path.frame_at_s(s_star)), dist
