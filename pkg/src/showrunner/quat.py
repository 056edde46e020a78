"""Quaternion and small-vector helpers.

Quaternions are stored (w, x, y, z). Coordinates are right-handed, Y up,
ground plane XZ; angles in radians. Functions accept plain sequences or
numpy arrays and return float64 numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

UNIT_TOLERANCE = 1e-6


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n == 0.0 or not math.isfinite(n):
        raise ValueError("cannot normalize zero or non-finite quaternion")
    if abs(n - 1.0) <= 4e-16:
        return q.copy()  # already unit to the last ulp; keep bit-stable
    return q / n


def is_unit(q, tol: float = UNIT_TOLERANCE) -> bool:
    q = np.asarray(q, dtype=float)
    return abs(float(np.dot(q, q)) - 1.0) <= 2.0 * tol


def canonical(q) -> np.ndarray:
    """Hemisphere-stable copy: flips sign so w >= 0 (used for serialization)."""
    q = np.asarray(q, dtype=float)
    return -q if q[0] < 0.0 else q.copy()


def mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def rotate(q, v) -> np.ndarray:
    """Rotate vector v by unit quaternion q (q v q*)."""
    w, x, y, z = q
    vx, vy, vz = v
    # t = 2 * cross(q.xyz, v)
    tx = 2.0 * (y * vz - z * vy)
    ty = 2.0 * (z * vx - x * vz)
    tz = 2.0 * (x * vy - y * vx)
    # v' = v + w*t + cross(q.xyz, t)
    return np.array([
        vx + w * tx + (y * tz - z * ty),
        vy + w * ty + (z * tx - x * tz),
        vz + w * tz + (x * ty - y * tx),
    ])


def from_axis_angle(axis, angle: float) -> np.ndarray:
    ax = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(ax))
    if n == 0.0:
        raise ValueError("zero rotation axis")
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), ax[0] * s, ax[1] * s, ax[2] * s])


def from_yaw(yaw: float) -> np.ndarray:
    """Rotation about +Y by yaw."""
    half = 0.5 * yaw
    return np.array([math.cos(half), 0.0, math.sin(half), 0.0])


def slerp(a, b, alpha: float) -> np.ndarray:
    """Shortest-path spherical interpolation between unit quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    dot = aw * bw + ax * bx + ay * by + az * bz
    if dot < 0.0:
        bw, bx, by, bz = -bw, -bx, -by, -bz
        dot = -dot
    if alpha == 0.0:
        return np.array([aw, ax, ay, az])
    if alpha == 1.0:
        return np.array([bw, bx, by, bz])
    if dot > 1.0 - 1e-9:
        # nearly parallel: nlerp avoids precision loss in acos
        w = aw + (bw - aw) * alpha
        x = ax + (bx - ax) * alpha
        y = ay + (by - ay) * alpha
        z = az + (bz - az) * alpha
        n = math.sqrt(w * w + x * x + y * y + z * z)
        return np.array([w / n, x / n, y / n, z / n])
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    ka = math.sin((1.0 - alpha) * theta) / s
    kb = math.sin(alpha * theta) / s
    return np.array([aw * ka + bw * kb, ax * ka + bx * kb,
                     ay * ka + by * kb, az * ka + bz * kb])


def yaw_twist(q) -> float:
    """Twist angle about +Y of q (swing-twist split q = twist . swing)."""
    w, _, y, _ = q
    if w == 0.0 and y == 0.0:
        return 0.0
    return 2.0 * math.atan2(y, w)


def remove_yaw(q) -> np.ndarray:
    """Swing part of q after factoring out the +Y twist: twist^-1 . q."""
    if q[0] == 0.0 and q[2] == 0.0:
        return np.asarray(q, dtype=float).copy()  # twist undefined, treat as zero
    twist = normalize(np.array([q[0], 0.0, q[2], 0.0]))
    return mul(conjugate(twist), q)


def wrap_angle(a: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    a = math.fmod(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


def quat_distance(a, b) -> float:
    """Sign-insensitive Euclidean distance between quaternions."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def mul_many(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise quaternion product of (N,4) arrays."""
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    out = np.empty_like(a)
    out[:, 0] = aw * bw - ax * bx - ay * by - az * bz
    out[:, 1] = aw * bx + ax * bw + ay * bz - az * by
    out[:, 2] = aw * by - ax * bz + ay * bw + az * bx
    out[:, 3] = aw * bz + ax * by - ay * bx + az * bw
    return out
