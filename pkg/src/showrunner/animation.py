"""Keyframed clips: sampling, blending, root-motion extraction and the
loop-seam metric used to judge idle loop quality.

Clips are immutable after load; sampling is side-effect-free. A clip tagged
``idle`` must be loopable; ``salient`` clips play once and hand over to an
idle loop (see direction module).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .skeleton import Pose, Skeleton, Transform, bind_pose, world_positions

SALIENT = "salient"
IDLE = "idle"
IN_PLACE = "in_place"
ROOT_MOTION = "root_motion"

# Idle clips whose seam exceeds this default are flagged by validation; the
# visibility threshold is empirical and shows may override it.
DEFAULT_SEAM_THRESHOLD = 0.02


@dataclass
class Keyframe:
    time: float
    value: Transform


@dataclass
class Clip:
    name: str
    skeleton: str
    duration: float
    tracks: dict[str, list[Keyframe]]
    loopable: bool = False
    salience: str = SALIENT
    root_mode: str = IN_PLACE
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"clip {self.name!r} duration must be > 0")

    def track_names(self) -> list[str]:
        return list(self.tracks)


def clip_violations(clip: Clip, skeleton: Skeleton | None = None) -> list[str]:
    """Invariant check for a loaded clip; empty list means valid."""
    problems = []
    if clip.duration <= 0:
        problems.append(f"clip {clip.name!r}: duration must be > 0")
    if clip.salience not in (SALIENT, IDLE):
        problems.append(f"clip {clip.name!r}: unknown salience {clip.salience!r}")
    if clip.root_mode not in (IN_PLACE, ROOT_MOTION):
        problems.append(f"clip {clip.name!r}: unknown root mode {clip.root_mode!r}")
    if clip.salience == IDLE and not clip.loopable:
        problems.append(f"clip {clip.name!r}: idle clips must be loopable")
    for bone, keys in clip.tracks.items():
        if not keys:
            problems.append(f"clip {clip.name!r}: empty track {bone!r}")
            continue
        last = -math.inf
        for k in keys:
            if k.time <= last:
                problems.append(
                    f"clip {clip.name!r}: track {bone!r} times not strictly increasing")
                break
            last = k.time
        if keys[0].time < 0:
            problems.append(f"clip {clip.name!r}: track {bone!r} starts before t=0")
        if keys[-1].time > clip.duration + 1e-12:
            problems.append(
                f"clip {clip.name!r}: track {bone!r} keyframe at "
                f"{keys[-1].time} exceeds duration {clip.duration}")
        if skeleton is not None and not skeleton.has_bone(bone):
            problems.append(
                f"clip {clip.name!r}: track {bone!r} not in skeleton {skeleton.name!r}")
    return problems


class _PackedTrack:
    """Keyframe track flattened to float tuples; scalar math keeps the
    per-tick sampling cost flat in tight show loops."""

    __slots__ = ("times", "trans", "rots")

    def __init__(self, keys: list[Keyframe]):
        self.times = [k.time for k in keys]
        self.trans = [tuple(k.value.translation) for k in keys]
        self.rots = [tuple(k.value.rotation) for k in keys]

    def sample(self, t: float):
        times = self.times
        i = bisect_right(times, t) - 1
        if i < 0:
            return self.trans[0], self.rots[0]  # before first key: clamp
        if i >= len(times) - 1 or times[i] == t:
            return self.trans[i], self.rots[i]
        a = (t - times[i]) / (times[i + 1] - times[i])
        b = 1.0 - a
        (x0, y0, z0), (x1, y1, z1) = self.trans[i], self.trans[i + 1]
        return ((x0 * b + x1 * a, y0 * b + y1 * a, z0 * b + z1 * a),
                _slerp_scalar(self.rots[i], self.rots[i + 1], a))


def _slerp_scalar(qa, qb, alpha: float):
    """Shortest-path slerp on plain float 4-tuples."""
    aw, ax, ay, az = qa
    bw, bx, by, bz = qb
    dot = aw * bw + ax * bx + ay * by + az * bz
    if dot < 0.0:
        bw, bx, by, bz = -bw, -bx, -by, -bz
        dot = -dot
    if dot > 1.0 - 1e-9:
        w = aw + (bw - aw) * alpha
        x = ax + (bx - ax) * alpha
        y = ay + (by - ay) * alpha
        z = az + (bz - az) * alpha
        n = math.sqrt(w * w + x * x + y * y + z * z)
        return (w / n, x / n, y / n, z / n)
    theta = math.acos(dot if dot < 1.0 else 1.0)
    s = math.sin(theta)
    ka = math.sin((1.0 - alpha) * theta) / s
    kb = math.sin(alpha * theta) / s
    return (aw * ka + bw * kb, ax * ka + bx * kb,
            ay * ka + by * kb, az * ka + bz * kb)


def _binding(clip: Clip, skeleton: Skeleton):
    """Per-bone packed tracks plus bind arrays, cached per skeleton."""
    cached = clip._cache.get(skeleton.name)
    if cached is not None:
        return cached
    if clip.skeleton != skeleton.name:
        raise ValueError(
            f"clip {clip.name!r} is authored for skeleton {clip.skeleton!r}, "
            f"got {skeleton.name!r}")
    bind = bind_pose(skeleton)
    packed = [None] * len(skeleton)
    for bone_name, keys in clip.tracks.items():
        packed[skeleton.bone_index(bone_name)] = _PackedTrack(keys)
    cached = (packed, bind.translations, bind.rotations)
    clip._cache[skeleton.name] = cached
    return cached


def sample_clip(clip: Clip, skeleton: Skeleton, t: float, wrap: bool = False) -> Pose:
    """Pose at time t: lerp translations, shortest-path slerp rotations.

    t past the duration clamps (wrap=False) or wraps modulo duration
    (wrap=True, loopable clips only). Bones without a track hold bind_local.
    """
    if t < 0:
        raise ValueError(f"sample time must be >= 0, got {t}")
    if wrap:
        if not clip.loopable:
            raise ValueError(f"clip {clip.name!r} is not loopable, cannot wrap")
        t = math.fmod(t, clip.duration)
    elif t > clip.duration:
        t = clip.duration
    packed, bind_t, bind_r = _binding(clip, skeleton)
    translations = bind_t.copy()
    rotations = bind_r.copy()
    for i, track in enumerate(packed):
        if track is not None:
            translations[i], rotations[i] = track.sample(t)
    return Pose(skeleton, translations, rotations)


def _slerp_rows(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """Row-wise shortest-path slerp of (J,4) quaternion arrays."""
    dots = np.sum(a * b, axis=1)
    b = np.where(dots[:, None] < 0.0, -b, b)
    dots = np.abs(dots)
    out = a + (b - a) * alpha  # nlerp fallback, overwritten where angle is real
    wide = dots < 1.0 - 1e-9
    if np.any(wide):
        theta = np.arccos(np.clip(dots[wide], -1.0, 1.0))
        s = np.sin(theta)
        ka = np.sin((1.0 - alpha) * theta) / s
        kb = np.sin(alpha * theta) / s
        out[wide] = a[wide] * ka[:, None] + b[wide] * kb[:, None]
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    return out / norms


def crossfade(a: Pose, b: Pose, alpha: float) -> Pose:
    """Per-bone blend of two poses on the same skeleton, alpha in [0,1]."""
    if a.skeleton.name != b.skeleton.name or len(a.translations) != len(b.translations):
        raise ValueError("crossfade poses are on different skeletons")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0,1], got {alpha}")
    if alpha == 0.0:
        return a.copy()
    if alpha == 1.0:
        return b.copy()
    translations = a.translations * (1.0 - alpha) + b.translations * alpha
    rotations = _slerp_rows(a.rotations, b.rotations, alpha)
    return Pose(a.skeleton, translations, rotations)


@dataclass
class RootTrajectory:
    """Ground-plane displacement (x,z) and yaw over clip time, relative to
    the clip start; the capsule layer replays this while the bones stay put."""

    times: np.ndarray
    displacement: np.ndarray  # (K,2) meters
    yaw: np.ndarray           # (K,) radians, unwrapped

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.displacement = np.asarray(self.displacement, dtype=float).reshape(-1, 2)
        self.yaw = np.asarray(self.yaw, dtype=float)

    def sample(self, t: float) -> tuple[float, float, float]:
        """(dx, dz, yaw) at time t; clamps outside the keyed range."""
        times = self.times
        i = int(np.searchsorted(times, t, side="right")) - 1
        if i < 0:
            return float(self.displacement[0, 0]), float(self.displacement[0, 1]), float(self.yaw[0])
        if i >= len(times) - 1 or times[i] == t:
            return float(self.displacement[i, 0]), float(self.displacement[i, 1]), float(self.yaw[i])
        a = (t - times[i]) / (times[i + 1] - times[i])
        d = self.displacement[i] * (1.0 - a) + self.displacement[i + 1] * a
        y = self.yaw[i] * (1.0 - a) + self.yaw[i + 1] * a
        return float(d[0]), float(d[1]), float(y)

    def end_displacement(self) -> np.ndarray:
        return self.displacement[-1].copy()

    def end_yaw(self) -> float:
        return float(self.yaw[-1])


def extract_root_motion(clip: Clip, skeleton: Skeleton) -> tuple[Clip, RootTrajectory]:
    """Split a travelling clip into an in-place clip plus the removed root
    trajectory, so a capsule can drive the motion ("walk on the spot").

    The in-place clip keeps the root's ground-plane translation and yaw
    frozen at their clip-start values; vertical motion stays in the clip.
    """
    if clip.root_mode != ROOT_MOTION:
        raise ValueError(f"clip {clip.name!r} is already in-place")
    root_name = skeleton.root.name
    keys = clip.tracks.get(root_name)
    if not keys:
        raise ValueError(
            f"clip {clip.name!r} has no track for root bone {root_name!r}")

    x0 = keys[0].value.translation[0]
    z0 = keys[0].value.translation[2]
    psi0 = quat.yaw_twist(keys[0].value.rotation)
    yaw0_quat = quat.from_yaw(psi0)

    times = []
    displacement = []
    yaws = []
    in_place_keys = []
    tau = 0.0
    prev_psi = psi0
    for k in keys:
        psi = quat.yaw_twist(k.value.rotation)
        tau += quat.wrap_angle(psi - prev_psi)  # unwrap across +-pi
        prev_psi = psi
        times.append(k.time)
        displacement.append((k.value.translation[0] - x0,
                             k.value.translation[2] - z0))
        yaws.append(tau)
        swing = quat.remove_yaw(k.value.rotation)
        in_place_keys.append(Keyframe(k.time, Transform(
            np.array([x0, k.value.translation[1], z0]),
            quat.mul(yaw0_quat, swing))))
    yaws[0] = 0.0

    tracks = dict(clip.tracks)
    tracks[root_name] = in_place_keys
    in_place = Clip(clip.name, clip.skeleton, clip.duration, tracks,
                    loopable=clip.loopable, salience=clip.salience,
                    root_mode=IN_PLACE)
    return in_place, RootTrajectory(np.array(times), np.array(displacement), np.array(yaws))


def compose_root_motion(clip: Clip, trajectory: RootTrajectory,
                        skeleton: Skeleton) -> Clip:
    """Re-apply an extracted trajectory onto an in-place clip (inverse of
    extract_root_motion up to float error)."""
    if clip.root_mode != IN_PLACE:
        raise ValueError(f"clip {clip.name!r} already carries root motion")
    root_name = skeleton.root.name
    keys = clip.tracks.get(root_name)
    if not keys:
        raise ValueError(f"clip {clip.name!r} has no track for root bone {root_name!r}")
    out_keys = []
    for k in keys:
        dx, dz, tau = trajectory.sample(k.time)
        t = k.value.translation
        out_keys.append(Keyframe(k.time, Transform(
            np.array([t[0] + dx, t[1], t[2] + dz]),
            quat.mul(quat.from_yaw(tau), k.value.rotation))))
    tracks = dict(clip.tracks)
    tracks[root_name] = out_keys
    return Clip(clip.name, clip.skeleton, clip.duration, tracks,
                loopable=clip.loopable, salience=clip.salience,
                root_mode=ROOT_MOTION)


def loop_seam_error(clip: Clip, skeleton: Skeleton) -> float:
    """Max world-space bone distance between the first and last frame.

    A large seam on an idle clip means the loop restart will be conspicuous.
    """
    if not clip.tracks:
        return 0.0
    first = world_positions(skeleton, sample_clip(clip, skeleton, 0.0))
    last = world_positions(skeleton, sample_clip(clip, skeleton, clip.duration))
    return float(np.max(np.linalg.norm(first - last, axis=1)))
