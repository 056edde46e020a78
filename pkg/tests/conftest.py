from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from showrunner import quat
from showrunner.animation import Clip, Keyframe
from showrunner.skeleton import Bone, Pose, Skeleton, Transform


def random_quat(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    return quat.normalize(q)


def random_skeleton(rng: np.random.Generator, max_bones: int = 20,
                    name: str = "rig") -> Skeleton:
    n = int(rng.integers(1, max_bones + 1))
    bones = [Bone("bone0", None,
                  Transform(rng.normal(scale=0.5, size=3), random_quat(rng)))]
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        bones.append(Bone(f"bone{i}", parent,
                          Transform(rng.normal(scale=0.5, size=3), random_quat(rng))))
    return Skeleton(name, bones)


def random_pose(rng: np.random.Generator, skeleton: Skeleton) -> Pose:
    n = len(skeleton)
    return Pose(skeleton, rng.normal(scale=0.5, size=(n, 3)),
                np.stack([random_quat(rng) for _ in range(n)]))


def chain_skeleton(n: int, offset=(0.0, 1.0, 0.0), name: str = "chain") -> Skeleton:
    bones = [Bone("bone0", None)]
    for i in range(1, n):
        bones.append(Bone(f"bone{i}", i - 1, Transform(np.asarray(offset, dtype=float))))
    return Skeleton(name, bones)


def simple_clip(skeleton: Skeleton, keyframes: dict[str, list[tuple]],
                duration: float, name: str = "clip", **kwargs) -> Clip:
    """keyframes: bone -> [(t, translation, rotation), ...]"""
    tracks = {}
    for bone, keys in keyframes.items():
        tracks[bone] = [Keyframe(t, Transform(np.asarray(tr, dtype=float),
                                              np.asarray(rot, dtype=float)))
                        for t, tr, rot in keys]
    return Clip(name=name, skeleton=skeleton.name, duration=duration,
                tracks=tracks, **kwargs)


def synthetic_walk_clip(rng: np.random.Generator, skeleton: Skeleton,
                        name: str = "walk") -> Clip:
    """Travelling clip: the root wanders and turns; limbs swing in place."""
    duration = float(rng.uniform(1.0, 3.0))
    n_keys = int(rng.integers(4, 12))
    times = np.sort(rng.uniform(0.0, duration, size=n_keys - 2))
    times = np.concatenate([[0.0], times, [duration]])
    speed = rng.uniform(0.3, 1.8)
    heading = rng.uniform(-math.pi, math.pi)
    turn_rate = rng.uniform(-1.2, 1.2)
    x, z = rng.normal(scale=2.0, size=2)
    root_keys = []
    prev_t = 0.0
    for t in times:
        heading += turn_rate * (t - prev_t)
        x += speed * (t - prev_t) * math.sin(heading)
        z += speed * (t - prev_t) * math.cos(heading)
        prev_t = t
        wobble = quat.from_axis_angle([1.0, 0.0, 0.0], 0.15 * math.sin(3.0 * t))
        rot = quat.mul(quat.from_yaw(heading), wobble)
        root_keys.append((t, (x, 0.9 + 0.05 * math.sin(6.0 * t), z), tuple(rot)))
    tracks = {skeleton.root.name: root_keys}
    for bone in skeleton.bones[1:3]:
        swing = []
        for t in times:
            rot = quat.from_axis_angle([0.0, 0.0, 1.0], 0.4 * math.sin(4.0 * t))
            swing.append((t, tuple(bone.bind_local.translation), tuple(rot)))
        tracks[bone.name] = swing
    return simple_clip(skeleton, tracks, duration,
                       name=name, loopable=False, salience="salient",
                       root_mode="root_motion")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260809)
