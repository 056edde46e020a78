"""Skeleton and pose data model with forward kinematics.

A skeleton is an ordered list of named bones linked by parent indices
(parent strictly before child, exactly one root). A pose holds one local
transform per bone; forward kinematics accumulates them into world
transforms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quat


@dataclass
class Transform:
    """Rigid transform: translation (meters) + unit quaternion (w,x,y,z)."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: quat.IDENTITY.copy())

    def __post_init__(self):
        t = self.translation
        if not (isinstance(t, np.ndarray) and t.dtype == float and t.shape == (3,)):
            self.translation = np.asarray(t, dtype=float).reshape(3)
        r = self.rotation
        if not (isinstance(r, np.ndarray) and r.dtype == float and r.shape == (4,)):
            r = np.asarray(r, dtype=float).reshape(4)
        n2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2] + r[3] * r[3]
        if abs(n2 - 1.0) > 2.0 * quat.UNIT_TOLERANCE:
            raise ValueError(f"rotation is not unit norm: {r}")
        self.rotation = r if self.rotation is r else quat.normalize(r)

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    def compose(self, child: "Transform") -> "Transform":
        """self applied first in the hierarchy: world = parent o child."""
        return Transform(
            self.translation + quat.rotate(self.rotation, child.translation),
            quat.mul(self.rotation, child.rotation),
        )

    def inverse(self) -> "Transform":
        inv_rot = quat.conjugate(self.rotation)
        return Transform(-quat.rotate(inv_rot, self.translation), inv_rot)

    def apply(self, point) -> np.ndarray:
        return self.translation + quat.rotate(self.rotation, np.asarray(point, dtype=float))

    def isclose(self, other: "Transform", tol: float = 1e-9) -> bool:
        return (np.allclose(self.translation, other.translation, atol=tol)
                and quat.quat_distance(self.rotation, other.rotation) <= tol)


@dataclass
class Bone:
    name: str
    parent: int | None
    bind_local: Transform = field(default_factory=Transform.identity)
    length: float = 0.0


@dataclass
class Skeleton:
    name: str
    bones: list[Bone]

    def __post_init__(self):
        self._index = {b.name: i for i, b in enumerate(self.bones)}

    def __len__(self) -> int:
        return len(self.bones)

    @property
    def root(self) -> Bone:
        return self.bones[0]

    def bone_index(self, name: str) -> int:
        """Index of the uniquely named bone; KeyError if unknown."""
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown bone {name!r} in skeleton {self.name!r}") from None

    def has_bone(self, name: str) -> bool:
        return name in self._index


@dataclass
class Pose:
    """Per-bone local transforms, stored as (J,3) translations + (J,4) rotations."""

    skeleton: Skeleton
    translations: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        t, r = self.translations, self.rotations
        if not (isinstance(t, np.ndarray) and t.dtype == float and t.ndim == 2
                and t.shape[1] == 3):
            self.translations = np.asarray(t, dtype=float).reshape(-1, 3)
        if not (isinstance(r, np.ndarray) and r.dtype == float and r.ndim == 2
                and r.shape[1] == 4):
            self.rotations = np.asarray(r, dtype=float).reshape(-1, 4)
        n = len(self.skeleton)
        if len(self.translations) != n or len(self.rotations) != n:
            raise ValueError(
                f"pose has {len(self.translations)} locals for "
                f"{n}-bone skeleton {self.skeleton.name!r}")

    def local(self, i: int) -> Transform:
        return Transform(self.translations[i], self.rotations[i])

    def copy(self) -> "Pose":
        return Pose(self.skeleton, self.translations.copy(), self.rotations.copy())

    def root_transform(self) -> Transform:
        return self.local(0)


def validate_skeleton(skeleton: Skeleton) -> list[str]:
    """Collect invariant violations; an empty list means the skeleton is valid."""
    problems = []
    if not skeleton.bones:
        return ["skeleton has no bones"]
    seen: set[str] = set()
    roots = 0
    for i, bone in enumerate(skeleton.bones):
        if bone.name in seen:
            problems.append(f"duplicate bone name {bone.name!r}")
        seen.add(bone.name)
        if bone.parent is None:
            roots += 1
            if i != 0:
                problems.append(f"root bone {bone.name!r} is not first (index {i})")
        elif not 0 <= bone.parent < i:
            problems.append(
                f"bone {bone.name!r} (index {i}) has parent index {bone.parent}, "
                f"parents must come strictly earlier")
        if not quat.is_unit(bone.bind_local.rotation):
            problems.append(f"bone {bone.name!r} bind rotation is not unit norm")
        if bone.length < 0:
            problems.append(f"bone {bone.name!r} has negative length")
    if roots == 0:
        problems.append("no root bone (every bone has a parent)")
    elif roots > 1:
        problems.append(f"multiple roots ({roots} bones have no parent)")
    return problems


def bind_pose(skeleton: Skeleton) -> Pose:
    """Pose whose locals equal each bone's bind transform."""
    n = len(skeleton)
    translations = np.empty((n, 3))
    rotations = np.empty((n, 4))
    for i, bone in enumerate(skeleton.bones):
        translations[i] = bone.bind_local.translation
        rotations[i] = bone.bind_local.rotation
    return Pose(skeleton, translations, rotations)


def local_to_world(skeleton: Skeleton, pose: Pose) -> list[Transform]:
    """Forward kinematics: world[i] = world[parent(i)] o locals[i]."""
    if pose.skeleton is not skeleton and pose.skeleton.name != skeleton.name:
        raise ValueError(
            f"pose is on skeleton {pose.skeleton.name!r}, expected {skeleton.name!r}")
    if len(pose.translations) != len(skeleton):
        raise ValueError("pose/skeleton bone count mismatch")
    world: list[Transform] = []
    for i, bone in enumerate(skeleton.bones):
        local = Transform(pose.translations[i], pose.rotations[i])
        if bone.parent is None:
            world.append(local)
        else:
            world.append(world[bone.parent].compose(local))
    return world


def world_positions(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """(J,3) world-space bone positions of a pose."""
    return np.array([t.translation for t in local_to_world(skeleton, pose)])
