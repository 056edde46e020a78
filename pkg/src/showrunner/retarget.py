"""Pose transfer between differently proportioned skeletons.

Rotation deltas are taken relative to each skeleton's own bind pose; only
the root translation transfers, scaled by the ratio of bind-pose root
heights. Non-root translations keep the target's bind values so target
bone lengths (proportions) are preserved. Both skeletons must be authored
in compatible bind orientations; that is a content requirement, not
something corrected here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import quat
from .skeleton import Pose, Skeleton, bind_pose


@dataclass
class BoneMap:
    """Ordered (source bone -> target bone) name pairs."""

    pairs: list[tuple[str, str]]

    @staticmethod
    def identity(skeleton: Skeleton) -> "BoneMap":
        return BoneMap([(b.name, b.name) for b in skeleton.bones])


@dataclass
class RetargetConfig:
    source: Skeleton
    target: Skeleton
    # parallel index arrays: source bone i maps onto target bone j
    source_indices: np.ndarray
    target_indices: np.ndarray
    height_ratio: float


def build_retarget(source: Skeleton, target: Skeleton, bone_map: BoneMap) -> RetargetConfig:
    """Resolve a bone map against both skeletons and compute the height ratio
    from the vertical components of the root bind translations."""
    src_idx = []
    tgt_idx = []
    seen_targets: set[str] = set()
    for src_name, tgt_name in bone_map.pairs:
        if not source.has_bone(src_name):
            raise KeyError(f"bone map names unknown source bone {src_name!r}")
        if not target.has_bone(tgt_name):
            raise KeyError(f"bone map names unknown target bone {tgt_name!r}")
        if tgt_name in seen_targets:
            raise ValueError(f"bone map names target bone {tgt_name!r} twice")
        seen_targets.add(tgt_name)
        src_idx.append(source.bone_index(src_name))
        tgt_idx.append(target.bone_index(tgt_name))
    if 0 not in src_idx or 0 not in tgt_idx or src_idx.index(0) != tgt_idx.index(0):
        raise ValueError("bone map must map the source root onto the target root")

    src_height = float(source.root.bind_local.translation[1])
    tgt_height = float(target.root.bind_local.translation[1])
    if src_height <= 1e-6 or tgt_height <= 1e-6:
        ratio = 1.0
    else:
        ratio = tgt_height / src_height
    if not np.isfinite(ratio) or ratio <= 0:
        raise ValueError(f"height ratio must be finite and > 0, got {ratio}")
    return RetargetConfig(source, target,
                          np.array(src_idx, dtype=int),
                          np.array(tgt_idx, dtype=int), ratio)


def retarget_pose(config: RetargetConfig, source_pose: Pose) -> Pose:
    """Transfer a source pose onto the target skeleton.

    Per mapped bone the bind-relative rotation delta carries over:
    target_local = target_bind . (source_bind^-1 . source_local).
    Unmapped target bones hold bind; the root translation moves by
    height_ratio times the source root's bind-relative displacement.
    """
    if source_pose.skeleton.name != config.source.name:
        raise ValueError(
            f"pose is on skeleton {source_pose.skeleton.name!r}, "
            f"expected {config.source.name!r}")
    src_bind = bind_pose(config.source)
    out = bind_pose(config.target)

    si = config.source_indices
    ti = config.target_indices
    # delta = conj(src_bind) . src_local, then tgt_bind . delta, all row-wise
    deltas = quat.mul_many(_conj_rows(src_bind.rotations[si]),
                           source_pose.rotations[si])
    out.rotations[ti] = quat.mul_many(out.rotations[ti], deltas)

    src_root_delta = source_pose.translations[0] - src_bind.translations[0]
    out.translations[0] = out.translations[0] + config.height_ratio * src_root_delta
    return out


def _conj_rows(q: np.ndarray) -> np.ndarray:
    out = q.copy()
    out[:, 1:] = -out[:, 1:]
    return out
