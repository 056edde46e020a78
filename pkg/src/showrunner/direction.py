"""Cue sheets, the salient/idle playback machine and the controller
classification that places each avatar on the origin/decision grid.

A cue pairs one expressive (salient) clip with the idle loop the avatar
falls into afterwards, so an operator GO always lands the performer in a
waiting state rather than a freeze frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import animation
from .animation import Clip, crossfade, sample_clip
from .skeleton import Pose, Skeleton, bind_pose

INACTIVE = "inactive"
PLAYING_SALIENT = "playing_salient"
LOOPING_IDLE = "looping_idle"

INTERNAL = "internal"
EXTERNAL = "external"

PUPPET = "puppet"
MASK = "mask"
GOLEM = "golem"
ACTOR = "actor"

DEFAULT_FADE = 0.3


@dataclass
class StageAdjustment:
    """Position/yaw nudge applied to the avatar when its cue fires."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(2))  # (x,z)
    yaw: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)


@dataclass
class Cue:
    id: str
    avatar: str
    salient_clip: str
    idle_clip: str
    fade_in: float = DEFAULT_FADE
    adjust: StageAdjustment | None = None

    def __post_init__(self):
        if self.fade_in < 0:
            raise ValueError(f"cue {self.id!r}: fade_in must be >= 0")


def cue_violations(cue: Cue, clips: dict[str, Clip]) -> list[str]:
    problems = []
    salient = clips.get(cue.salient_clip)
    idle = clips.get(cue.idle_clip)
    if salient is None:
        problems.append(f"cue {cue.id!r}: unknown salient clip {cue.salient_clip!r}")
    elif salient.salience != animation.SALIENT:
        problems.append(
            f"cue {cue.id!r}: clip {cue.salient_clip!r} is tagged "
            f"{salient.salience!r}, expected salient")
    if idle is None:
        problems.append(f"cue {cue.id!r}: unknown idle clip {cue.idle_clip!r}")
    else:
        if idle.salience != animation.IDLE:
            problems.append(
                f"cue {cue.id!r}: clip {cue.idle_clip!r} is tagged "
                f"{idle.salience!r}, expected idle")
        if not idle.loopable:
            problems.append(f"cue {cue.id!r}: idle clip {cue.idle_clip!r} must loop")
    return problems


class CueSheet:
    """Ordered score of cues with a pointer at the next one to fire."""

    def __init__(self, cues: list[Cue]):
        self.cues = list(cues)
        self.pointer = 0
        self._by_id = {}
        for cue in self.cues:
            if cue.id in self._by_id:
                raise ValueError(f"duplicate cue id {cue.id!r}")
            self._by_id[cue.id] = cue

    def __len__(self) -> int:
        return len(self.cues)

    def cue_by_id(self, cue_id: str) -> Cue:
        try:
            return self._by_id[cue_id]
        except KeyError:
            raise KeyError(f"unknown cue id {cue_id!r}") from None

    def go(self) -> Cue | None:
        """Fire the cue at the pointer and advance; None once exhausted."""
        if self.pointer >= len(self.cues):
            return None
        cue = self.cues[self.pointer]
        self.pointer += 1
        return cue

    def back(self) -> None:
        self.pointer = max(0, self.pointer - 1)

    def goto(self, cue_id: str) -> None:
        cue = self.cue_by_id(cue_id)
        self.pointer = self.cues.index(cue)


class SalientIdlePlayer:
    """Plays a cue's salient clip once, then loops its idle until the next
    trigger; overflow time carries into the idle so timing stays exact."""

    def __init__(self, skeleton: Skeleton, clips: dict[str, Clip]):
        self.skeleton = skeleton
        self.clips = clips
        self.state = INACTIVE
        self.cue: Cue | None = None
        self.phase = 0.0
        self._bind = bind_pose(skeleton)
        self._fade_from: Pose | None = None
        self._fade_total = 0.0
        self._fade_left = 0.0
        self.pending_adjust: StageAdjustment | None = None

    def trigger_cue(self, cue: Cue, current_pose: Pose | None) -> None:
        """Start the cue now; re-triggering mid-salient crossfades from the
        interrupted pose so early GO presses recover cleanly."""
        if cue.salient_clip not in self.clips or cue.idle_clip not in self.clips:
            raise KeyError(f"cue {cue.id!r} references a clip that is not loaded")
        self.state = PLAYING_SALIENT
        self.cue = cue
        self.phase = 0.0
        if cue.fade_in > 0.0 and current_pose is not None:
            self._fade_from = current_pose.copy()
            self._fade_total = cue.fade_in
            self._fade_left = cue.fade_in
        else:
            self._fade_from = None
            self._fade_total = self._fade_left = 0.0
        self.pending_adjust = cue.adjust

    def take_adjustment(self) -> StageAdjustment | None:
        adjust, self.pending_adjust = self.pending_adjust, None
        return adjust

    def tick(self, dt: float) -> Pose:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        if self.state == INACTIVE or self.cue is None:
            return self._bind
        self.phase += dt
        if self.state == PLAYING_SALIENT:
            salient = self.clips[self.cue.salient_clip]
            if self.phase >= salient.duration:
                # hand over to the idle loop, keeping the leftover time
                self.phase -= salient.duration
                self.state = LOOPING_IDLE
        if self.state == PLAYING_SALIENT:
            pose = sample_clip(self.clips[self.cue.salient_clip],
                               self.skeleton, self.phase)
        else:
            idle = self.clips[self.cue.idle_clip]
            pose = sample_clip(idle, self.skeleton,
                               math.fmod(self.phase, idle.duration), wrap=True)
        if self._fade_left > 0.0:
            self._fade_left -= dt
            alpha = min(1.0, (self._fade_total - self._fade_left) / self._fade_total)
            pose = crossfade(self._fade_from, pose, alpha)
            if self._fade_left <= 0.0:
                self._fade_from = None
        return pose


@dataclass
class ControllerConfig:
    """Where an avatar's movement comes from (origin) and who decides it.

    origin external binds a mocap stream or the cue player; origin internal
    means procedural locomotion. decision internal binds a behaviour tree;
    decision external leaves choices to the operator (cues, goals).
    """

    origin: str
    decision: str
    mocap_source: str | None = None
    use_player: bool = False
    retarget_map: str | None = None
    behaviour_tree: str | None = None
    move_goal: tuple[float, float] | None = None


def controller_violations(cfg: ControllerConfig) -> list[str]:
    problems = []
    if cfg.origin not in (INTERNAL, EXTERNAL):
        problems.append(f"origin must be internal or external, got {cfg.origin!r}")
    if cfg.decision not in (INTERNAL, EXTERNAL):
        problems.append(f"decision must be internal or external, got {cfg.decision!r}")
    if cfg.origin == EXTERNAL and not (cfg.mocap_source or cfg.use_player):
        problems.append("origin=external needs a mocap source or the cue player bound")
    if cfg.decision == INTERNAL and not cfg.behaviour_tree:
        problems.append("decision=internal needs a behaviour tree bound")
    return problems


def classify_controller(cfg: ControllerConfig) -> str:
    """Four-way autonomy class from the (origin, decision) axes."""
    if cfg.origin == EXTERNAL:
        return PUPPET if cfg.decision == EXTERNAL else MASK
    return GOLEM if cfg.decision == EXTERNAL else ACTOR
