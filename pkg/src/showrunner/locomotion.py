"""Capsule locomotion: a two-state machine (Idle/Walk) chains in-place
clips while commands translate and orient the capsule on the ground plane.

Feet slide by design; there is no foot-lock IK. The state transition is a
pure function so the stage loop can replay command sequences bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .skeleton import Pose, Skeleton, Transform

IDLE = "idle"
WALK = "walk"


@dataclass
class Capsule:
    """Ground-plane pawn: position (x, y height offset, z), yaw about +Y."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    radius: float = 0.3
    half_height: float = 0.9

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        if self.radius <= 0 or self.half_height <= 0:
            raise ValueError("capsule radius and half_height must be > 0")
        self.yaw = quat.wrap_angle(self.yaw)

    def transform(self) -> Transform:
        return Transform(self.position, quat.from_yaw(self.yaw))

    def forward(self) -> np.ndarray:
        """Ground-plane facing direction (x,z); yaw 0 faces +Z."""
        return np.array([math.sin(self.yaw), math.cos(self.yaw)])


@dataclass
class LocomotionState:
    mode: str = IDLE
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))  # (x,z) m/s
    active_clip: str = ""
    phase: float = 0.0

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)

    @property
    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))


@dataclass
class LocomotionCommand:
    """Desired ground-plane velocity plus an optional facing override.

    Commands are clamped to the reachable speed on ingest, never rejected.
    """

    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    facing: float | None = None

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(2)


@dataclass
class LocomotionParams:
    walk_clip: str
    walk_speed: float  # speed the walk clip was authored at, m/s
    idle_clip: str
    walk_start: float = 0.1   # m/s, Idle -> Walk threshold
    walk_stop: float = 0.05   # m/s, Walk -> Idle threshold
    max_accel: float = 2.0    # m/s^2
    max_turn_rate: float = math.pi  # rad/s
    rate_min: float = 0.5
    rate_max: float = 2.0

    def __post_init__(self):
        if self.walk_speed <= 0:
            raise ValueError("authored walk speed must be > 0")
        if not 0 < self.walk_stop < self.walk_start:
            raise ValueError("need 0 < walk_stop < walk_start")
        if self.rate_min > self.rate_max:
            raise ValueError("rate_min must be <= rate_max")

    @property
    def max_speed(self) -> float:
        """Fastest speed the walk clip can represent at the rate clamp."""
        return self.walk_speed * self.rate_max


def initial_state(params: LocomotionParams) -> LocomotionState:
    return LocomotionState(mode=IDLE, active_clip=params.idle_clip)


def tick_locomotion(state: LocomotionState, capsule: Capsule,
                    cmd: LocomotionCommand, params: LocomotionParams,
                    dt: float) -> tuple[LocomotionState, Capsule, str, float]:
    """Advance one fixed step; returns (state, capsule, clip name, playback rate).

    Velocity moves toward the commanded vector limited by max_accel*dt; yaw
    turns toward the commanded facing (or the velocity heading) limited by
    max_turn_rate*dt. State flips Idle<->Walk with hysteresis on the
    commanded target speed. Playback rate tracks current speed over the
    clip's authored speed, clamped.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")

    desired = cmd.velocity
    target_speed = float(np.hypot(desired[0], desired[1]))
    if target_speed > params.max_speed:
        desired = desired * (params.max_speed / target_speed)
        target_speed = params.max_speed

    dv = desired - state.velocity
    dv_len = float(np.hypot(dv[0], dv[1]))
    budget = params.max_accel * dt
    if dv_len > budget:
        dv = dv * (budget / dv_len)
    velocity = state.velocity + dv
    speed = float(np.hypot(velocity[0], velocity[1]))

    if cmd.facing is not None:
        target_yaw = cmd.facing
    elif target_speed > 0.0:
        target_yaw = math.atan2(desired[0], desired[1])
    else:
        target_yaw = capsule.yaw
    turn = quat.wrap_angle(target_yaw - capsule.yaw)
    turn_budget = params.max_turn_rate * dt
    turn = max(-turn_budget, min(turn_budget, turn))
    yaw = quat.wrap_angle(capsule.yaw + turn)

    position = capsule.position.copy()
    position[0] += velocity[0] * dt
    position[2] += velocity[1] * dt

    mode = state.mode
    if mode == IDLE and target_speed >= params.walk_start:
        mode = WALK
    elif mode == WALK and target_speed <= params.walk_stop:
        mode = IDLE

    if mode == WALK:
        clip = params.walk_clip
        rate = min(max(speed / params.walk_speed, params.rate_min), params.rate_max)
    else:
        clip = params.idle_clip
        rate = 1.0

    phase = 0.0 if clip != state.active_clip else state.phase + rate * dt
    new_state = LocomotionState(mode=mode, velocity=velocity,
                                active_clip=clip, phase=phase)
    new_capsule = Capsule(position, yaw, capsule.radius, capsule.half_height)
    return new_state, new_capsule, clip, rate


def locomotion_pose(state: LocomotionState, clips: dict, skeleton: Skeleton) -> Pose:
    """Sample the active in-place clip at the current phase (looping)."""
    from .animation import sample_clip
    if state.active_clip not in clips:
        raise KeyError(f"locomotion clip {state.active_clip!r} not loaded")
    return sample_clip(clips[state.active_clip], skeleton, state.phase, wrap=True)
