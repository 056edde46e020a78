"""Scene orchestration: owns the avatars, applies space calibration and
per-avatar offsets, runs the fixed-step tick and emits snapshots.

The tick loop is single threaded and pure: identical command/mocap traces
produce bit-identical snapshot logs. Network adapters talk to the scene
only through the command queue (in) and the emitted snapshots (out).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .animation import crossfade
from .behaviour import Blackboard, BTContext, MoveToCommand, PlayClipCommand, tick_bt
from .direction import (EXTERNAL, INTERNAL, PLAYING_SALIENT, ControllerConfig,
                        CueSheet, SalientIdlePlayer, classify_controller,
                        controller_violations)
from .locomotion import (Capsule, LocomotionCommand, LocomotionState,
                         initial_state, locomotion_pose, tick_locomotion)
from .navigation import (NavigationError, Path, closest_point_on_mesh,
                         find_path, follow_path, locate_polygon)
from .protocol import (AvatarSpec, AvatarState, Back, ControlMessage, Go, Goto,
                       MocapFrame, NoteOn, SceneState, SetController, SetOffset,
                       ShowDocument, TriggerCue, map_control)
from .retarget import retarget_pose
from .skeleton import Pose, Skeleton, Transform, bind_pose

ARRIVAL_RADIUS = 0.25  # meters; how close counts as "there"
SWITCH_FADE = 0.3      # seconds of pose blend after a controller switch


@dataclass
class Avatar:
    """Runtime state for one performer."""

    spec: AvatarSpec
    skeleton: Skeleton
    controller: ControllerConfig
    capsule: Capsule
    offset: Transform
    pose: Pose
    player: SalientIdlePlayer | None = None
    loco_state: LocomotionState | None = None
    blackboard: Blackboard = field(default_factory=Blackboard)
    bt_memory: dict = field(default_factory=dict)
    nav_goal: np.ndarray | None = None
    nav_path: Path | None = None
    held_frame: MocapFrame | None = None
    fade_from: Pose | None = None
    fade_left: float = 0.0
    mesh_hint: int | None = None          # triangle the capsule was last on
    root_cache: tuple | None = None       # (pose, offset) -> world root

    @property
    def id(self) -> str:
        return self.spec.id


class Scene:
    def __init__(self, doc: ShowDocument, dt: float | None = None):
        self.doc = doc
        self.dt = float(dt if dt is not None else doc.fixed_step)
        if self.dt <= 0:
            raise ValueError("fixed step must be > 0")
        self.tick_index = 0
        self.time = 0.0
        self.sheet: CueSheet = doc.cue_sheet()
        self.calibration = doc.calibration
        self._commands: list[ControlMessage] = []
        self._pending_frames: dict[str, list[tuple[float, int, MocapFrame]]] = {}
        self._arrivals = 0
        self._diagnostics: list[str] = []
        self.avatars: dict[str, Avatar] = {}
        for spec in doc.avatars:
            skeleton = doc.skeletons[spec.skeleton]
            avatar = Avatar(
                spec=spec, skeleton=skeleton, controller=spec.controller,
                capsule=spec.capsule, offset=spec.offset,
                pose=bind_pose(skeleton),
                blackboard=Blackboard(spec.blackboard))
            if spec.controller.use_player or doc.cues:
                avatar.player = SalientIdlePlayer(skeleton, doc.clips)
            if spec.locomotion is not None:
                avatar.loco_state = initial_state(spec.locomotion)
            self.avatars[spec.id] = avatar
        self._order = sorted(self.avatars)

    # -- inputs -------------------------------------------------------------

    def post(self, msg: ControlMessage) -> None:
        """Queue a control message; applied at the next tick boundary."""
        if isinstance(msg, NoteOn):
            mapped = map_control(msg, self.doc.control_map)
            if mapped is None:
                return
            msg = mapped
        self._commands.append(msg)

    def post_mocap(self, frame: MocapFrame) -> None:
        if frame.avatar not in self.avatars:
            self._diagnostics.append(
                f"mocap frame for unknown avatar {frame.avatar!r} dropped")
            return
        self._arrivals += 1
        self._pending_frames.setdefault(frame.avatar, []).append(
            (frame.t, self._arrivals, frame))

    def report(self, diagnostic: str) -> None:
        """Attach a diagnostic to the next snapshot."""
        self._diagnostics.append(diagnostic)

    # -- live operations ----------------------------------------------------

    def set_mocap_offset(self, avatar_id: str, offset: Transform) -> None:
        """Replace (not compose) the avatar's mocap offset."""
        avatar = self._require(avatar_id)
        avatar.offset = offset

    def set_controller(self, avatar_id: str, cfg: ControllerConfig) -> None:
        """Swap the controller; the current pose becomes a crossfade source."""
        avatar = self._require(avatar_id)
        problems = self._controller_problems(avatar, cfg)
        if problems:
            raise ValueError("; ".join(problems))
        avatar.fade_from = avatar.pose.copy()
        avatar.fade_left = SWITCH_FADE
        avatar.controller = cfg
        avatar.nav_goal = None
        avatar.nav_path = None

    def _require(self, avatar_id: str) -> Avatar:
        if avatar_id not in self.avatars:
            raise KeyError(f"unknown avatar {avatar_id!r}")
        return self.avatars[avatar_id]

    def _controller_problems(self, avatar: Avatar, cfg: ControllerConfig) -> list[str]:
        problems = controller_violations(cfg)
        if cfg.retarget_map:
            rmap = self.doc.retarget_maps.get(cfg.retarget_map)
            if rmap is None:
                problems.append(f"unknown retarget map {cfg.retarget_map!r}")
            elif rmap.target.name != avatar.skeleton.name:
                problems.append(
                    f"retarget map {cfg.retarget_map!r} targets {rmap.target.name!r}")
        if cfg.behaviour_tree and cfg.behaviour_tree not in self.doc.behaviour_trees:
            problems.append(f"unknown behaviour tree {cfg.behaviour_tree!r}")
        if cfg.origin == INTERNAL and avatar.spec.locomotion is None:
            problems.append("origin=internal needs locomotion parameters")
        if cfg.use_player and avatar.player is None:
            problems.append("no clip player bound for this avatar")
        return problems

    # -- the tick -----------------------------------------------------------

    def tick(self) -> SceneState:
        self.tick_index += 1
        self.time = self.tick_index * self.dt
        fired = self._drain_commands()
        for avatar_id in self._order:
            self._evaluate(self.avatars[avatar_id])
        state = SceneState(
            tick=self.tick_index, time=self.time,
            avatars=[self._snapshot_avatar(self.avatars[a]) for a in self._order],
            cue_pointer=self.sheet.pointer, cues_fired=fired,
            diagnostics=self._diagnostics)
        self._diagnostics = []
        return state

    def _drain_commands(self) -> list[str]:
        fired: list[str] = []
        commands, self._commands = self._commands, []
        for msg in commands:
            try:
                if isinstance(msg, Go):
                    cue = self.sheet.go()
                    if cue is None:
                        self._diagnostics.append("GO past the end of the cue sheet")
                    else:
                        self._fire(cue, fired)
                elif isinstance(msg, Back):
                    self.sheet.back()
                elif isinstance(msg, Goto):
                    self.sheet.goto(msg.cue_id)
                elif isinstance(msg, TriggerCue):
                    cue = self.sheet.cue_by_id(msg.cue_id)
                    self.sheet.goto(msg.cue_id)
                    self.sheet.pointer += 1
                    self._fire(cue, fired)
                elif isinstance(msg, SetOffset):
                    self.set_mocap_offset(msg.avatar, msg.offset)
                elif isinstance(msg, SetController):
                    self.set_controller(msg.avatar, msg.config)
                else:
                    self._diagnostics.append(f"unhandled command {msg!r}")
            except (KeyError, ValueError) as e:
                self._diagnostics.append(f"{type(msg).__name__} rejected: {e}")
        return fired

    def _fire(self, cue, fired: list[str]) -> None:
        avatar = self.avatars.get(cue.avatar)
        if avatar is None or avatar.player is None:
            self._diagnostics.append(
                f"cue {cue.id!r} targets avatar {cue.avatar!r} with no clip player")
            return
        avatar.player.trigger_cue(cue, avatar.pose)
        adjust = avatar.player.take_adjustment()
        if adjust is not None:
            position = avatar.capsule.position.copy()
            position[0] += adjust.position[0]
            position[2] += adjust.position[1]
            avatar.capsule = Capsule(position,
                                     quat.wrap_angle(avatar.capsule.yaw + adjust.yaw),
                                     avatar.capsule.radius,
                                     avatar.capsule.half_height)
        fired.append(cue.id)

    def _evaluate(self, avatar: Avatar) -> None:
        cfg = avatar.controller
        if cfg.origin == EXTERNAL and cfg.mocap_source:
            self._evaluate_mocap(avatar)
        elif cfg.origin == EXTERNAL:
            avatar.pose = avatar.player.tick(self.dt)
        else:
            self._evaluate_internal(avatar)
        if avatar.fade_left > 0.0:
            avatar.fade_left -= self.dt
            alpha = min(1.0, (SWITCH_FADE - avatar.fade_left) / SWITCH_FADE)
            avatar.pose = crossfade(avatar.fade_from, avatar.pose, alpha)
            if avatar.fade_left <= 0.0:
                avatar.fade_from = None

    def _evaluate_mocap(self, avatar: Avatar) -> None:
        frame = self._consume_frame(avatar.id)
        if frame is None:
            return  # hold the previous pose, no extrapolation
        rmap = (self.doc.retarget_maps.get(avatar.controller.retarget_map)
                if avatar.controller.retarget_map else None)
        source_skeleton = rmap.source if rmap is not None else avatar.skeleton
        if len(frame.rotations) != len(source_skeleton):
            self._diagnostics.append(
                f"mocap frame for {avatar.id!r} has {len(frame.rotations)} rotations, "
                f"skeleton {source_skeleton.name!r} has {len(source_skeleton)}; dropped")
            return
        source = bind_pose(source_skeleton)
        source.rotations[:] = frame.rotations
        source.translations[0] = frame.root
        avatar.pose = retarget_pose(rmap, source) if rmap is not None else source
        avatar.held_frame = frame

    def _consume_frame(self, avatar_id: str) -> MocapFrame | None:
        pending = self._pending_frames.get(avatar_id)
        if not pending:
            return None
        due = [p for p in pending if p[0] <= self.time]
        if not due:
            return None
        self._pending_frames[avatar_id] = [p for p in pending if p[0] > self.time]
        return max(due)[2]

    def _evaluate_internal(self, avatar: Avatar) -> None:
        cfg = avatar.controller
        params = avatar.spec.locomotion
        if cfg.decision == INTERNAL:
            tree = self.doc.behaviour_trees[cfg.behaviour_tree]
            ctx = BTContext(position=avatar.capsule.position[[0, 2]],
                            arrival_radius=ARRIVAL_RADIUS)
            result = tick_bt(tree, avatar.blackboard, self.dt, ctx, avatar.bt_memory)
            for d in result.diagnostics:
                self._diagnostics.append(f"{avatar.id}: {d}")
            goal = None
            for command in result.commands:
                if isinstance(command, MoveToCommand) and goal is None:
                    goal = command.target
                elif isinstance(command, PlayClipCommand):
                    self._diagnostics.append(
                        f"{avatar.id}: play_clip {command.clip!r} ignored "
                        f"(locomotion avatars take navigation goals only)")
            self._set_goal(avatar, goal)
        else:
            goal = np.asarray(cfg.move_goal, dtype=float) if cfg.move_goal else None
            self._set_goal(avatar, goal)

        if avatar.nav_path is not None:
            cmd = follow_path(avatar.nav_path, avatar.capsule, ARRIVAL_RADIUS,
                              params.walk_speed)
        else:
            cmd = LocomotionCommand()
        avatar.loco_state, capsule, _, _ = tick_locomotion(
            avatar.loco_state, avatar.capsule, cmd, params, self.dt)
        mesh = self.doc.navmesh
        if mesh is not None:
            pos2 = (capsule.position[0], capsule.position[2])
            if avatar.mesh_hint is None or not mesh.contains(avatar.mesh_hint, pos2):
                tri = locate_polygon(mesh, pos2)
                if tri is None:
                    onmesh, tri = closest_point_on_mesh(mesh, capsule.position[[0, 2]])
                    position = capsule.position.copy()
                    position[0], position[2] = onmesh
                    capsule = Capsule(position, capsule.yaw, capsule.radius,
                                      capsule.half_height)
                avatar.mesh_hint = tri
        avatar.capsule = capsule
        avatar.pose = locomotion_pose(avatar.loco_state, self.doc.clips,
                                      avatar.skeleton)

    def _set_goal(self, avatar: Avatar, goal: np.ndarray | None) -> None:
        if goal is None:
            avatar.nav_goal = None
            avatar.nav_path = None
            return
        if (avatar.nav_goal is not None
                and float(np.max(np.abs(goal - avatar.nav_goal))) < 1e-9
                and avatar.nav_path is not None):
            return
        avatar.nav_goal = goal
        if self.doc.navmesh is None:
            # no mesh: walk straight at the goal
            avatar.nav_path = Path([avatar.capsule.position[[0, 2]], goal])
            return
        try:
            avatar.nav_path = find_path(self.doc.navmesh,
                                        avatar.capsule.position[[0, 2]], goal)
        except NavigationError as e:
            self._diagnostics.append(f"{avatar.id}: cannot reach goal: {e}")
            avatar.nav_goal = None
            avatar.nav_path = None

    # -- snapshots ------------------------------------------------------------

    def _snapshot_avatar(self, avatar: Avatar) -> AvatarState:
        cfg = avatar.controller
        local_t = avatar.pose.translations[0]
        local_q = avatar.pose.rotations[0]
        if cfg.origin == EXTERNAL and cfg.mocap_source:
            cached = avatar.root_cache
            if cached is not None and cached[0] is avatar.pose \
                    and cached[1] is avatar.offset:
                root = cached[2]
            else:
                off = avatar.offset
                t = off.translation + quat.rotate(off.rotation, local_t)
                q = quat.mul(off.rotation, local_q)
                cal = self.calibration
                root = Transform(cal.translation + quat.rotate(cal.rotation, t),
                                 quat.mul(cal.rotation, q))
                avatar.root_cache = (avatar.pose, avatar.offset, root)
            clip = ""
            state = "mocap"
        else:
            cap = avatar.capsule
            half = 0.5 * cap.yaw
            cw, sw = math.cos(half), math.sin(half)
            cy, sy = cw * cw - sw * sw, 2.0 * sw * cw  # cos/sin of the full yaw
            x, y, z = local_t
            qw, qx, qy_, qz = local_q
            root = Transform(
                np.array([cap.position[0] + x * cy + z * sy,
                          cap.position[1] + y,
                          cap.position[2] - x * sy + z * cy]),
                np.array([cw * qw - sw * qy_, cw * qx + sw * qz,
                          cw * qy_ + sw * qw, cw * qz - sw * qx]))
            if cfg.origin == EXTERNAL:
                clip = ""
                if avatar.player.cue is not None:
                    clip = (avatar.player.cue.salient_clip
                            if avatar.player.state == PLAYING_SALIENT
                            else avatar.player.cue.idle_clip)
                state = avatar.player.state
            else:
                clip = avatar.loco_state.active_clip
                state = avatar.loco_state.mode
        path = None
        if avatar.nav_path is not None:
            path = [(float(x), float(z)) for x, z in avatar.nav_path.waypoints]
        return AvatarState(id=avatar.id, root=root, clip=clip, state=state,
                           classification=classify_controller(cfg), path=path)


def build_scene(doc: ShowDocument, dt: float | None = None) -> Scene:
    return Scene(doc, dt)


def tick_stage(scene: Scene) -> SceneState:
    return scene.tick()
