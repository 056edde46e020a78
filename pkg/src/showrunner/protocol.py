"""Persistent and wire formats: the show file, clip sidecars, mocap
stream records, show-control commands (text + bridged MIDI) and the
console snapshot/command channel.

Everything is UTF-8 JSON. Angles are radians, lengths meters. Parsers
never abort the process: malformed input raises ShowFormatError (files)
or ValueError (stream records), both carrying printable messages.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import animation, behaviour, direction, navigation
from .animation import Clip, Keyframe
from .direction import ControllerConfig, Cue, CueSheet, StageAdjustment
from .locomotion import Capsule, LocomotionParams
from .navigation import NavMesh
from .retarget import BoneMap, RetargetConfig, build_retarget
from .skeleton import Bone, Skeleton, Transform, validate_skeleton
from . import quat

SUPPORTED_VERSIONS = (1,)


class ShowFormatError(Exception):
    """Parse or cross-reference failure; .errors lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors) if self.errors else "invalid show")


# ---------------------------------------------------------------------------
# control messages

@dataclass
class Go:
    pass


@dataclass
class Back:
    pass


@dataclass
class Goto:
    cue_id: str


@dataclass
class TriggerCue:
    cue_id: str


@dataclass
class SetOffset:
    avatar: str
    offset: Transform


@dataclass
class SetController:
    avatar: str
    config: ControllerConfig


@dataclass
class NoteOn:
    channel: int
    note: int
    velocity: int


ControlMessage = Go | Back | Goto | TriggerCue | SetOffset | SetController | NoteOn


def parse_control_line(line: str) -> ControlMessage:
    """One show-control command: the text grammar, or a bridged MIDI event
    as a JSON line {"midi": {"ch": n, "note": n, "vel": n}}."""
    line = line.strip()
    if not line:
        raise ValueError("empty control line")
    if line.startswith("{"):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValueError(f"bad JSON control line: {e}") from None
        midi = obj.get("midi")
        if not isinstance(midi, dict):
            raise ValueError("JSON control line must carry a \"midi\" object")
        try:
            return NoteOn(int(midi["ch"]), int(midi["note"]), int(midi["vel"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"bad midi event: {e}") from None
    parts = line.split()
    cmd = parts[0].upper()
    if cmd == "GO" and len(parts) == 1:
        return Go()
    if cmd == "BACK" and len(parts) == 1:
        return Back()
    if cmd == "GOTO" and len(parts) == 2:
        return Goto(parts[1])
    if cmd == "CUE" and len(parts) == 2:
        return TriggerCue(parts[1])
    if cmd == "OFFSET" and len(parts) == 5:
        try:
            x, z, yaw = (float(v) for v in parts[2:5])
        except ValueError:
            raise ValueError(f"OFFSET needs numeric x z yaw: {line!r}") from None
        return SetOffset(parts[1], Transform(np.array([x, 0.0, z]), quat.from_yaw(yaw)))
    raise ValueError(f"unrecognized control line: {line!r}")


def encode_control_line(msg: ControlMessage) -> str:
    if isinstance(msg, Go):
        return "GO"
    if isinstance(msg, Back):
        return "BACK"
    if isinstance(msg, Goto):
        return f"GOTO {msg.cue_id}"
    if isinstance(msg, TriggerCue):
        return f"CUE {msg.cue_id}"
    if isinstance(msg, SetOffset):
        t = msg.offset.translation
        yaw = quat.yaw_twist(msg.offset.rotation)
        return f"OFFSET {msg.avatar} {float(t[0])!r} {float(t[2])!r} {float(yaw)!r}"
    if isinstance(msg, NoteOn):
        return json.dumps(
            {"midi": {"ch": msg.channel, "note": msg.note, "vel": msg.velocity}},
            separators=(",", ":"))
    raise ValueError(f"{type(msg).__name__} has no text form; use the console channel")


def parse_console_message(text: str | dict) -> ControlMessage:
    """Client->server console messages mirror ControlMessage as JSON."""
    obj = json.loads(text) if isinstance(text, str) else text
    if not isinstance(obj, dict) or "type" not in obj:
        raise ValueError("console message must be an object with a \"type\"")
    kind = obj["type"]
    try:
        if kind == "go":
            return Go()
        if kind == "back":
            return Back()
        if kind == "goto":
            return Goto(str(obj["id"]))
        if kind == "trigger_cue":
            return TriggerCue(str(obj["id"]))
        if kind == "set_offset":
            return SetOffset(str(obj["avatar"]), Transform(
                np.array([float(obj["x"]), 0.0, float(obj["z"])]),
                quat.from_yaw(float(obj["yaw"]))))
        if kind == "set_controller":
            return SetController(str(obj["avatar"]),
                                 controller_from_json(obj["config"]))
        if kind == "note_on":
            return NoteOn(int(obj["ch"]), int(obj["note"]), int(obj["vel"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"bad console message {kind!r}: {e}") from None
    raise ValueError(f"unknown console message type {kind!r}")


def encode_console_message(msg: ControlMessage) -> str:
    if isinstance(msg, Go):
        obj = {"type": "go"}
    elif isinstance(msg, Back):
        obj = {"type": "back"}
    elif isinstance(msg, Goto):
        obj = {"type": "goto", "id": msg.cue_id}
    elif isinstance(msg, TriggerCue):
        obj = {"type": "trigger_cue", "id": msg.cue_id}
    elif isinstance(msg, SetOffset):
        obj = {"type": "set_offset", "avatar": msg.avatar,
               "x": float(msg.offset.translation[0]),
               "z": float(msg.offset.translation[2]),
               "yaw": quat.yaw_twist(msg.offset.rotation)}
    elif isinstance(msg, SetController):
        obj = {"type": "set_controller", "avatar": msg.avatar,
               "config": controller_to_json(msg.config)}
    elif isinstance(msg, NoteOn):
        obj = {"type": "note_on", "ch": msg.channel, "note": msg.note,
               "vel": msg.velocity}
    else:
        raise ValueError(f"not a control message: {msg!r}")
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def map_control(msg: ControlMessage,
                mappings: dict[tuple[int, int], ControlMessage]) -> ControlMessage | None:
    """Resolve MIDI notes through the show's mapping table; velocity 0 is a
    note-off and unmapped notes map to nothing. Other messages pass through."""
    if not isinstance(msg, NoteOn):
        return msg
    if msg.velocity == 0:
        return None
    return mappings.get((msg.channel, msg.note))


# ---------------------------------------------------------------------------
# mocap stream

@dataclass
class MocapFrame:
    avatar: str
    t: float
    root: np.ndarray        # (3,) meters
    rotations: np.ndarray   # (J,4) unit quaternions, skeleton order

    def __post_init__(self):
        self.root = np.asarray(self.root, dtype=float).reshape(3)
        self.rotations = np.asarray(self.rotations, dtype=float).reshape(-1, 4)


def parse_mocap_frame(record: str | bytes, expected_bones: int | None = None) -> MocapFrame:
    """One NDJSON mocap record; quaternions must be unit within 1e-3 and are
    renormalized on ingest."""
    if isinstance(record, bytes):
        record = record.decode("utf-8", errors="replace")
    try:
        obj = json.loads(record)
    except json.JSONDecodeError as e:
        raise ValueError(f"truncated or malformed mocap record: {e}") from None
    if not isinstance(obj, dict):
        raise ValueError("mocap record must be a JSON object")
    try:
        avatar = str(obj["avatar"])
        t = float(obj["t"])
        root = np.asarray(obj["root"], dtype=float)
        rot = np.asarray(obj["rot"], dtype=float)
    except (KeyError, TypeError, ValueError) as e:
        raise ValueError(f"bad mocap record: {e}") from None
    if root.shape != (3,):
        raise ValueError(f"mocap root must be [x,y,z], got shape {root.shape}")
    if rot.ndim != 2 or rot.shape[1] != 4 or rot.shape[0] < 1:
        raise ValueError(f"mocap rot must be a list of [w,x,y,z], got shape {rot.shape}")
    if not (math.isfinite(t) and np.all(np.isfinite(root)) and np.all(np.isfinite(rot))):
        raise ValueError("mocap record contains non-finite numbers")
    if expected_bones is not None and rot.shape[0] != expected_bones:
        raise ValueError(
            f"mocap record has {rot.shape[0]} rotations for a "
            f"{expected_bones}-bone skeleton")
    norms = np.linalg.norm(rot, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        worst = float(np.max(np.abs(norms - 1.0)))
        raise ValueError(f"mocap rotation off unit norm by {worst:.2e} (limit 1e-3)")
    return MocapFrame(avatar, t, root, rot / norms[:, None])


def encode_mocap_frame(frame: MocapFrame) -> str:
    return json.dumps({
        "avatar": frame.avatar,
        "t": frame.t,
        "root": [float(v) for v in frame.root],
        "rot": [[float(v) for v in row] for row in frame.rotations],
    }, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# scene snapshots

@dataclass
class AvatarState:
    id: str
    root: Transform
    clip: str
    state: str
    classification: str
    path: list[tuple[float, float]] | None = None


@dataclass
class SceneState:
    """Immutable per-tick record of the whole stage."""

    tick: int
    time: float
    avatars: list[AvatarState]
    cue_pointer: int
    cues_fired: list[str] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


def encode_snapshot(state: SceneState) -> str:
    # keys pre-sorted: snapshot encoding must stay byte-stable for replay
    obj = {
        "avatars": [_avatar_state_to_json(a) for a in state.avatars],
        "cue_pointer": state.cue_pointer,
        "cues_fired": state.cues_fired,
        "diagnostics": state.diagnostics,
        "tick": state.tick,
        "time": state.time,
        "type": "snapshot",
    }
    return json.dumps(obj, separators=(",", ":"))


def _avatar_state_to_json(a: AvatarState) -> dict:
    r = a.root.rotation
    obj = {
        "classification": a.classification,
        "clip": a.clip,
        "id": a.id,
        "root": {"translation": a.root.translation.tolist(),
                 "rotation": (-r if r[0] < 0.0 else r).tolist()},
        "state": a.state,
    }
    if a.path is not None:
        obj["path"] = [[float(x), float(z)] for x, z in a.path]
    return obj


def parse_snapshot(line: str) -> SceneState:
    obj = json.loads(line)
    if obj.get("type") != "snapshot":
        raise ValueError("not a snapshot record")
    avatars = []
    for a in obj["avatars"]:
        path = a.get("path")
        avatars.append(AvatarState(
            id=a["id"], root=transform_from_json(a["root"]), clip=a["clip"],
            state=a["state"], classification=a["classification"],
            path=[(float(x), float(z)) for x, z in path] if path is not None else None))
    return SceneState(
        tick=int(obj["tick"]), time=float(obj["time"]), avatars=avatars,
        cue_pointer=int(obj["cue_pointer"]),
        cues_fired=[str(c) for c in obj["cues_fired"]],
        diagnostics=[str(d) for d in obj["diagnostics"]])


# ---------------------------------------------------------------------------
# JSON codecs for domain values

def transform_to_json(t: Transform) -> dict:
    r = quat.canonical(t.rotation)
    return {"translation": [float(v) for v in t.translation],
            "rotation": [float(v) for v in r]}


def transform_from_json(obj: dict) -> Transform:
    return Transform(np.asarray(obj["translation"], dtype=float),
                     np.asarray(obj["rotation"], dtype=float))


def controller_to_json(cfg: ControllerConfig) -> dict:
    obj = {"origin": cfg.origin, "decision": cfg.decision}
    if cfg.mocap_source:
        obj["mocap_source"] = cfg.mocap_source
    if cfg.use_player:
        obj["use_player"] = True
    if cfg.retarget_map:
        obj["retarget_map"] = cfg.retarget_map
    if cfg.behaviour_tree:
        obj["behaviour_tree"] = cfg.behaviour_tree
    if cfg.move_goal is not None:
        obj["move_goal"] = [float(cfg.move_goal[0]), float(cfg.move_goal[1])]
    return obj


def controller_from_json(obj: dict) -> ControllerConfig:
    goal = obj.get("move_goal")
    return ControllerConfig(
        origin=obj["origin"], decision=obj["decision"],
        mocap_source=obj.get("mocap_source"),
        use_player=bool(obj.get("use_player", False)),
        retarget_map=obj.get("retarget_map"),
        behaviour_tree=obj.get("behaviour_tree"),
        move_goal=(float(goal[0]), float(goal[1])) if goal is not None else None)


def bt_to_json(node) -> dict:
    if isinstance(node, behaviour.Sequence):
        return {"type": "sequence", "children": [bt_to_json(c) for c in node.children]}
    if isinstance(node, behaviour.Selector):
        return {"type": "selector", "children": [bt_to_json(c) for c in node.children]}
    if isinstance(node, behaviour.Inverter):
        return {"type": "inverter", "child": bt_to_json(node.child)}
    if isinstance(node, behaviour.Repeat):
        return {"type": "repeat", "count": node.count, "child": bt_to_json(node.child)}
    if isinstance(node, behaviour.Condition):
        return {"type": "condition", "key": node.key, "op": node.comparator,
                "value": node.operand}
    if isinstance(node, behaviour.Action):
        obj = {"type": node.kind}
        obj.update(node.args)
        if node.kind == behaviour.MOVE_TO and "target" in obj:
            obj["target"] = [float(v) for v in obj["target"]]
        return obj
    raise ValueError(f"not a behaviour node: {node!r}")


def bt_from_json(obj: dict):
    kind = obj["type"]
    if kind == "sequence":
        return behaviour.Sequence([bt_from_json(c) for c in obj["children"]])
    if kind == "selector":
        return behaviour.Selector([bt_from_json(c) for c in obj["children"]])
    if kind == "inverter":
        return behaviour.Inverter(bt_from_json(obj["child"]))
    if kind == "repeat":
        return behaviour.Repeat(bt_from_json(obj["child"]), obj.get("count"))
    if kind == "condition":
        return behaviour.Condition(obj["key"], obj["op"], obj["value"])
    if kind == behaviour.MOVE_TO:
        args = {}
        if "key" in obj:
            args["key"] = obj["key"]
        else:
            args["target"] = [float(v) for v in obj["target"]]
        return behaviour.Action(behaviour.MOVE_TO, args)
    if kind == behaviour.PLAY_CLIP:
        return behaviour.Action(behaviour.PLAY_CLIP, {"clip": obj["clip"]})
    if kind == behaviour.SET_KEY:
        return behaviour.Action(behaviour.SET_KEY,
                                {"key": obj["key"], "value": obj["value"]})
    if kind == behaviour.WAIT:
        return behaviour.Action(behaviour.WAIT, {"seconds": float(obj["seconds"])})
    raise ValueError(f"unknown behaviour node type {kind!r}")


def skeleton_to_json(s: Skeleton) -> dict:
    bones = []
    for b in s.bones:
        bones.append({
            "name": b.name,
            "parent": b.parent,
            "translation": [float(v) for v in b.bind_local.translation],
            "rotation": [float(v) for v in quat.canonical(b.bind_local.rotation)],
            "length": float(b.length),
        })
    return {"name": s.name, "bones": bones}


def clip_to_json(c: Clip) -> dict:
    tracks = {}
    for bone, keys in c.tracks.items():
        tracks[bone] = [{
            "t": float(k.time),
            "translation": [float(v) for v in k.value.translation],
            "rotation": [float(v) for v in quat.canonical(k.value.rotation)],
        } for k in keys]
    return {"name": c.name, "skeleton": c.skeleton, "duration": float(c.duration),
            "loopable": c.loopable, "salience": c.salience,
            "root_mode": c.root_mode, "tracks": tracks}


def navmesh_to_json(mesh: NavMesh) -> dict:
    return {"vertices": [[float(x), float(z)] for x, z in mesh.vertices],
            "triangles": [[int(i) for i in tri] for tri in mesh.triangles]}


def capsule_to_json(c: Capsule) -> dict:
    return {"position": [float(v) for v in c.position], "yaw": float(c.yaw),
            "radius": float(c.radius), "half_height": float(c.half_height)}


def locomotion_to_json(p: LocomotionParams) -> dict:
    return {"walk_clip": p.walk_clip, "walk_speed": p.walk_speed,
            "idle_clip": p.idle_clip, "walk_start": p.walk_start,
            "walk_stop": p.walk_stop, "max_accel": p.max_accel,
            "max_turn_rate": p.max_turn_rate, "rate_min": p.rate_min,
            "rate_max": p.rate_max}


def cue_to_json(c: Cue) -> dict:
    obj = {"id": c.id, "avatar": c.avatar, "salient": c.salient_clip,
           "idle": c.idle_clip, "fade_in": float(c.fade_in)}
    if c.adjust is not None:
        obj["adjust"] = {"position": [float(v) for v in c.adjust.position],
                         "yaw": float(c.adjust.yaw)}
    return obj


# ---------------------------------------------------------------------------
# show document

@dataclass
class AvatarSpec:
    id: str
    skeleton: str
    controller: ControllerConfig
    capsule: Capsule
    locomotion: LocomotionParams | None = None
    blackboard: dict = field(default_factory=dict)
    offset: Transform = field(default_factory=Transform.identity)


@dataclass
class ShowDocument:
    version: int = 1
    name: str = ""
    fixed_step: float = 1.0 / 60.0
    seam_threshold: float = animation.DEFAULT_SEAM_THRESHOLD
    skeletons: dict[str, Skeleton] = field(default_factory=dict)
    clips: dict[str, Clip] = field(default_factory=dict)
    retarget_maps: dict[str, RetargetConfig] = field(default_factory=dict)
    navmesh: NavMesh | None = None
    behaviour_trees: dict[str, object] = field(default_factory=dict)
    avatars: list[AvatarSpec] = field(default_factory=list)
    cues: list[Cue] = field(default_factory=list)
    control_map: dict[tuple[int, int], ControlMessage] = field(default_factory=dict)
    calibration: Transform = field(default_factory=Transform.identity)
    warnings: list[str] = field(default_factory=list)

    def cue_sheet(self) -> CueSheet:
        return CueSheet(self.cues)

    def avatar(self, avatar_id: str) -> AvatarSpec | None:
        for spec in self.avatars:
            if spec.id == avatar_id:
                return spec
        return None


class _Check:
    """Collects errors with JSON-style paths while walking parsed data."""

    def __init__(self, strict: bool):
        self.strict = strict
        self.errors: list[str] = []
        self.warnings: list[str] = []

    def error(self, path: str, msg: str) -> None:
        self.errors.append(f"{path}: {msg}")

    def keys(self, obj: dict, path: str, allowed: set[str], required: set[str]) -> bool:
        ok = True
        for k in required:
            if k not in obj:
                self.error(path, f"missing required field {k!r}")
                ok = False
        for k in obj:
            if k not in allowed:
                msg = f"{path}: unknown field {k!r}"
                if self.strict:
                    self.errors.append(msg)
                    ok = False
                else:
                    self.warnings.append(msg)
        return ok


def _parse_transform(obj, path: str, check: _Check) -> Transform:
    if not isinstance(obj, dict):
        check.error(path, "expected an object with translation/rotation")
        return Transform.identity()
    check.keys(obj, path, {"translation", "rotation"}, set())
    try:
        return Transform(
            np.asarray(obj.get("translation", [0, 0, 0]), dtype=float),
            np.asarray(obj.get("rotation", [1, 0, 0, 0]), dtype=float))
    except (ValueError, TypeError) as e:
        check.error(path, str(e))
        return Transform.identity()


def _parse_skeleton(obj, path: str, check: _Check) -> Skeleton | None:
    if not check.keys(obj, path, {"name", "bones"}, {"name", "bones"}):
        return None
    bones = []
    names = [b.get("name") for b in obj["bones"] if isinstance(b, dict)]
    for i, b in enumerate(obj["bones"]):
        bpath = f"{path}.bones[{i}]"
        if not isinstance(b, dict):
            check.error(bpath, "expected an object")
            return None
        check.keys(b, bpath, {"name", "parent", "translation", "rotation", "length"},
                   {"name"})
        parent = b.get("parent")
        if isinstance(parent, str):
            if parent not in names:
                check.error(bpath, f"unknown parent bone {parent!r}")
                return None
            parent = names.index(parent)
        try:
            bones.append(Bone(
                name=str(b["name"]), parent=parent,
                bind_local=Transform(
                    np.asarray(b.get("translation", [0, 0, 0]), dtype=float),
                    np.asarray(b.get("rotation", [1, 0, 0, 0]), dtype=float)),
                length=float(b.get("length", 0.0))))
        except (ValueError, TypeError, KeyError) as e:
            check.error(bpath, str(e))
            return None
    skel = Skeleton(str(obj["name"]), bones)
    for problem in validate_skeleton(skel):
        check.error(path, problem)
    return skel


def _parse_keyframe(obj, path: str, check: _Check) -> Keyframe | None:
    if not isinstance(obj, dict):
        check.error(path, "expected a keyframe object")
        return None
    check.keys(obj, path, {"t", "translation", "rotation"}, {"t"})
    try:
        return Keyframe(float(obj["t"]), Transform(
            np.asarray(obj.get("translation", [0, 0, 0]), dtype=float),
            np.asarray(obj.get("rotation", [1, 0, 0, 0]), dtype=float)))
    except (ValueError, TypeError) as e:
        check.error(path, str(e))
        return None


def _parse_clip(obj, path: str, check: _Check) -> Clip | None:
    required = {"name", "skeleton", "duration", "tracks"}
    allowed = required | {"loopable", "salience", "root_mode"}
    if not check.keys(obj, path, allowed, required):
        return None
    tracks: dict[str, list[Keyframe]] = {}
    for bone, keys in obj["tracks"].items():
        track = []
        for i, k in enumerate(keys):
            kf = _parse_keyframe(k, f"{path}.tracks.{bone}[{i}]", check)
            if kf is None:
                return None
            track.append(kf)
        tracks[bone] = track
    try:
        clip = Clip(
            name=str(obj["name"]), skeleton=str(obj["skeleton"]),
            duration=float(obj["duration"]), tracks=tracks,
            loopable=bool(obj.get("loopable", False)),
            salience=str(obj.get("salience", animation.SALIENT)),
            root_mode=str(obj.get("root_mode", animation.IN_PLACE)))
    except (ValueError, TypeError) as e:
        check.error(path, str(e))
        return None
    for problem in animation.clip_violations(clip):
        check.error(path, problem)
    return clip


def _parse_locomotion(obj, path: str, check: _Check) -> LocomotionParams | None:
    required = {"walk_clip", "walk_speed", "idle_clip"}
    allowed = required | {"walk_start", "walk_stop", "max_accel", "max_turn_rate",
                          "rate_min", "rate_max"}
    if not check.keys(obj, path, allowed, required):
        return None
    try:
        return LocomotionParams(
            walk_clip=str(obj["walk_clip"]), walk_speed=float(obj["walk_speed"]),
            idle_clip=str(obj["idle_clip"]),
            walk_start=float(obj.get("walk_start", 0.1)),
            walk_stop=float(obj.get("walk_stop", 0.05)),
            max_accel=float(obj.get("max_accel", 2.0)),
            max_turn_rate=float(obj.get("max_turn_rate", math.pi)),
            rate_min=float(obj.get("rate_min", 0.5)),
            rate_max=float(obj.get("rate_max", 2.0)))
    except (ValueError, TypeError) as e:
        check.error(path, str(e))
        return None


def _parse_avatar(obj, path: str, check: _Check) -> AvatarSpec | None:
    required = {"id", "skeleton", "controller"}
    allowed = required | {"capsule", "locomotion", "blackboard", "offset"}
    if not check.keys(obj, path, allowed, required):
        return None
    try:
        cfg = controller_from_json(obj["controller"])
    except (KeyError, TypeError, ValueError) as e:
        check.error(f"{path}.controller", str(e))
        return None
    for problem in direction.controller_violations(cfg):
        check.error(f"{path}.controller", problem)
    capsule = Capsule()
    if "capsule" in obj:
        c = obj["capsule"]
        check.keys(c, f"{path}.capsule",
                   {"position", "yaw", "radius", "half_height"}, set())
        try:
            capsule = Capsule(
                position=np.asarray(c.get("position", [0, 0, 0]), dtype=float),
                yaw=float(c.get("yaw", 0.0)),
                radius=float(c.get("radius", 0.3)),
                half_height=float(c.get("half_height", 0.9)))
        except (ValueError, TypeError) as e:
            check.error(f"{path}.capsule", str(e))
    loco = None
    if "locomotion" in obj:
        loco = _parse_locomotion(obj["locomotion"], f"{path}.locomotion", check)
    offset = Transform.identity()
    if "offset" in obj:
        offset = _parse_transform(obj["offset"], f"{path}.offset", check)
    return AvatarSpec(
        id=str(obj["id"]), skeleton=str(obj["skeleton"]), controller=cfg,
        capsule=capsule, locomotion=loco,
        blackboard=dict(obj.get("blackboard", {})), offset=offset)


def _parse_cue(obj, path: str, check: _Check) -> Cue | None:
    required = {"id", "avatar", "salient", "idle"}
    allowed = required | {"fade_in", "adjust"}
    if not check.keys(obj, path, allowed, required):
        return None
    adjust = None
    if "adjust" in obj:
        a = obj["adjust"]
        check.keys(a, f"{path}.adjust", {"position", "yaw"}, set())
        adjust = StageAdjustment(
            position=np.asarray(a.get("position", [0, 0]), dtype=float),
            yaw=float(a.get("yaw", 0.0)))
    try:
        return Cue(id=str(obj["id"]), avatar=str(obj["avatar"]),
                   salient_clip=str(obj["salient"]), idle_clip=str(obj["idle"]),
                   fade_in=float(obj.get("fade_in", direction.DEFAULT_FADE)),
                   adjust=adjust)
    except (ValueError, TypeError) as e:
        check.error(path, str(e))
        return None


def parse_show(text: str, *, strict: bool = True,
               base_dir: Path | str | None = None) -> ShowDocument:
    """Parse and fully resolve a show document.

    Raises ShowFormatError listing every syntax error, unknown field
    (strict mode) and dangling cross-reference found.
    """
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ShowFormatError(
            [f"line {e.lineno} column {e.colno}: {e.msg}"]) from None
    if not isinstance(obj, dict):
        raise ShowFormatError(["show document must be a JSON object"])

    check = _Check(strict)
    top_allowed = {"version", "name", "settings", "skeletons", "clips",
                   "retarget_maps", "navmesh", "behaviour_trees", "avatars",
                   "cues", "control_map", "calibration"}
    check.keys(obj, "show", top_allowed, {"version"})

    version = obj.get("version")
    if version not in SUPPORTED_VERSIONS:
        raise ShowFormatError(
            [f"show: unsupported version {version!r}, supported: "
             f"{list(SUPPORTED_VERSIONS)}"])

    doc = ShowDocument(version=version, name=str(obj.get("name", "")))

    settings = obj.get("settings", {})
    if settings:
        check.keys(settings, "settings", {"fixed_step", "seam_threshold"}, set())
        doc.fixed_step = float(settings.get("fixed_step", doc.fixed_step))
        doc.seam_threshold = float(settings.get("seam_threshold", doc.seam_threshold))
        if doc.fixed_step <= 0:
            check.error("settings", "fixed_step must be > 0")

    for i, s in enumerate(obj.get("skeletons", [])):
        skel = _parse_skeleton(s, f"skeletons[{i}]", check)
        if skel is not None:
            if skel.name in doc.skeletons:
                check.error(f"skeletons[{i}]", f"duplicate skeleton {skel.name!r}")
            doc.skeletons[skel.name] = skel

    for i, c in enumerate(obj.get("clips", [])):
        cpath = f"clips[{i}]"
        if isinstance(c, dict) and set(c) == {"file"}:
            if base_dir is None:
                check.error(cpath, "sidecar clip reference but no base directory")
                continue
            sidecar = Path(base_dir) / c["file"]
            try:
                c = json.loads(sidecar.read_text(encoding="utf-8"))
            except OSError as e:
                check.error(cpath, f"cannot read sidecar {c['file']!r}: {e}")
                continue
            except json.JSONDecodeError as e:
                check.error(cpath, f"sidecar {c['file']!r}: "
                                   f"line {e.lineno} column {e.colno}: {e.msg}")
                continue
        clip = _parse_clip(c, cpath, check)
        if clip is not None:
            if clip.name in doc.clips:
                check.error(cpath, f"duplicate clip {clip.name!r}")
            doc.clips[clip.name] = clip
            if clip.skeleton not in doc.skeletons:
                check.error(cpath, f"clip {clip.name!r} references unknown "
                                   f"skeleton {clip.skeleton!r}")
            else:
                for problem in animation.clip_violations(
                        clip, doc.skeletons[clip.skeleton]):
                    check.error(cpath, problem)

    for i, m in enumerate(obj.get("retarget_maps", [])):
        mpath = f"retarget_maps[{i}]"
        check.keys(m, mpath, {"name", "source", "target", "pairs"},
                   {"name", "source", "target", "pairs"})
        name = str(m.get("name", f"map{i}"))
        src = doc.skeletons.get(str(m.get("source")))
        tgt = doc.skeletons.get(str(m.get("target")))
        if src is None or tgt is None:
            check.error(mpath, "source or target skeleton is unknown")
            continue
        try:
            pairs = [(str(a), str(b)) for a, b in m.get("pairs", [])]
            doc.retarget_maps[name] = build_retarget(src, tgt, BoneMap(pairs))
        except (KeyError, ValueError, TypeError) as e:
            check.error(mpath, str(e))

    if "navmesh" in obj:
        n = obj["navmesh"]
        check.keys(n, "navmesh", {"vertices", "triangles"}, {"vertices", "triangles"})
        try:
            doc.navmesh = NavMesh(np.asarray(n["vertices"], dtype=float),
                                  np.asarray(n["triangles"], dtype=int))
            for problem in navigation.navmesh_violations(doc.navmesh):
                check.error("navmesh", problem)
        except (ValueError, TypeError, KeyError) as e:
            check.error("navmesh", str(e))

    for i, t in enumerate(obj.get("behaviour_trees", [])):
        tpath = f"behaviour_trees[{i}]"
        check.keys(t, tpath, {"name", "root"}, {"name", "root"})
        try:
            tree = bt_from_json(t["root"])
        except (KeyError, TypeError, ValueError) as e:
            check.error(tpath, str(e))
            continue
        for problem in behaviour.validate_bt(tree):
            check.error(tpath, problem)
        doc.behaviour_trees[str(t["name"])] = tree

    if "calibration" in obj:
        cal = obj["calibration"]
        check.keys(cal, "calibration", {"mocap_to_virtual"}, set())
        if "mocap_to_virtual" in cal:
            doc.calibration = _parse_transform(
                cal["mocap_to_virtual"], "calibration.mocap_to_virtual", check)

    seen_avatars = set()
    for i, a in enumerate(obj.get("avatars", [])):
        apath = f"avatars[{i}]"
        spec = _parse_avatar(a, apath, check)
        if spec is None:
            continue
        if spec.id in seen_avatars:
            check.error(apath, f"duplicate avatar id {spec.id!r}")
        seen_avatars.add(spec.id)
        doc.avatars.append(spec)
        _check_avatar_refs(doc, spec, apath, check)

    seen_cues = set()
    for i, c in enumerate(obj.get("cues", [])):
        cpath = f"cues[{i}]"
        cue = _parse_cue(c, cpath, check)
        if cue is None:
            continue
        if cue.id in seen_cues:
            check.error(cpath, f"duplicate cue id {cue.id!r}")
        seen_cues.add(cue.id)
        doc.cues.append(cue)
        if doc.avatar(cue.avatar) is None:
            check.error(cpath, f"cue {cue.id!r} references unknown avatar "
                               f"{cue.avatar!r}")
        for problem in direction.cue_violations(cue, doc.clips):
            check.error(cpath, problem)

    for i, m in enumerate(obj.get("control_map", [])):
        mpath = f"control_map[{i}]"
        check.keys(m, mpath, {"ch", "note", "action", "cue"}, {"ch", "note"})
        try:
            key = (int(m["ch"]), int(m["note"]))
        except (KeyError, TypeError, ValueError) as e:
            check.error(mpath, str(e))
            continue
        if m.get("action") == "go":
            doc.control_map[key] = Go()
        elif "cue" in m:
            cue_id = str(m["cue"])
            if cue_id not in seen_cues:
                check.error(mpath, f"mapping references unknown cue {cue_id!r}")
            doc.control_map[key] = TriggerCue(cue_id)
        else:
            check.error(mpath, "mapping needs either action \"go\" or a cue id")

    if check.errors:
        raise ShowFormatError(check.errors)
    doc.warnings = check.warnings
    return doc


def _check_avatar_refs(doc: ShowDocument, spec: AvatarSpec, path: str,
                       check: _Check) -> None:
    cfg = spec.controller
    skel = doc.skeletons.get(spec.skeleton)
    if skel is None:
        check.error(path, f"avatar {spec.id!r} references unknown skeleton "
                          f"{spec.skeleton!r}")
    if cfg.retarget_map:
        rmap = doc.retarget_maps.get(cfg.retarget_map)
        if rmap is None:
            check.error(path, f"unknown retarget map {cfg.retarget_map!r}")
        elif skel is not None and rmap.target.name != skel.name:
            check.error(path, f"retarget map {cfg.retarget_map!r} targets "
                              f"{rmap.target.name!r}, avatar uses {skel.name!r}")
    if cfg.behaviour_tree and cfg.behaviour_tree not in doc.behaviour_trees:
        check.error(path, f"unknown behaviour tree {cfg.behaviour_tree!r}")
    if cfg.origin == direction.INTERNAL:
        if spec.locomotion is None:
            check.error(path, "origin=internal needs locomotion parameters")
    if spec.locomotion is not None:
        for clip_name in (spec.locomotion.walk_clip, spec.locomotion.idle_clip):
            clip = doc.clips.get(clip_name)
            if clip is None:
                check.error(path, f"locomotion references unknown clip {clip_name!r}")
                continue
            if skel is not None and clip.skeleton != skel.name:
                check.error(path, f"locomotion clip {clip_name!r} is authored for "
                                  f"{clip.skeleton!r}, avatar uses {skel.name!r}")
            if not clip.loopable:
                check.error(path, f"locomotion clip {clip_name!r} must be loopable")
            if clip.root_mode != animation.IN_PLACE:
                check.error(path, f"locomotion clip {clip_name!r} must be in-place")


def load_show(path: Path | str, *, strict: bool = True) -> ShowDocument:
    path = Path(path)
    return parse_show(path.read_text(encoding="utf-8"), strict=strict,
                      base_dir=path.parent)


def encode_show(doc: ShowDocument) -> str:
    obj: dict = {"version": doc.version}
    if doc.name:
        obj["name"] = doc.name
    obj["settings"] = {"fixed_step": doc.fixed_step,
                       "seam_threshold": doc.seam_threshold}
    obj["skeletons"] = [skeleton_to_json(s) for s in doc.skeletons.values()]
    obj["clips"] = [clip_to_json(c) for c in doc.clips.values()]
    obj["retarget_maps"] = [{
        "name": name,
        "source": cfg.source.name,
        "target": cfg.target.name,
        "pairs": [[cfg.source.bones[si].name, cfg.target.bones[ti].name]
                  for si, ti in zip(cfg.source_indices, cfg.target_indices)],
    } for name, cfg in doc.retarget_maps.items()]
    if doc.navmesh is not None:
        obj["navmesh"] = navmesh_to_json(doc.navmesh)
    obj["behaviour_trees"] = [{"name": name, "root": bt_to_json(tree)}
                              for name, tree in doc.behaviour_trees.items()]
    obj["calibration"] = {"mocap_to_virtual": transform_to_json(doc.calibration)}
    avatars = []
    for spec in doc.avatars:
        a = {"id": spec.id, "skeleton": spec.skeleton,
             "controller": controller_to_json(spec.controller),
             "capsule": capsule_to_json(spec.capsule)}
        if spec.locomotion is not None:
            a["locomotion"] = locomotion_to_json(spec.locomotion)
        if spec.blackboard:
            a["blackboard"] = spec.blackboard
        a["offset"] = transform_to_json(spec.offset)
        avatars.append(a)
    obj["avatars"] = avatars
    obj["cues"] = [cue_to_json(c) for c in doc.cues]
    obj["control_map"] = [
        {"ch": ch, "note": note, **({"action": "go"} if isinstance(m, Go)
                                    else {"cue": m.cue_id})}
        for (ch, note), m in sorted(doc.control_map.items())]
    return json.dumps(obj, indent=2, sort_keys=True)
