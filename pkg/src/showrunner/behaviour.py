"""Behaviour trees ticked against a per-avatar blackboard.

Composites are resumable ("memory" semantics): a Running child is re-ticked
first on the next tick and its succeeded siblings are not re-evaluated.
Trees are plain data so shows can declare them in content files; the
running state lives in a separate memory dict owned by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUCCESS = "success"
FAILURE = "failure"
RUNNING = "running"

MOVE_TO = "move_to"
PLAY_CLIP = "play_clip"
SET_KEY = "set_key"
WAIT = "wait"
ACTION_KINDS = (MOVE_TO, PLAY_CLIP, SET_KEY, WAIT)

COMPARATORS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


class Blackboard:
    """String-keyed store of booleans, numbers, ground-plane points and
    strings. Reads of absent keys raise; defaults would hide wiring bugs."""

    def __init__(self, entries: dict | None = None):
        self.entries = dict(entries) if entries else {}

    def get(self, key: str):
        if key not in self.entries:
            raise KeyError(f"blackboard has no key {key!r}")
        return self.entries[key]

    def set(self, key: str, value) -> None:
        self.entries[key] = value

    def has(self, key: str) -> bool:
        return key in self.entries

    def copy(self) -> "Blackboard":
        return Blackboard(self.entries)


@dataclass
class Sequence:
    children: list


@dataclass
class Selector:
    children: list


@dataclass
class Condition:
    key: str
    comparator: str
    operand: object


@dataclass
class Action:
    kind: str
    args: dict = field(default_factory=dict)


@dataclass
class Inverter:
    child: object


@dataclass
class Repeat:
    child: object
    count: int | None = None  # None repeats forever


@dataclass
class MoveToCommand:
    target: np.ndarray

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=float).reshape(2)


@dataclass
class PlayClipCommand:
    clip: str


@dataclass
class BTContext:
    """What action leaves may observe about their avatar."""

    position: np.ndarray | None = None  # ground-plane (x,z)
    arrival_radius: float = 0.25


@dataclass
class TickResult:
    status: str
    commands: list
    memory: dict
    diagnostics: list[str]


def validate_bt(tree) -> list[str]:
    """Structural check; empty list means the tree is well formed."""
    problems = []

    def walk(node, path):
        where = "/".join(str(p) for p in path) or "root"
        if isinstance(node, (Sequence, Selector)):
            if not node.children:
                problems.append(f"{type(node).__name__} at {where} has no children")
            for i, child in enumerate(node.children):
                walk(child, path + (i,))
        elif isinstance(node, Inverter):
            walk(node.child, path + (0,))
        elif isinstance(node, Repeat):
            if node.count is not None and node.count < 1:
                problems.append(f"Repeat at {where} has count {node.count}, needs >= 1")
            walk(node.child, path + (0,))
        elif isinstance(node, Condition):
            if node.comparator not in COMPARATORS:
                problems.append(f"Condition at {where} has unknown comparator "
                                f"{node.comparator!r}")
        elif isinstance(node, Action):
            if node.kind not in ACTION_KINDS:
                problems.append(f"Action at {where} has unknown kind {node.kind!r}")
        else:
            problems.append(f"unknown node type {type(node).__name__} at {where}")

    walk(tree, ())
    return problems


def _clear(memory: dict, prefix: tuple) -> None:
    stale = [k for k in memory if k[0][:len(prefix)] == prefix]
    for k in stale:
        del memory[k]


class _Tick:
    __slots__ = ("bb", "dt", "ctx", "memory", "commands", "diagnostics",
                 "move_goal_held")

    def __init__(self, bb, dt, ctx, memory):
        self.bb = bb
        self.dt = dt
        self.ctx = ctx
        self.memory = memory
        self.commands = []
        self.diagnostics = []
        self.move_goal_held = False


def tick_bt(tree, bb: Blackboard, dt: float, ctx: BTContext | None = None,
            memory: dict | None = None) -> TickResult:
    """Depth-first tick; returns status, emitted commands and the running
    state to pass back next tick."""
    state = _Tick(bb, dt, ctx or BTContext(), {} if memory is None else memory)
    status = _tick_node(tree, (), state)
    return TickResult(status, state.commands, state.memory, state.diagnostics)


def _tick_node(node, path: tuple, s: _Tick) -> str:
    if isinstance(node, Sequence):
        start = s.memory.get((path, "idx"), 0)
        for i in range(start, len(node.children)):
            status = _tick_node(node.children[i], path + (i,), s)
            if status == RUNNING:
                s.memory[(path, "idx")] = i
                return RUNNING
            if status == FAILURE:
                _clear(s.memory, path)
                return FAILURE
        _clear(s.memory, path)
        return SUCCESS

    if isinstance(node, Selector):
        start = s.memory.get((path, "idx"), 0)
        for i in range(start, len(node.children)):
            status = _tick_node(node.children[i], path + (i,), s)
            if status == RUNNING:
                s.memory[(path, "idx")] = i
                return RUNNING
            if status == SUCCESS:
                _clear(s.memory, path)
                return SUCCESS
        _clear(s.memory, path)
        return FAILURE

    if isinstance(node, Condition):
        if not s.bb.has(node.key):
            s.diagnostics.append(
                f"condition reads absent blackboard key {node.key!r}")
            return FAILURE
        value = s.bb.get(node.key)
        try:
            ok = COMPARATORS[node.comparator](value, node.operand)
        except TypeError:
            s.diagnostics.append(
                f"condition {node.key!r} {node.comparator} {node.operand!r} "
                f"cannot compare with {value!r}")
            return FAILURE
        return SUCCESS if ok else FAILURE

    if isinstance(node, Inverter):
        status = _tick_node(node.child, path + (0,), s)
        if status == SUCCESS:
            return FAILURE
        if status == FAILURE:
            return SUCCESS
        return RUNNING

    if isinstance(node, Repeat):
        status = _tick_node(node.child, path + (0,), s)
        if status == RUNNING:
            return RUNNING
        if status == FAILURE:
            _clear(s.memory, path)
            return FAILURE
        done = s.memory.get((path, "done"), 0) + 1
        if node.count is not None and done >= node.count:
            _clear(s.memory, path)
            return SUCCESS
        s.memory[(path, "done")] = done
        _clear(s.memory, path + (0,))  # child restarts fresh next tick
        return RUNNING

    if isinstance(node, Action):
        return _tick_action(node, path, s)

    raise TypeError(f"not a behaviour tree node: {node!r}")


def _tick_action(node: Action, path: tuple, s: _Tick) -> str:
    if node.kind == SET_KEY:
        s.bb.set(node.args["key"], node.args["value"])
        return SUCCESS

    if node.kind == PLAY_CLIP:
        s.commands.append(PlayClipCommand(node.args["clip"]))
        return SUCCESS

    if node.kind == WAIT:
        elapsed = s.memory.get((path, "elapsed"), 0.0) + s.dt
        if elapsed >= node.args["seconds"]:
            _clear(s.memory, path)
            return SUCCESS
        s.memory[(path, "elapsed")] = elapsed
        return RUNNING

    if node.kind == MOVE_TO:
        if "key" in node.args:
            if not s.bb.has(node.args["key"]):
                s.diagnostics.append(
                    f"move_to reads absent blackboard key {node.args['key']!r}")
                return FAILURE
            target = np.asarray(s.bb.get(node.args["key"]), dtype=float)
        else:
            target = np.asarray(node.args["target"], dtype=float)
        if s.ctx.position is None:
            s.diagnostics.append("move_to ticked without a positioned avatar")
            return FAILURE
        d = target - s.ctx.position
        if float(np.hypot(d[0], d[1])) <= s.ctx.arrival_radius:
            return SUCCESS
        # only the first running move holds the navigation goal this tick
        if not s.move_goal_held:
            s.commands.append(MoveToCommand(target))
            s.move_goal_held = True
        return RUNNING

    raise ValueError(f"unknown action kind {node.kind!r}")
