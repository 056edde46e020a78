"""Independent oracles the test suite checks the runtime against.

Each oracle deliberately reimplements its result by a different route:
FK via 4x4 homogeneous matrices, routing via Dijkstra, behaviour ticks via
a from-scratch interpreter. None of them import the code paths they judge.
"""

from __future__ import annotations

import heapq
import math

import numpy as np


# ---------------------------------------------------------------------------
# forward kinematics via 4x4 matrix composition

def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def homogeneous(translation, rotation) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = quat_to_matrix(rotation)
    m[:3, 3] = np.asarray(translation, dtype=float)
    return m


def matrix_fk(parents, translations, rotations):
    """World 4x4 matrices by plain matrix products down the hierarchy."""
    world = []
    for i, parent in enumerate(parents):
        local = homogeneous(translations[i], rotations[i])
        world.append(local if parent is None else world[parent] @ local)
    return world


def matrix_to_quat(m) -> np.ndarray:
    """Rotation matrix back to (w,x,y,z), Shepperd's method."""
    t = np.trace(m)
    if t > 0:
        s = math.sqrt(t + 1.0) * 2
        return np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                         (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    i = int(np.argmax([m[0, 0], m[1, 1], m[2, 2]]))
    if i == 0:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        return np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                         (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    if i == 1:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        return np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                         0.25 * s, (m[1, 2] + m[2, 1]) / s])
    s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
    return np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                     (m[1, 2] + m[2, 1]) / s, 0.25 * s])


# ---------------------------------------------------------------------------
# slerp via axis-angle interpolation

def axis_angle_slerp(q0, q1, alpha):
    """Interpolate by converting the relative rotation to axis-angle and
    scaling the angle; valid for the shortest arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if float(np.dot(q0, q1)) < 0:
        q1 = -q1
    # relative rotation r = q0^-1 * q1
    w0, x0, y0, z0 = q0[0], -q0[1], -q0[2], -q0[3]
    w1, x1, y1, z1 = q1
    r = np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])
    angle = 2.0 * math.atan2(float(np.linalg.norm(r[1:])), float(r[0]))
    if angle < 1e-12:
        return q0.copy()
    axis = r[1:] / np.linalg.norm(r[1:])
    half = 0.5 * angle * alpha
    partial = np.array([math.cos(half), *(math.sin(half) * axis)])
    w0, x0, y0, z0 = q0
    w1, x1, y1, z1 = partial
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


# ---------------------------------------------------------------------------
# shortest routes via Dijkstra (same tie-break rule: smaller node index)

def dijkstra(adjacency, src, dst):
    """(cost, node path) over an adjacency list [(neighbor, weight), ...]."""
    dist = {src: 0.0}
    came = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == dst:
            path = [u]
            while u in came:
                u = came[u]
                path.append(u)
            return d, path[::-1]
        done.add(u)
        for v, w in adjacency[u]:
            alt = dist[u] + w
            if alt < dist.get(v, math.inf):
                dist[v] = alt
                came[v] = u
                heapq.heappush(heap, (alt, v))
    return None


# ---------------------------------------------------------------------------
# reference behaviour-tree interpreter (no shared code with the runtime)

class RefTick:
    def __init__(self, board, dt=1.0, position=None, arrival_radius=0.25):
        self.board = board
        self.dt = dt
        self.position = position
        self.arrival_radius = arrival_radius
        self.emitted = []
        self.diagnostics = 0
        self.move_held = False


_REF_OPS = {
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
}


def ref_tick(spec, state: RefTick, memory: dict, path=()):
    """Tick a tree written as nested tuples:

    ("seq", [children]) / ("sel", [children]) / ("cond", key, op, operand)
    ("set", key, value) / ("wait", seconds) / ("move", (x, z))
    ("play", clip) / ("inv", child) / ("repeat", count_or_None, child)

    Returns "success" | "failure" | "running". Memory keys mirror the node
    path so resumable composites can be checked independently.
    """
    kind = spec[0]
    if kind in ("seq", "sel"):
        children = spec[1]
        want_stop = "failure" if kind == "seq" else "success"
        start = memory.get(path, 0)
        for i in range(start, len(children)):
            status = ref_tick(children[i], state, memory, path + (i,))
            if status == "running":
                memory[path] = i
                return "running"
            if status == want_stop:
                _ref_forget(memory, path)
                return want_stop
        _ref_forget(memory, path)
        return "success" if kind == "seq" else "failure"
    if kind == "cond":
        _, key, op, operand = spec
        if key not in state.board:
            state.diagnostics += 1
            return "failure"
        try:
            ok = _REF_OPS[op](state.board[key], operand)
        except TypeError:
            state.diagnostics += 1
            return "failure"
        return "success" if ok else "failure"
    if kind == "set":
        state.board[spec[1]] = spec[2]
        return "success"
    if kind == "wait":
        elapsed = memory.get(path, 0.0) + state.dt
        if elapsed >= spec[1]:
            _ref_forget(memory, path)
            return "success"
        memory[path] = elapsed
        return "running"
    if kind == "play":
        state.emitted.append(("play", spec[1]))
        return "success"
    if kind == "move":
        target = np.asarray(spec[1], dtype=float)
        if state.position is None:
            state.diagnostics += 1
            return "failure"
        if float(np.hypot(*(target - state.position))) <= state.arrival_radius:
            return "success"
        if not state.move_held:
            state.emitted.append(("move", tuple(target)))
            state.move_held = True
        return "running"
    if kind == "inv":
        status = ref_tick(spec[1], state, memory, path + (0,))
        if status == "running":
            return "running"
        return "failure" if status == "success" else "success"
    if kind == "repeat":
        _, count, child = spec
        status = ref_tick(child, state, memory, path + (0,))
        if status == "running":
            return "running"
        if status == "failure":
            _ref_forget(memory, path)
            return "failure"
        done = memory.get(path + ("n",), 0) + 1
        if count is not None and done >= count:
            _ref_forget(memory, path)
            return "success"
        memory[path + ("n",)] = done
        _ref_forget(memory, path + (0,))
        return "running"
    raise ValueError(f"unknown reference node {kind!r}")


def _ref_forget(memory, prefix):
    for k in [k for k in memory if k[:len(prefix)] == prefix]:
        del memory[k]
