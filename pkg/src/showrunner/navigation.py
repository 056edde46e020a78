"""NavMesh pathfinding and path-following steering.

The walkable surface is a single-ground-plane triangulation. Route search
runs A* over a graph whose nodes are the midpoints of shared triangle
edges plus the start and goal; the node path is then string-pulled through
the traversed triangle corridor (funnel algorithm) into tight waypoints.
Everything here is pure and deterministic: A* ties break on node index.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .locomotion import Capsule, LocomotionCommand

SNAP_TOLERANCE = 0.25  # meters; how far off-mesh an endpoint may sit
DEGENERATE_AREA = 1e-9  # m^2
_EPS = 1e-9


class NavigationError(Exception):
    pass


def _cross(o, a, b) -> float:
    """2D cross of (a-o) x (b-o); > 0 when b lies left of ray o->a."""
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


@dataclass
class NavMesh:
    vertices: np.ndarray   # (N,2) ground-plane points, meters
    triangles: np.ndarray  # (M,3) vertex index triples, CCW after init

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=int).reshape(-1, 3)
        # canonicalize winding so cross products have one sign mesh-wide
        for t in range(len(self.triangles)):
            a, b, c = (self.vertices[i] for i in self.triangles[t])
            if _cross(a, b, c) < 0:
                self.triangles[t, 1], self.triangles[t, 2] = \
                    self.triangles[t, 2].copy(), self.triangles[t, 1].copy()
        self.edge_tris: dict[tuple[int, int], list[int]] = {}
        for t, (a, b, c) in enumerate(self.triangles):
            for u, v in ((a, b), (b, c), (c, a)):
                key = (min(u, v), max(u, v))
                self.edge_tris.setdefault(key, []).append(t)
        self.shared_edges = sorted(
            e for e, tris in self.edge_tris.items() if len(tris) == 2)
        # flat float tuples make the per-tick containment tests cheap
        self._tri_pts = [tuple(map(tuple, self.vertices[tri]))
                         for tri in self.triangles]

    def triangle_points(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a, b, c = self.triangles[t]
        return self.vertices[a], self.vertices[b], self.vertices[c]

    def contains(self, t: int, p, eps: float = _EPS) -> bool:
        (ax, az), (bx, bz), (cx, cz) = self._tri_pts[t]
        px, pz = float(p[0]), float(p[1])
        return ((bx - ax) * (pz - az) - (bz - az) * (px - ax) >= -eps
                and (cx - bx) * (pz - bz) - (cz - bz) * (px - bx) >= -eps
                and (ax - cx) * (pz - cz) - (az - cz) * (px - cx) >= -eps)


def navmesh_violations(mesh: NavMesh) -> list[str]:
    """Invariant check: non-degenerate triangles, edges shared pairwise."""
    problems = []
    n = len(mesh.vertices)
    for t, tri in enumerate(mesh.triangles):
        if len(set(int(i) for i in tri)) != 3:
            problems.append(f"triangle {t} repeats a vertex index")
            continue
        if any(not 0 <= int(i) < n for i in tri):
            problems.append(f"triangle {t} references a missing vertex")
            continue
        a, b, c = mesh.triangle_points(t)
        if abs(_cross(a, b, c)) * 0.5 <= DEGENERATE_AREA:
            problems.append(f"triangle {t} is degenerate (area <= {DEGENERATE_AREA})")
    for edge, tris in mesh.edge_tris.items():
        if len(tris) > 2:
            problems.append(
                f"edge {edge} is shared by {len(tris)} triangles: {sorted(tris)}")
    return problems


def locate_polygon(mesh: NavMesh, p, eps: float = _EPS) -> int | None:
    """Lowest-index triangle containing p (boundary inclusive), else None."""
    px, pz = float(p[0]), float(p[1])
    for t, ((ax, az), (bx, bz), (cx, cz)) in enumerate(mesh._tri_pts):
        if ((bx - ax) * (pz - az) - (bz - az) * (px - ax) >= -eps
                and (cx - bx) * (pz - bz) - (cz - bz) * (px - bx) >= -eps
                and (ax - cx) * (pz - cz) - (az - cz) * (px - cx) >= -eps):
            return t
    return None


def _closest_on_segment(p, a, b) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return a.copy()
    u = float((p - a) @ ab) / denom
    u = min(1.0, max(0.0, u))
    return a + u * ab


def closest_point_on_mesh(mesh: NavMesh, p) -> tuple[np.ndarray, int]:
    """Nearest on-mesh point to p and its triangle index."""
    p = np.asarray(p, dtype=float)
    t = locate_polygon(mesh, p)
    if t is not None:
        return p.copy(), t
    best = None
    best_d = math.inf
    best_t = -1
    for ti in range(len(mesh.triangles)):
        a, b, c = mesh.triangle_points(ti)
        for u, v in ((a, b), (b, c), (c, a)):
            q = _closest_on_segment(p, u, v)
            d = float(np.hypot(*(q - p)))
            if d < best_d - 1e-15:
                best, best_d, best_t = q, d, ti
    return best, best_t


@dataclass
class Path:
    waypoints: list[np.ndarray]
    length: float = field(default=0.0)

    def __post_init__(self):
        self.waypoints = [np.asarray(w, dtype=float).reshape(2) for w in self.waypoints]
        if not self.waypoints:
            raise ValueError("path needs at least one waypoint")
        self.length = float(sum(
            np.hypot(*(b - a)) for a, b in zip(self.waypoints, self.waypoints[1:])))

    @property
    def goal(self) -> np.ndarray:
        return self.waypoints[-1]


@dataclass
class RouteGraph:
    """Search graph over edge midpoints plus the two endpoints.

    Node order: one node per shared edge (sorted by index pair), then the
    start node, then the goal node. Nodes are adjacent when they lie in a
    common triangle; weights are Euclidean.
    """

    points: np.ndarray                       # (K,2)
    adjacency: list[list[tuple[int, float]]]
    node_edge: list[tuple[int, int] | None]  # midpoint nodes carry their mesh edge
    start_node: int
    goal_node: int
    start_tri: int
    goal_tri: int


def build_route_graph(mesh: NavMesh, start, goal,
                      start_tri: int, goal_tri: int) -> RouteGraph:
    midpoints = [(mesh.vertices[a] + mesh.vertices[b]) * 0.5
                 for a, b in mesh.shared_edges]
    n_mid = len(midpoints)
    points = np.array(midpoints + [start, goal]).reshape(n_mid + 2, 2)
    node_edge: list[tuple[int, int] | None] = list(mesh.shared_edges) + [None, None]
    start_node, goal_node = n_mid, n_mid + 1

    tri_nodes: dict[int, list[int]] = {}
    for i, edge in enumerate(mesh.shared_edges):
        for t in mesh.edge_tris[edge]:
            tri_nodes.setdefault(t, []).append(i)
    tri_nodes.setdefault(start_tri, []).append(start_node)
    if goal_tri == start_tri:
        tri_nodes[start_tri].append(goal_node)
    else:
        tri_nodes.setdefault(goal_tri, []).append(goal_node)

    adjacency: list[list[tuple[int, float]]] = [[] for _ in range(n_mid + 2)]
    seen: set[tuple[int, int]] = set()
    for nodes in tri_nodes.values():
        for i, u in enumerate(nodes):
            for v in nodes[i + 1:]:
                key = (min(u, v), max(u, v))
                if key in seen:
                    continue
                seen.add(key)
                w = float(np.hypot(*(points[u] - points[v])))
                adjacency[u].append((v, w))
                adjacency[v].append((u, w))
    for lst in adjacency:
        lst.sort()
    return RouteGraph(points, adjacency, node_edge, start_node, goal_node,
                      start_tri, goal_tri)


def astar(graph: RouteGraph) -> tuple[float, list[int]] | None:
    """Optimal route over the graph; ties break on smaller node index."""
    points = graph.points
    goal_pt = points[graph.goal_node]

    def h(i: int) -> float:
        return float(np.hypot(*(points[i] - goal_pt)))

    g = {graph.start_node: 0.0}
    came: dict[int, int] = {}
    open_heap = [(h(graph.start_node), graph.start_node)]
    closed: set[int] = set()
    while open_heap:
        _, u = heapq.heappop(open_heap)
        if u in closed:
            continue
        if u == graph.goal_node:
            path = [u]
            while u in came:
                u = came[u]
                path.append(u)
            return g[graph.goal_node], path[::-1]
        closed.add(u)
        gu = g[u]
        for v, w in graph.adjacency[u]:
            alt = gu + w
            if alt < g.get(v, math.inf):
                g[v] = alt
                came[v] = u
                heapq.heappush(open_heap, (alt + h(v), v))
    return None


def _portals_for(mesh: NavMesh, graph: RouteGraph,
                 nodes: list[int]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Oriented (left, right) portals where the node path changes triangle."""
    hop_tris = []
    tri_sets = []
    for n in nodes:
        if n == graph.start_node:
            tri_sets.append({graph.start_tri})
        elif n == graph.goal_node:
            tri_sets.append({graph.goal_tri})
        else:
            tri_sets.append(set(mesh.edge_tris[graph.node_edge[n]]))
    for a, b in zip(tri_sets, tri_sets[1:]):
        shared = sorted(a & b)
        if not shared:
            raise NavigationError("route nodes do not share a triangle")
        hop_tris.append(shared[0])

    portals = []
    for i in range(1, len(hop_tris)):
        if hop_tris[i] == hop_tris[i - 1]:
            continue
        edge = graph.node_edge[nodes[i]]
        # orient: exiting a CCW triangle through directed edge u->v puts v on
        # the traveller's left
        ta, tb, tc = mesh.triangles[hop_tris[i - 1]]
        for u, v in ((ta, tb), (tb, tc), (tc, ta)):
            if (min(u, v), max(u, v)) == edge:
                portals.append((mesh.vertices[v], mesh.vertices[u]))
                break
        else:
            raise NavigationError("portal edge missing from exited triangle")
    return portals


def _vequal(a, b) -> bool:
    return a[0] == b[0] and a[1] == b[1]


def string_pull(start, goal,
                portals: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    """Funnel algorithm: tighten a corridor of (left, right) portals into
    the shortest polyline from start to goal inside the corridor."""
    start = np.asarray(start, dtype=float)
    goal = np.asarray(goal, dtype=float)
    pts = [start]
    full = portals + [(goal, goal)]
    apex, left, right = start, start, start
    apex_i = left_i = right_i = -1
    i = 0
    while i < len(full):
        pl, pr = full[i]
        # tighten the right side: pr must stay left of apex->L, i.e. inside
        if _cross(apex, right, pr) >= 0.0 or _vequal(apex, right):
            if _vequal(apex, right) or _cross(apex, left, pr) < 0.0:
                right, right_i = pr, i
            else:
                # right swept past left: left corner becomes the new apex
                if not _vequal(left, pts[-1]):
                    pts.append(left)
                apex, apex_i = left, left_i
                left, right = apex, apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        if _cross(apex, left, pl) <= 0.0 or _vequal(apex, left):
            if _vequal(apex, left) or _cross(apex, right, pl) > 0.0:
                left, left_i = pl, i
            else:
                if not _vequal(right, pts[-1]):
                    pts.append(right)
                apex, apex_i = right, right_i
                left, right = apex, apex
                left_i = right_i = apex_i
                i = apex_i + 1
                continue
        i += 1
    if not _vequal(goal, pts[-1]):
        pts.append(goal)
    return pts


def _snap(mesh: NavMesh, p, label: str) -> tuple[np.ndarray, int]:
    p = np.asarray(p, dtype=float).reshape(2)
    t = locate_polygon(mesh, p)
    if t is not None:
        return p, t
    q, t = closest_point_on_mesh(mesh, p)
    if q is None or float(np.hypot(*(q - p))) > SNAP_TOLERANCE:
        raise NavigationError(
            f"{label} point {p.tolist()} is more than {SNAP_TOLERANCE} m off the mesh")
    return q, t


def find_path(mesh: NavMesh, start, goal) -> Path:
    """Shortest route over the midpoint graph, string-pulled tight.

    Endpoints may sit up to the snap tolerance off the mesh. Raises
    NavigationError when an endpoint is too far off or no route exists.
    """
    start, start_tri = _snap(mesh, start, "start")
    goal, goal_tri = _snap(mesh, goal, "goal")
    if _vequal(start, goal):
        return Path([start])
    if start_tri == goal_tri:
        return Path([start, goal])
    graph = build_route_graph(mesh, start, goal, start_tri, goal_tri)
    result = astar(graph)
    if result is None:
        raise NavigationError("no route between start and goal")
    _, nodes = result
    portals = _portals_for(mesh, graph, nodes)
    return Path(string_pull(start, goal, portals))


def follow_path(path: Path, capsule: Capsule, arrival_radius: float,
                cruise_speed: float) -> LocomotionCommand:
    """Steer toward the first waypoint ahead of the capsule that lies beyond
    the arrival radius; a zero command once the capsule is within the radius
    of the final waypoint.

    "Ahead" means past the capsule's closest point on the path polyline, so
    steering is stateless but never doubles back toward waypoints already
    passed.
    """
    pos = capsule.position[[0, 2]]
    wps = path.waypoints
    if float(np.hypot(*(wps[-1] - pos))) <= arrival_radius:
        return LocomotionCommand()

    def aim(wp):
        d = wp - pos
        return LocomotionCommand(velocity=d * (cruise_speed / float(np.hypot(*d))))

    if len(wps) == 1:
        return aim(wps[0])
    best_i, best_d = 0, math.inf
    for i in range(len(wps) - 1):
        q = _closest_on_segment(pos, wps[i], wps[i + 1])
        d = float(np.hypot(*(q - pos)))
        if d < best_d - 1e-12:
            best_i, best_d = i, d
    for wp in wps[best_i + 1:]:
        if float(np.hypot(*(wp - pos))) > arrival_radius:
            return aim(wp)
    return LocomotionCommand()
