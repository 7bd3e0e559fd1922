"""Navigational graph: data model, JSON serialization, and shortest-path queries.

The graph G = (V, E) has three node kinds (intersection, place, portal) and
directed edges whose world-frame direction is discretized into 8 categories.
Heading convention: world frame, 0 = +x (east), counterclockwise positive,
wrapped to [-pi, pi).
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

NUM_DIRECTIONS = 8

# Relative headings of the 8 direction categories, in fixed index order.
DIRECTION_ANGLES = (
    0.0,
    math.pi / 4,
    math.pi / 2,
    3 * math.pi / 4,
    math.pi,
    -3 * math.pi / 4,
    -math.pi / 2,
    -math.pi / 4,
)

NODE_KINDS = ("intersection", "place", "portal")
PORTAL_KINDS = ("door", "lift", "stairs", "escalator", "entrance")


def wrap_angle(theta: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (theta + math.pi) % (2 * math.pi) - math.pi


def angle_diff(a: float, b: float) -> float:
    """Absolute angular distance between two headings, in [0, pi]."""
    return abs(wrap_angle(a - b))


def relative_heading(index: int) -> float:
    """Canonical relative heading of a direction category."""
    return DIRECTION_ANGLES[index]


def opposite_direction(index: int) -> int:
    return (index + 4) % NUM_DIRECTIONS


def discretize_direction(theta: float) -> int:
    """Nearest of the 8 direction categories to ``theta``.

    Exact midpoints (odd multiples of pi/8) break toward the lower index.
    """
    if not math.isfinite(theta):
        raise ValueError(f"direction angle must be finite, got {theta!r}")
    t = wrap_angle(theta)
    best = 0
    best_d = angle_diff(t, DIRECTION_ANGLES[0])
    for i in range(1, NUM_DIRECTIONS):
        d = angle_diff(t, DIRECTION_ANGLES[i])
        if d < best_d:
            best, best_d = i, d
    return best


def normalize_label(text: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return " ".join(text.lower().split())


class GraphValidationError(ValueError):
    """Raised when a graph violates structural invariants.

    ``errors`` holds one message per violation, each naming the offending
    node or edge.
    """

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class NavNode:
    id: str
    kind: str  # one of NODE_KINDS
    position: tuple[float, float, float]
    floor: int = 0
    building: Optional[str] = None
    label: Optional[str] = None
    portal_kind: Optional[str] = None  # one of PORTAL_KINDS, portals only


@dataclass(frozen=True)
class NavEdge:
    src: str
    dst: str
    direction: int  # 0..7
    length: float  # meters


def edge_between(a: NavNode, b: NavNode, length: Optional[float] = None) -> NavEdge:
    """Directed edge a -> b with direction discretized from the positions."""
    dx = b.position[0] - a.position[0]
    dy = b.position[1] - a.position[1]
    if math.hypot(dx, dy) > 1e-9:
        direction = discretize_direction(math.atan2(dy, dx))
    else:
        direction = 0
    if length is None:
        length = math.dist(a.position, b.position)
    return NavEdge(a.id, b.id, direction, length)


class NavGraph:
    """Immutable navigational graph. Mutation produces a new instance."""

    def __init__(self, nodes: Iterable[NavNode], edges: Iterable[NavEdge],
                 meta: Optional[dict] = None, validate: bool = True):
        node_list = sorted(nodes, key=lambda n: n.id)
        self.nodes: dict[str, NavNode] = {n.id: n for n in node_list}
        self.edges: list[NavEdge] = sorted(edges, key=lambda e: (e.src, e.dst))
        self.meta: dict = dict(meta or {})
        self._out: dict[str, list[NavEdge]] = {nid: [] for nid in self.nodes}
        for e in self.edges:
            if e.src in self._out:
                self._out[e.src].append(e)
        self._index: Optional[GraphIndex] = None
        if validate:
            self.validate()

    # -- queries -----------------------------------------------------------

    def node(self, node_id: str) -> NavNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def out_edges(self, node_id: str) -> list[NavEdge]:
        self.node(node_id)
        return self._out[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    def index(self) -> "GraphIndex":
        if self._index is None:
            self._index = GraphIndex(self)
        return self._index

    def shortest_path_next_hop(self, src: str, dst: str) -> Optional[str]:
        """Successor of ``src`` on a minimum-length path to ``dst``.

        Edge cost is metric length. Returns ``src`` when src == dst and
        None when ``dst`` is unreachable. Ties between equal-cost paths
        break toward the smallest successor id.
        """
        idx = self.index()
        si, di = idx.idx_of(src), idx.idx_of(dst)
        if si == di:
            return src
        field = idx.route_field(di)
        hop = field.next_hop[si]
        if hop < 0:
            return None
        return idx.ids[hop]

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        errors: list[str] = []
        seen_ids: set[str] = set()
        for n in self.nodes.values():
            if n.id in seen_ids:
                errors.append(f"node {n.id!r}: duplicate id")
            seen_ids.add(n.id)
            if n.kind not in NODE_KINDS:
                errors.append(f"node {n.id!r}: unknown kind {n.kind!r}")
            if len(n.position) != 3 or not all(math.isfinite(c) for c in n.position):
                errors.append(f"node {n.id!r}: position must be 3 finite coordinates")
            if n.kind == "place":
                if not n.label or not normalize_label(n.label):
                    errors.append(f"node {n.id!r}: place node requires a non-empty label")
            if n.kind == "portal":
                if n.portal_kind not in PORTAL_KINDS:
                    errors.append(f"node {n.id!r}: portal node requires portal_kind")
            elif n.portal_kind is not None:
                errors.append(f"node {n.id!r}: portal_kind only allowed on portal nodes")

        seen_pairs: set[tuple[str, str]] = set()
        for e in self.edges:
            tag = f"edge {e.src!r}->{e.dst!r}"
            if e.src not in self.nodes:
                errors.append(f"{tag}: dangling endpoint {e.src!r}")
                continue
            if e.dst not in self.nodes:
                errors.append(f"{tag}: dangling endpoint {e.dst!r}")
                continue
            if e.src == e.dst:
                errors.append(f"{tag}: self-loop")
            if (e.src, e.dst) in seen_pairs:
                errors.append(f"{tag}: duplicate (from,to) pair")
            seen_pairs.add((e.src, e.dst))
            if not (e.length > 0 and math.isfinite(e.length)):
                errors.append(f"{tag}: length must be positive and finite")
            if not (0 <= e.direction < NUM_DIRECTIONS):
                errors.append(f"{tag}: direction out of range")
                continue
            a, b = self.nodes[e.src], self.nodes[e.dst]
            dx = b.position[0] - a.position[0]
            dy = b.position[1] - a.position[1]
            if a.floor == b.floor and math.hypot(dx, dy) > 1e-9:
                want = discretize_direction(math.atan2(dy, dx))
                if e.direction != want:
                    errors.append(
                        f"{tag}: direction {e.direction} does not match geometry "
                        f"(expected {want})")
        if errors:
            raise GraphValidationError(errors)


@dataclass
class RouteField:
    """Shortest-path data toward one target node, over all sources."""

    dist: np.ndarray      # (V,) cost to target, inf when unreachable
    next_hop: np.ndarray  # (V,) node index of the successor, -1 when unreachable
    edge_vec: np.ndarray  # (V, 2) unit vector toward the successor


class GraphIndex:
    """Array view of a NavGraph for filters: CSR adjacency and route caches.

    Node indices follow the lexicographic order of node ids, so tie-breaks
    by smallest index coincide with tie-breaks by smallest id.
    """

    def __init__(self, g: NavGraph):
        self.graph = g
        self.ids: list[str] = list(g.nodes.keys())  # already sorted
        self._id_to_idx = {nid: i for i, nid in enumerate(self.ids)}
        V = len(self.ids)
        self.positions = np.array(
            [g.nodes[nid].position for nid in self.ids], dtype=np.float64
        ).reshape(V, 3)
        self.floors = np.array([g.nodes[nid].floor for nid in self.ids], dtype=np.int32)
        self.kinds = [g.nodes[nid].kind for nid in self.ids]
        self.intersection_idx = np.array(
            [i for i, k in enumerate(self.kinds) if k == "intersection"], dtype=np.int64)

        # CSR over outgoing edges, segments sorted by destination id.
        indptr = [0]
        nbr: list[int] = []
        e_dir: list[int] = []
        e_len: list[float] = []
        for nid in self.ids:
            for e in g.out_edges(nid):
                nbr.append(self._id_to_idx[e.dst])
                e_dir.append(e.direction)
                e_len.append(e.length)
            indptr.append(len(nbr))
        self.indptr = np.array(indptr, dtype=np.int64)
        self.nbr = np.array(nbr, dtype=np.int64)
        self.edge_dir = np.array(e_dir, dtype=np.int64)
        self.edge_len = np.array(e_len, dtype=np.float64)

        # Unit direction vector of each edge: horizontal displacement, or the
        # canonical angle of its category when the projection degenerates
        # (vertical portal edges).
        src_idx = np.repeat(np.arange(V), np.diff(self.indptr))
        d = self.positions[self.nbr, :2] - self.positions[src_idx, :2]
        norm = np.hypot(d[:, 0], d[:, 1])
        ok = norm > 1e-9
        vec = np.zeros_like(d)
        vec[ok] = d[ok] / norm[ok, None]
        if np.any(~ok):
            ang = np.array(DIRECTION_ANGLES)[self.edge_dir[~ok]]
            vec[~ok, 0] = np.cos(ang)
            vec[~ok, 1] = np.sin(ang)
        self.edge_vec = vec
        self._src_idx = src_idx

        # Reverse CSR for target-rooted Dijkstra.
        order = np.argsort(self.nbr, kind="stable")
        self._rev_src = src_idx[order]
        self._rev_len = self.edge_len[order]
        rev_indptr = np.zeros(V + 1, dtype=np.int64)
        np.add.at(rev_indptr, self.nbr + 1, 1)
        self._rev_indptr = np.cumsum(rev_indptr)

        self._route_cache: dict[int, RouteField] = {}
        self._candidate_cache: Optional[np.ndarray] = None
        self._floor_trees: dict[int, tuple] = {}

    def idx_of(self, node_id: str) -> int:
        try:
            return self._id_to_idx[node_id]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    def out_slice(self, v: int) -> slice:
        return slice(self.indptr[v], self.indptr[v + 1])

    def route_field(self, target: int) -> RouteField:
        """Dijkstra from ``target`` over reversed edges, with next hops.

        dist[v] accumulates as len(v, w) + dist[w], matching a right-fold
        over the path so equal-cost ties are reproducible.
        """
        cached = self._route_cache.get(target)
        if cached is not None:
            return cached
        V = len(self.ids)
        dist = np.full(V, np.inf)
        dist[target] = 0.0
        heap = [(0.0, target)]
        done = np.zeros(V, dtype=bool)
        while heap:
            d_v, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            for k in range(self._rev_indptr[v], self._rev_indptr[v + 1]):
                u = self._rev_src[k]
                nd = self._rev_len[k] + d_v
                if nd < dist[u]:
                    dist[u] = nd
                    heapq.heappush(heap, (nd, u))

        next_hop = np.full(V, -1, dtype=np.int64)
        edge_vec = np.zeros((V, 2))
        for v in range(V):
            if v == target or not np.isfinite(dist[v]):
                continue
            lo, hi = self.indptr[v], self.indptr[v + 1]
            best_k = -1
            for k in range(lo, hi):
                if self.edge_len[k] + dist[self.nbr[k]] == dist[v]:
                    best_k = k  # neighbors sorted by id: first hit is smallest
                    break
            if best_k >= 0:
                next_hop[v] = self.nbr[best_k]
                edge_vec[v] = self.edge_vec[best_k]
        field = RouteField(dist, next_hop, edge_vec)
        self._route_cache[target] = field
        return field

    def floor_tree(self, floor: int):
        """KD-tree over (x, y) of the nodes on one floor, plus their indices.

        Returns (tree, member_indices); tree is None for empty floors.
        """
        if floor not in self._floor_trees:
            from scipy.spatial import cKDTree
            members = np.nonzero(self.floors == floor)[0]
            tree = cKDTree(self.positions[members, :2]) if len(members) else None
            self._floor_trees[floor] = (tree, members)
        return self._floor_trees[floor]

    def candidate_edges(self) -> np.ndarray:
        """(V, 8) table of CSR edge positions chosen for each topo action.

        Entry [v, a] is the outgoing edge of v whose direction category is
        angularly closest to action a; ties prefer the smaller angular gap,
        then the lower category index, then the smaller destination id.
        -1 when v has no outgoing edges.
        """
        if self._candidate_cache is not None:
            return self._candidate_cache
        V = len(self.ids)
        table = np.full((V, NUM_DIRECTIONS), -1, dtype=np.int64)
        angles = np.array(DIRECTION_ANGLES)
        for v in range(V):
            lo, hi = self.indptr[v], self.indptr[v + 1]
            if lo == hi:
                continue
            dirs = self.edge_dir[lo:hi]
            for a in range(NUM_DIRECTIONS):
                gaps = np.abs(np.remainder(angles[dirs] - angles[a] + np.pi,
                                           2 * np.pi) - np.pi)
                key = min(range(hi - lo),
                          key=lambda k: (gaps[k], dirs[k], self.nbr[lo + k]))
                table[v, a] = lo + key
        self._candidate_cache = table
        return table


# -- serialization ----------------------------------------------------------

_META_KEYS = {"name", "crs_origin", "floor_height", "sources", "exterior"}
_NODE_KEYS = {"id", "kind", "pos", "floor", "building", "label", "portal_kind"}
_NODE_REQUIRED = {"id", "kind", "pos", "floor"}
_EDGE_KEYS = {"from", "to", "dir", "len"}


def save_graph(g: NavGraph) -> bytes:
    """Serialize to the graph JSON format. Deterministic byte output."""
    nodes = []
    for nid in sorted(g.nodes):
        n = g.nodes[nid]
        rec: dict = {"id": n.id, "kind": n.kind,
                     "pos": [float(c) for c in n.position], "floor": n.floor}
        if n.building is not None:
            rec["building"] = n.building
        if n.label is not None:
            rec["label"] = n.label
        if n.portal_kind is not None:
            rec["portal_kind"] = n.portal_kind
        nodes.append(rec)
    edges = [{"from": e.src, "to": e.dst, "dir": e.direction, "len": e.length}
             for e in sorted(g.edges, key=lambda e: (e.src, e.dst))]
    doc = {"meta": _meta_to_json(g.meta), "nodes": nodes, "edges": edges}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _meta_to_json(meta: dict) -> dict:
    out = {}
    for k in sorted(meta):
        if k not in _META_KEYS:
            raise GraphValidationError([f"meta: unknown field {k!r}"])
        out[k] = meta[k]
    return out


def load_graph(data: bytes | str) -> NavGraph:
    """Parse and validate the graph JSON format. Unknown fields rejected."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise GraphValidationError([f"invalid JSON: {exc}"]) from exc
    if not isinstance(doc, dict):
        raise GraphValidationError(["top level must be an object"])
    errors: list[str] = []
    extra = set(doc) - {"meta", "nodes", "edges"}
    if extra:
        errors.append(f"unknown top-level fields {sorted(extra)}")
    missing = {"meta", "nodes", "edges"} - set(doc)
    if missing:
        errors.append(f"missing top-level fields {sorted(missing)}")
    if errors:
        raise GraphValidationError(errors)

    meta = doc["meta"]
    if not isinstance(meta, dict):
        errors.append("meta must be an object")
        meta = {}
    for k in meta:
        if k not in _META_KEYS:
            errors.append(f"meta: unknown field {k!r}")

    nodes: list[NavNode] = []
    for i, rec in enumerate(doc["nodes"]):
        tag = f"nodes[{i}]"
        if not isinstance(rec, dict):
            errors.append(f"{tag}: must be an object")
            continue
        extra = set(rec) - _NODE_KEYS
        if extra:
            errors.append(f"{tag}: unknown fields {sorted(extra)}")
        missing = _NODE_REQUIRED - set(rec)
        if missing:
            errors.append(f"{tag}: missing fields {sorted(missing)}")
            continue
        pos = rec["pos"]
        if not (isinstance(pos, list) and len(pos) == 3):
            errors.append(f"{tag} ({rec.get('id')!r}): pos must be [x, y, z]")
            continue
        nodes.append(NavNode(
            id=str(rec["id"]), kind=rec["kind"],
            position=(float(pos[0]), float(pos[1]), float(pos[2])),
            floor=int(rec["floor"]), building=rec.get("building"),
            label=rec.get("label"), portal_kind=rec.get("portal_kind")))

    edges: list[NavEdge] = []
    for i, rec in enumerate(doc["edges"]):
        tag = f"edges[{i}]"
        if not isinstance(rec, dict):
            errors.append(f"{tag}: must be an object")
            continue
        extra = set(rec) - _EDGE_KEYS
        if extra:
            errors.append(f"{tag}: unknown fields {sorted(extra)}")
        missing = _EDGE_KEYS - set(rec)
        if missing:
            errors.append(f"{tag}: missing fields {sorted(missing)}")
            continue
        edges.append(NavEdge(str(rec["from"]), str(rec["to"]),
                             int(rec["dir"]), float(rec["len"])))

    if errors:
        raise GraphValidationError(errors)
    return NavGraph(nodes, edges, meta=meta)
