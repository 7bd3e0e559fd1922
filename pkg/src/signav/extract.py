"""Floor-plan extraction: binarized raster + annotation sidecar -> NavGraph.

Pipeline: iterative thinning of the free space, chain tracing of the corridor
skeleton, enclosed-region polygons via connected components and boundary
tracing, chordal-axis centerlines for traversable regions, then place and
portal nodes wired in from the sidecar annotations.

Pixel frame: x = column, y = row (y down). World frame: x = column * scale,
y = (height - 1 - row) * scale, so image-up is north. z = 0 (floor-local).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from PIL import Image
from scipy import ndimage as ndi
from scipy.spatial import Delaunay

from ._geom import (douglas_peucker, points_in_polygon, polyline_length,
                    ring_centroid, shoelace_area, trace_boundary)
from .graph import NavEdge, NavGraph, NavNode, discretize_direction, normalize_label

_EIGHT = ndi.generate_binary_structure(2, 2)


@dataclass
class ExtractParams:
    conn_threshold: int = 3      # region degree at which a space is traversable
    merge_radius: float = 0.5    # m, junction cluster collapse
    spur_len: float = 1.0        # m, dangling chains shorter than this are cut
    dp_tol: float = 0.25         # m, polyline simplification tolerance
    portal_snap: float = 3.0     # m, portal-to-intersection connection radius
    door_gap: int = 3            # px, region adjacency search width
    min_region_area: float = 1.0  # m^2, regions below this are ignored
    densify_px: float = 2.0      # boundary sampling step for the chordal axis
    floor_height: float = 4.0    # m, recorded in graph metadata


@dataclass
class FloorMask:
    width: int
    height: int
    scale: float  # meters per pixel
    floor: int
    free: np.ndarray  # (H, W) bool, True = traversable

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError("scale must be > 0")
        self.free = np.asarray(self.free, dtype=bool)
        if self.free.shape != (self.height, self.width):
            raise ValueError("free bitmap shape does not match width/height")

    def to_world(self, px: np.ndarray) -> np.ndarray:
        """Pixel (x, y) coordinates to world meters (y flipped to north-up)."""
        px = np.atleast_2d(np.asarray(px, dtype=np.float64))
        out = np.empty_like(px)
        out[:, 0] = px[:, 0] * self.scale
        out[:, 1] = (self.height - 1 - px[:, 1]) * self.scale
        return out


@dataclass
class AnnotationSidecar:
    scale_m_per_px: float
    floor: int
    labels: list[dict] = field(default_factory=list)    # {"text", "px": [x, y]}
    portals: list[dict] = field(default_factory=list)   # {"kind", "px": [x, y]}
    exterior_hint: Optional[list] = None                # [[x, y], ...] pixels

    @classmethod
    def from_json(cls, data) -> "AnnotationSidecar":
        doc = json.loads(data) if isinstance(data, (str, bytes)) else data
        known = {"scale_m_per_px", "floor", "labels", "portals", "exterior_hint"}
        extra = set(doc) - known
        if extra:
            raise ValueError(f"sidecar: unknown fields {sorted(extra)}")
        return cls(scale_m_per_px=float(doc["scale_m_per_px"]),
                   floor=int(doc["floor"]),
                   labels=list(doc.get("labels", [])),
                   portals=list(doc.get("portals", [])),
                   exterior_hint=doc.get("exterior_hint"))


@dataclass
class RegionPolygon:
    ring: np.ndarray             # (V, 2) pixel vertices, simple
    holes: list[np.ndarray]
    connectivity_degree: int
    component: int               # label id in the component image


@dataclass
class ExtractionResult:
    graph: NavGraph
    unmatched_labels: list[tuple[str, str]]  # (text, reason)
    warnings: list[str]


def load_mask(path, scale: float, floor: int) -> FloorMask:
    """Read a PNG/PGM mask; pixels >= 128 are free space."""
    img = np.asarray(Image.open(path).convert("L"))
    return FloorMask(width=img.shape[1], height=img.shape[0], scale=scale,
                     floor=floor, free=img >= 128)


# -- thinning -----------------------------------------------------------------


def thin_mask(mask: FloorMask) -> np.ndarray:
    """1-pixel-wide 8-connected skeleton of the free space.

    Zhang-Suen style iterative thinning; runs until a full pass deletes
    nothing, which makes re-thinning a no-op.
    """
    return _zhang_suen(mask.free)


def _zhang_suen(img: np.ndarray) -> np.ndarray:
    skel = np.asarray(img, dtype=bool).copy()
    while True:
        changed = False
        for step in (0, 1):
            kill = _thin_pass(skel, step)
            if kill.any():
                skel[kill] = False
                changed = True
        if not changed:
            return skel


def _thin_pass(img: np.ndarray, step: int) -> np.ndarray:
    h, w = img.shape
    p = np.zeros((h + 2, w + 2), dtype=bool)
    p[1:-1, 1:-1] = img
    P2 = p[0:-2, 1:-1]
    P3 = p[0:-2, 2:]
    P4 = p[1:-1, 2:]
    P5 = p[2:, 2:]
    P6 = p[2:, 1:-1]
    P7 = p[2:, 0:-2]
    P8 = p[1:-1, 0:-2]
    P9 = p[0:-2, 0:-2]
    ring = [P2, P3, P4, P5, P6, P7, P8, P9, P2]
    B = sum(x.astype(np.uint8) for x in ring[:8])
    A = sum((~ring[i] & ring[i + 1]).astype(np.uint8) for i in range(8))
    if step == 0:
        extra = ~(P2 & P4 & P6) & ~(P4 & P6 & P8)
    else:
        extra = ~(P2 & P4 & P8) & ~(P2 & P6 & P8)
    return img & (B >= 2) & (B <= 6) & (A == 1) & extra


# -- chain graph --------------------------------------------------------------


class _ChainGraph:
    """Junction/endpoint nodes joined by pixel polyline chains."""

    def __init__(self):
        self.pos: dict = {}      # key -> np.array([x, y]) pixel coords
        self.chains: list[list] = []  # [key_a, key_b, (P, 2) polyline]

    def add_node(self, key, pos):
        self.pos[key] = np.asarray(pos, dtype=np.float64)

    def add_chain(self, a, b, poly):
        self.chains.append([a, b, np.asarray(poly, dtype=np.float64)])

    def degrees(self) -> dict:
        deg = {k: 0 for k in self.pos}
        for a, b, _ in self.chains:
            deg[a] += 1
            deg[b] += 1
        return deg

    def merge_clusters(self, radius: float):
        """Collapse nodes closer than ``radius`` (single-link) to centroids."""
        keys = sorted(self.pos)
        if not keys:
            return
        parent = {k: k for k in keys}

        def find(k):
            while parent[k] != k:
                parent[k] = parent[parent[k]]
                k = parent[k]
            return k

        for i, a in enumerate(keys):
            pa = self.pos[a]
            for b in keys[i + 1:]:
                if np.hypot(*(pa - self.pos[b])) < radius:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)

        groups: dict = {}
        for k in keys:
            groups.setdefault(find(k), []).append(k)
        rep_pos = {r: np.mean([self.pos[k] for k in g], axis=0)
                   for r, g in groups.items()}
        remap = {k: find(k) for k in keys}

        self.pos = rep_pos
        old = self.chains
        self.chains = []
        for a, b, poly in old:
            ra, rb = remap[a], remap[b]
            poly = poly.copy()
            poly[0] = rep_pos[ra]
            poly[-1] = rep_pos[rb]
            if ra == rb:
                # Real loop: split at its midpoint so no self-loop edge forms.
                # Tiny loops inside a merged cluster are artifacts and drop out.
                if polyline_length(poly) >= 4 * radius and len(poly) >= 3:
                    mid = len(poly) // 2
                    mkey = (ra, "loopmid", len(self.chains))
                    self.add_node(mkey, poly[mid])
                    self.add_chain(ra, mkey, poly[:mid + 1])
                    self.add_chain(mkey, rb, poly[mid:])
            else:
                self.add_chain(ra, rb, poly)

    def prune_spurs(self, min_len: float):
        while True:
            deg = self.degrees()
            keep = []
            removed = False
            for a, b, poly in self.chains:
                dangling = deg[a] == 1 or deg[b] == 1
                if dangling and polyline_length(poly) < min_len:
                    removed = True
                else:
                    keep.append([a, b, poly])
            self.chains = keep
            if not removed:
                break
        deg = self.degrees()
        self.pos = {k: p for k, p in self.pos.items() if deg[k] > 0}

    def smooth_degree2(self):
        """Fuse pass-through nodes so chains run junction to junction."""
        while True:
            deg = self.degrees()
            target = None
            for k in sorted(self.pos, key=str):
                if deg[k] != 2:
                    continue
                incident = [i for i, c in enumerate(self.chains)
                            if c[0] == k or c[1] == k]
                if len(incident) != 2:
                    continue  # single chain looping through k
                i1, i2 = incident
                a1, b1, p1 = self.chains[i1]
                a2, b2, p2 = self.chains[i2]
                left = p1 if b1 == k else p1[::-1]
                lkey = a1 if b1 == k else b1
                right = p2 if a2 == k else p2[::-1]
                rkey = b2 if a2 == k else a2
                if lkey == rkey:
                    continue  # fusing would create a self-loop; keep the bend
                target = (k, i1, i2, lkey, rkey,
                          np.vstack([left, right[1:]]))
                break
            if target is None:
                return
            k, i1, i2, lkey, rkey, poly = target
            self.chains = [c for i, c in enumerate(self.chains) if i not in (i1, i2)]
            self.chains.append([lkey, rkey, poly])
            del self.pos[k]


def _neighbors8(p):
    y, x = p
    return [(y - 1, x - 1), (y - 1, x), (y - 1, x + 1), (y, x - 1),
            (y, x + 1), (y + 1, x - 1), (y + 1, x), (y + 1, x + 1)]


def _chain_graph_from_skeleton(skel: np.ndarray) -> _ChainGraph:
    """Trace pixel chains between skeleton pixels of neighbor count != 2."""
    cg = _ChainGraph()
    if not skel.any():
        return cg
    cnt = ndi.convolve(skel.astype(np.uint8), np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]]),
                       mode="constant")
    node_mask = skel & (cnt != 2)

    # A pure cycle has no junction/endpoint pixels: anchor it at one pixel.
    labels, n = ndi.label(skel, structure=_EIGHT)
    for comp in range(1, n + 1):
        sel = labels == comp
        if not node_mask[sel].any():
            ys, xs = np.nonzero(sel)
            k = np.lexsort((xs, ys))[0]
            node_mask[ys[k], xs[k]] = True

    node_pixels = set(zip(*np.nonzero(node_mask)))
    for p in sorted(node_pixels):
        cg.add_node(p, (p[1], p[0]))  # store as (x, y)

    in_skel = lambda q: (0 <= q[0] < skel.shape[0] and 0 <= q[1] < skel.shape[1]
                         and skel[q])
    visited: set = set()
    for p in sorted(node_pixels):
        for q in _neighbors8(p):
            if not in_skel(q) or (p, q) in visited:
                continue
            visited.add((p, q))
            poly = [p, q]
            prev, cur = p, q
            steps = 0
            while cur not in node_pixels:
                nxt = None
                for r in _neighbors8(cur):
                    if in_skel(r) and r != prev:
                        nxt = r
                        break
                if nxt is None:
                    break  # dead end that is not a node pixel; should not happen
                visited.add((cur, nxt))
                prev, cur = cur, nxt
                poly.append(cur)
                steps += 1
                if steps > skel.size:
                    raise RuntimeError("skeleton chain tracing did not terminate")
            visited.add((cur, prev))
            cg.add_chain(p, cur, [(x, y) for y, x in poly])
    return cg


def skeleton_to_graph(skeleton: np.ndarray, scale: float, floor: int,
                      params: Optional[ExtractParams] = None) -> NavGraph:
    """Intersection-only NavGraph from a thinned bitmap: junction merging,
    spur pruning, and per-chain simplification with bend nodes."""
    params = params or ExtractParams()
    cg = _chain_graph_from_skeleton(skeleton)
    cg.merge_clusters(params.merge_radius / scale)
    cg.prune_spurs(params.spur_len / scale)
    cg.smooth_degree2()
    mask = FloorMask(width=skeleton.shape[1], height=skeleton.shape[0],
                     scale=scale, floor=floor, free=skeleton)
    nodes, edges = _emit_intersections(cg, mask, params, floor)
    return NavGraph(nodes, edges, meta={"name": f"floor{floor}",
                                        "floor_height": params.floor_height})


def _emit_intersections(cg: _ChainGraph, mask: FloorMask, params: ExtractParams,
                        floor: int, id_prefix: str = "",
                        ) -> tuple[list[NavNode], list[NavEdge]]:
    """Chain graph (pixel space) to intersection nodes plus straight edges."""
    tol_px = params.dp_tol / mask.scale
    raw_nodes: dict = {}   # key -> world (x, y)
    segments: list[tuple] = []  # (key_a, key_b) consecutive simplified points

    for key, pos in cg.pos.items():
        raw_nodes[key] = mask.to_world(pos)[0]

    extra = 0
    for a, b, poly in cg.chains:
        simp = douglas_peucker(poly, tol_px)
        keys = [a]
        for p in simp[1:-1]:
            extra += 1
            k = ("bend", extra)
            raw_nodes[k] = mask.to_world(p)[0]
            keys.append(k)
        keys.append(b)
        for i in range(len(keys) - 1):
            segments.append((keys[i], keys[i + 1], poly))

    # Deterministic ids by world position.
    order = sorted(raw_nodes, key=lambda k: (raw_nodes[k][0], raw_nodes[k][1], str(k)))
    ids = {k: f"{id_prefix}i{j:03d}" for j, k in enumerate(order)}
    nodes = [NavNode(ids[k], "intersection",
                     (float(raw_nodes[k][0]), float(raw_nodes[k][1]), 0.0),
                     floor=floor) for k in order]

    edges: list[NavEdge] = []
    seen_pairs: set = set()
    for a, b, poly in segments:
        pa, pb = raw_nodes[a], raw_nodes[b]
        if (ids[a], ids[b]) in seen_pairs or ids[a] == ids[b]:
            continue
        length = float(np.hypot(*(pb - pa)))
        if length <= 1e-9:
            continue
        d = discretize_direction(math.atan2(pb[1] - pa[1], pb[0] - pa[0]))
        edges.append(NavEdge(ids[a], ids[b], d, length))
        edges.append(NavEdge(ids[b], ids[a], (d + 4) % 8, length))
        seen_pairs.add((ids[a], ids[b]))
        seen_pairs.add((ids[b], ids[a]))
    return nodes, edges


# -- regions ------------------------------------------------------------------


def _component_labels(mask: FloorMask):
    return ndi.label(mask.free, structure=_EIGHT)


def _corridor_component(labels: np.ndarray, n: int, skeleton: np.ndarray) -> int:
    """The free component treated as the circulation space.

    Chosen as the component with the most skeleton pixels: corridors are
    elongated, so their skeletons dominate even when a room covers more area.
    """
    if n == 0:
        return 0
    lengths = ndi.sum_labels(skeleton.astype(np.float64), labels,
                             index=range(1, n + 1))
    return int(np.argmax(lengths)) + 1


def _region_holes(comp_mask: np.ndarray) -> list[np.ndarray]:
    filled = ndi.binary_fill_holes(comp_mask)
    hole_mask = filled & ~comp_mask
    rings = []
    labels, n = ndi.label(hole_mask, structure=_EIGHT)
    for h in range(1, n + 1):
        rings.append(trace_boundary(labels == h))
    return rings


def extract_regions(mask: FloorMask, skeleton: Optional[np.ndarray] = None,
                    sidecar: Optional[AnnotationSidecar] = None,
                    params: Optional[ExtractParams] = None,
                    exclude: tuple = ()) -> list[RegionPolygon]:
    """Enclosed free components as simplified polygons with connectivity
    degrees (portal annotations + corridor-skeleton adjacencies within
    door_gap pixels). Components listed in ``exclude`` are skipped."""
    params = params or ExtractParams()
    labels, n = _component_labels(mask)
    tol_px = params.dp_tol / mask.scale
    regions = []
    for comp in range(1, n + 1):
        if comp in exclude:
            continue
        comp_mask = labels == comp
        ring = trace_boundary(comp_mask)
        if len(ring) < 3:
            continue
        ring = _simplify_ring(ring, tol_px)
        if shoelace_area(ring) * mask.scale ** 2 < params.min_region_area:
            continue
        holes = [_simplify_ring(h, tol_px) for h in _region_holes(comp_mask)]
        holes = [h for h in holes if len(h) >= 3]
        degree = _connectivity_degree(comp_mask, mask, skeleton, sidecar, params)
        regions.append(RegionPolygon(ring=ring, holes=holes,
                                     connectivity_degree=degree, component=comp))
    return regions


def _simplify_ring(ring: np.ndarray, tol_px: float) -> np.ndarray:
    if len(ring) < 3:
        return ring
    closed = np.vstack([ring, ring[:1]])
    simp = douglas_peucker(closed, tol_px)
    return simp[:-1]


def _connectivity_degree(comp_mask: np.ndarray, mask: FloorMask,
                         skeleton: Optional[np.ndarray],
                         sidecar: Optional[AnnotationSidecar],
                         params: ExtractParams) -> int:
    near = ndi.binary_dilation(comp_mask, structure=_EIGHT,
                               iterations=params.door_gap)
    degree = 0
    if sidecar is not None:
        for portal in sidecar.portals:
            x, y = int(round(portal["px"][0])), int(round(portal["px"][1]))
            if 0 <= y < mask.height and 0 <= x < mask.width and near[y, x]:
                degree += 1
    if skeleton is not None:
        touch = skeleton & near & ~comp_mask
        _, clusters = ndi.label(touch, structure=_EIGHT)
        degree += clusters
    return degree


def classify_traversable(region: RegionPolygon,
                         params: Optional[ExtractParams] = None) -> bool:
    """Traversable (corridor/lobby treatment) when the region connects to
    enough other spaces."""
    params = params or ExtractParams()
    return region.connectivity_degree >= params.conn_threshold


# -- chordal-axis centerline ----------------------------------------------------


def _densify_ring(ring: np.ndarray, step: float) -> np.ndarray:
    pts = []
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        seg = np.hypot(*(b - a))
        k = max(1, int(math.ceil(seg / step)))
        for t in range(k):
            pts.append(a + (b - a) * (t / k))
    return np.array(pts)


def centerline(region: RegionPolygon, scale: float,
               params: Optional[ExtractParams] = None) -> list[np.ndarray]:
    """Chordal-axis centerline of a traversable region, in pixel coords.

    Midpoints of internal Delaunay edges are linked through each triangle
    (sleeves join two midpoints, junction triangles fan out from their
    centroid), then short branches are pruned and chains simplified.
    """
    params = params or ExtractParams()
    area_px = shoelace_area(region.ring)
    if area_px * scale ** 2 < params.min_region_area:
        return []
    pts = _densify_ring(region.ring, params.densify_px)
    for h in region.holes:
        pts = np.vstack([pts, _densify_ring(h, params.densify_px)])
    if len(pts) < 4:
        return []
    tri = Delaunay(pts)
    centroids = pts[tri.simplices].mean(axis=1)
    keep = points_in_polygon(centroids, region.ring, region.holes)

    edge_tris: dict = {}
    for t in np.nonzero(keep)[0]:
        vs = sorted(tri.simplices[t])
        for e in ((vs[0], vs[1]), (vs[0], vs[2]), (vs[1], vs[2])):
            edge_tris.setdefault(e, []).append(t)
    internal = {e for e, ts in edge_tris.items() if len(ts) == 2}

    cg = _ChainGraph()

    def midkey(e):
        if e not in cg.pos:
            cg.add_node(e, pts[list(e)].mean(axis=0))
        return e

    for t in np.nonzero(keep)[0]:
        vs = sorted(tri.simplices[t])
        edges = [e for e in ((vs[0], vs[1]), (vs[0], vs[2]), (vs[1], vs[2]))
                 if e in internal]
        if len(edges) == 2:
            a, b = midkey(edges[0]), midkey(edges[1])
            cg.add_chain(a, b, np.vstack([cg.pos[a], cg.pos[b]]))
        elif len(edges) == 3:
            ckey = ("c", int(t))
            cg.add_node(ckey, centroids[t])
            for e in edges:
                m = midkey(e)
                cg.add_chain(ckey, m, np.vstack([cg.pos[ckey], cg.pos[m]]))

    cg.smooth_degree2()
    cg.prune_spurs(params.spur_len / scale)
    cg.smooth_degree2()
    return [douglas_peucker(poly, params.dp_tol / scale)
            for _, _, poly in cg.chains]


# -- assembly -----------------------------------------------------------------


def _pole_of_inaccessibility(comp_mask: np.ndarray) -> tuple[float, float]:
    """Grid-approximated max-inscribed-circle center: EDT argmax, as (x, y)."""
    edt = ndi.distance_transform_edt(comp_mask)
    y, x = np.unravel_index(int(np.argmax(edt)), edt.shape)
    return float(x), float(y)


def assemble_floor_graph(mask: FloorMask, sidecar: AnnotationSidecar,
                         params: Optional[ExtractParams] = None,
                         name: Optional[str] = None,
                         building: Optional[str] = None) -> ExtractionResult:
    """Run the full per-floor pipeline and return the graph plus a report of
    unconsumed annotations."""
    params = params or ExtractParams()
    warnings: list[str] = []
    unmatched: list[tuple[str, str]] = []
    floor = mask.floor

    skel = thin_mask(mask)
    labels, ncomp = _component_labels(mask)
    corridor = _corridor_component(labels, ncomp, skel)
    corridor_skel = skel & (labels == corridor) if corridor else np.zeros_like(skel)

    cg = _chain_graph_from_skeleton(corridor_skel)
    cg.merge_clusters(params.merge_radius / mask.scale)
    cg.prune_spurs(params.spur_len / mask.scale)
    cg.smooth_degree2()
    prefix = f"f{floor}"
    nodes, edges = _emit_intersections(cg, mask, params, floor, id_prefix=prefix)
    nodes = [NavNode(n.id, n.kind, n.position, n.floor, building) for n in nodes]

    regions = extract_regions(mask, skeleton=corridor_skel, sidecar=sidecar,
                              params=params, exclude=(corridor,))

    # Nearest-free-pixel lookup for associating annotations with components.
    _, (near_y, near_x) = ndi.distance_transform_edt(~mask.free, return_indices=True)

    def component_at(px_xy) -> int:
        x, y = int(round(px_xy[0])), int(round(px_xy[1]))
        if not (0 <= y < mask.height and 0 <= x < mask.width):
            return 0
        if mask.free[y, x]:
            return int(labels[y, x])
        ny, nx = int(near_y[y, x]), int(near_x[y, x])
        if max(abs(ny - y), abs(nx - x)) <= params.door_gap:
            return int(labels[ny, nx])
        return 0

    by_id: dict[str, NavNode] = {n.id: n for n in nodes}
    edge_pairs: set = {(e.src, e.dst) for e in edges}

    def add_node(node: NavNode):
        nodes.append(node)
        by_id[node.id] = node

    def connect(aid: str, bid: str):
        if aid == bid or (aid, bid) in edge_pairs:
            return False
        a, b = by_id[aid], by_id[bid]
        length = math.dist(a.position[:2], b.position[:2])
        if length <= 1e-9:
            return False
        d = discretize_direction(math.atan2(b.position[1] - a.position[1],
                                            b.position[0] - a.position[0]))
        edges.append(NavEdge(aid, bid, d, length))
        edges.append(NavEdge(bid, aid, (d + 4) % 8, length))
        edge_pairs.add((aid, bid))
        edge_pairs.add((bid, aid))
        return True

    # Centerlines of traversable regions join the intersection set.
    region_nodes: dict[int, list[str]] = {}
    counter = len(nodes)
    for region in sorted(regions, key=lambda r: r.component):
        if not classify_traversable(region, params):
            continue
        polys = centerline(region, mask.scale, params)
        rnodes: dict[tuple, str] = {}
        for poly in sorted(polys, key=lambda p: (p[0][0], p[0][1])):
            w = mask.to_world(poly)
            prev_id = None
            for j in range(len(w)):
                key = (round(w[j][0], 6), round(w[j][1], 6))
                if key not in rnodes:
                    nid = f"{prefix}i{counter:03d}"
                    counter += 1
                    rnodes[key] = nid
                    add_node(NavNode(nid, "intersection",
                                     (float(w[j][0]), float(w[j][1]), 0.0),
                                     floor, building))
                if prev_id is not None:
                    connect(prev_id, rnodes[key])
                prev_id = rnodes[key]
        region_nodes[region.component] = list(rnodes.values())

    # Place nodes for labeled non-traversable regions.
    place_by_component: dict[int, str] = {}
    label_claims: dict[int, list] = {}
    for i, entry in enumerate(sidecar.labels):
        comp = component_at(entry["px"])
        label_claims.setdefault(comp, []).append((i, entry))

    pseq = 0
    for region in sorted(regions, key=lambda r: r.component):
        if classify_traversable(region, params):
            continue
        claims = label_claims.get(region.component, [])
        if not claims:
            continue  # unnamed region: no place node
        pole = _pole_of_inaccessibility(labels == region.component)
        claims = sorted(claims, key=lambda c: (
            math.dist(c[1]["px"], pole), c[0]))
        _, best = claims[0]
        for _, other in claims[1:]:
            unmatched.append((other["text"],
                              f"region already labeled {best['text']!r}"))
        w = mask.to_world(np.array([pole]))[0]
        nid = f"{prefix}p{pseq:03d}"
        pseq += 1
        add_node(NavNode(nid, "place", (float(w[0]), float(w[1]), 0.0), floor, building,
                         label=normalize_label(best["text"])))
        place_by_component[region.component] = nid

    for comp, cs in label_claims.items():
        if comp in place_by_component:
            continue
        for _, entry in cs:
            if comp == 0:
                unmatched.append((entry["text"], "outside any region"))
            elif comp == corridor:
                unmatched.append((entry["text"], "inside the corridor space"))
            elif comp in region_nodes:
                unmatched.append((entry["text"], "inside a traversable region"))
            else:
                unmatched.append((entry["text"], "region below minimum area"))

    # Portal nodes, wired to the network and to their region's place node.
    def nearest_intersection(w, pool=None):
        best_id, best_d = None, math.inf
        for n in (nodes if pool is None else (by_id[i] for i in pool)):
            if n.kind != "intersection":
                continue
            d = math.dist(n.position[:2], w)
            if d < best_d or (d == best_d and n.id < (best_id or "")):
                best_id, best_d = n.id, d
        return best_id, best_d

    def attach_to_network(w):
        """Intersection id a portal at world (x, y) should connect to.

        Falls back to splitting the nearest corridor edge at the portal's
        projection when no existing node lies within portal_snap.
        """
        nonlocal counter
        nid, d = nearest_intersection(w)
        if d <= params.portal_snap:
            return nid
        best = None  # (dist, src, dst, projection point)
        for src, dst in sorted(p for p in edge_pairs if p[0] < p[1]):
            a, b = by_id[src], by_id[dst]
            if a.kind != "intersection" or b.kind != "intersection":
                continue
            pa = np.array(a.position[:2])
            ba = np.array(b.position[:2]) - pa
            denom = float(ba @ ba)
            if denom <= 0:
                continue
            t = float(np.clip((w - pa) @ ba / denom, 0.0, 1.0))
            proj = pa + t * ba
            dist = float(np.hypot(*(w - proj)))
            if best is None or dist < best[0]:
                best = (dist, src, dst, proj, t)
        if best is None or best[0] > params.portal_snap:
            return None
        dist, src, dst, proj, t = best
        if t < 0.05:
            return src
        if t > 0.95:
            return dst
        mid = f"{prefix}i{counter:03d}"
        counter += 1
        add_node(NavNode(mid, "intersection", (float(proj[0]), float(proj[1]), 0.0),
                         floor, building))
        for pair in ((src, dst), (dst, src)):
            edge_pairs.discard(pair)
        edges[:] = [e for e in edges
                    if not (e.src == src and e.dst == dst)
                    and not (e.src == dst and e.dst == src)]
        connect(src, mid)
        connect(mid, dst)
        return mid

    tseq = 0
    for portal in sorted(sidecar.portals, key=lambda p: (p["px"][0], p["px"][1])):
        kind = portal["kind"]
        w = mask.to_world(np.array([portal["px"]], dtype=np.float64))[0]
        nid = f"{prefix}t{tseq:03d}"
        tseq += 1
        add_node(NavNode(nid, "portal", (float(w[0]), float(w[1]), 0.0), floor, building,
                         portal_kind=kind))

        linked = []
        hook = attach_to_network(w)
        if hook is None:
            warnings.append(f"portal {nid} has no reachable intersection within "
                            f"{params.portal_snap} m")
        else:
            linked.append(hook)
        comp = component_at(portal["px"])
        if comp in place_by_component:
            linked.append(place_by_component[comp])
        elif comp in region_nodes and region_nodes[comp]:
            rid, rd = nearest_intersection(w, pool=region_nodes[comp])
            if rid is not None and rd <= params.portal_snap and rid not in linked:
                linked.append(rid)
        for other_id in linked:
            if not connect(nid, other_id):
                warnings.append(f"portal {nid} coincides with {other_id}; "
                                "edge skipped")

    exterior = _exterior_polygon(mask, sidecar, params)
    meta = {"name": name or f"floor{floor}",
            "floor_height": params.floor_height,
            "sources": [],
            "exterior": [[float(x), float(y)] for x, y in exterior]}
    graph = NavGraph(nodes, edges, meta=meta)
    return ExtractionResult(graph=graph, unmatched_labels=unmatched,
                            warnings=warnings)


def _exterior_polygon(mask: FloorMask, sidecar: AnnotationSidecar,
                      params: ExtractParams) -> np.ndarray:
    if sidecar.exterior_hint:
        ring = np.asarray(sidecar.exterior_hint, dtype=np.float64)
    else:
        filled = ndi.binary_fill_holes(mask.free)
        if not filled.any():
            return np.zeros((0, 2))
        ring = _simplify_ring(trace_boundary(filled), params.dp_tol / mask.scale)
    return mask.to_world(ring)
