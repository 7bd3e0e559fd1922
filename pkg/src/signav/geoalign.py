"""Registration of floor graphs to OSM footprints and global graph stitching.

A similarity transform (rotation, scale, translation) is fit by maximizing
the rasterized IoU between the floor's exterior polygon and the building
footprint, seeded by a 1-degree rotation sweep and polished with Nelder-Mead.
Pedestrian OSM ways become the outdoor backbone; entrances and stacked
lift/stair portals tie everything into one global graph.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from ._geom import rasterize_rings, ring_centroid, shoelace_area
from .graph import (NavEdge, NavGraph, NavNode, discretize_direction,
                    wrap_angle)

EARTH_RADIUS_M = 6371008.8

WALKABLE_HIGHWAYS = {"footway", "path", "pedestrian", "steps", "residential",
                     "service", "cycleway", "unclassified", "living_street"}

DEFAULT_IOU_RES = 256
DEFAULT_MIN_IOU = 0.5
DEFAULT_ENTRANCE_SNAP = 15.0
DEFAULT_PORTAL_STACK_RADIUS = 3.0


@dataclass
class Polygon2D:
    ring: np.ndarray  # (V, 2) meters, closing edge implicit
    holes: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.ring = np.asarray(self.ring, dtype=np.float64).reshape(-1, 2)
        self.holes = [np.asarray(h, dtype=np.float64).reshape(-1, 2)
                      for h in self.holes]

    def area(self) -> float:
        a = shoelace_area(self.ring)
        for h in self.holes:
            a -= shoelace_area(h)
        return max(a, 0.0)


@dataclass(frozen=True)
class SimilarityTransform2D:
    rotation: float  # radians
    scale: float     # > 0
    translation: tuple[float, float]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")

    def apply(self, points: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        out = np.empty_like(p)
        out[:, 0] = self.scale * (c * p[:, 0] - s * p[:, 1]) + self.translation[0]
        out[:, 1] = self.scale * (s * p[:, 0] + c * p[:, 1]) + self.translation[1]
        return out

    def inverse(self) -> "SimilarityTransform2D":
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        tx, ty = self.translation
        inv_s = 1.0 / self.scale
        return SimilarityTransform2D(
            rotation=-self.rotation, scale=inv_s,
            translation=(inv_s * (c * -tx - s * -ty),
                         inv_s * (s * -tx + c * -ty)))

    @staticmethod
    def identity() -> "SimilarityTransform2D":
        return SimilarityTransform2D(0.0, 1.0, (0.0, 0.0))


class RegistrationError(RuntimeError):
    """IoU objective stayed below the acceptance floor; carries the best
    transform found for diagnostics."""

    def __init__(self, transform: SimilarityTransform2D, iou: float,
                 min_iou: float):
        self.transform = transform
        self.iou = iou
        super().__init__(f"registration failed: IoU {iou:.3f} < {min_iou:.3f}")


@dataclass(frozen=True)
class RegistrationResult:
    transform: SimilarityTransform2D
    iou: float


def project_lonlat(origin: tuple[float, float],
                   point: tuple[float, float]) -> tuple[float, float]:
    """Local equirectangular projection of (lon, lat) to meters."""
    lon0, lat0 = origin
    lon, lat = point
    for name, (lo, la) in (("origin", origin), ("point", point)):
        if not (abs(la) < 85.0 and abs(lo) <= 180.0):
            raise ValueError(f"{name} out of range: lon={lo}, lat={la}")
    k = EARTH_RADIUS_M * math.pi / 180.0
    x = (lon - lon0) * math.cos(math.radians(lat0)) * k
    y = (lat - lat0) * k
    return x, y


def polygon_area(p: Polygon2D) -> float:
    """Shoelace area (holes subtracted)."""
    return p.area()


def _iou_grid(a: Polygon2D, b: Polygon2D, res: int):
    pts = np.vstack([a.ring, b.ring])
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    span = hi - lo
    longer = max(span[0], span[1])
    if longer <= 0:
        return None
    cell = longer / res
    nx = max(1, int(math.ceil(span[0] / cell)))
    ny = max(1, int(math.ceil(span[1] / cell)))
    xc = lo[0] + (np.arange(nx) + 0.5) * cell
    yc = lo[1] + (np.arange(ny) + 0.5) * cell
    return xc, yc


def polygon_iou(a: Polygon2D, b: Polygon2D, res: int = DEFAULT_IOU_RES) -> float:
    """Intersection-over-union on a shared grid spanning both polygons,
    ``res`` cells across the longer side."""
    grid = _iou_grid(a, b, res)
    if grid is None:
        return 0.0
    xc, yc = grid
    ma = rasterize_rings([a.ring] + a.holes, xc, yc)
    mb = rasterize_rings([b.ring] + b.holes, xc, yc)
    union = np.count_nonzero(ma | mb)
    if union == 0:
        return 0.0
    return np.count_nonzero(ma & mb) / union


def register_polygon(p_fp: Polygon2D, p_osm: Polygon2D,
                     min_iou: float = DEFAULT_MIN_IOU,
                     res: int = DEFAULT_IOU_RES) -> RegistrationResult:
    """Similarity transform maximizing IoU(p_osm, M p_fp).

    Scale initializes from the area ratio and translation from centroid
    alignment; rotation is swept in 1-degree steps and the best candidate
    refined with Nelder-Mead over (rotation, log scale, tx, ty).
    """
    area_fp, area_osm = p_fp.area(), p_osm.area()
    if area_fp <= 0 or area_osm <= 0:
        raise ValueError("registration requires non-degenerate polygons")
    s0 = math.sqrt(area_osm / area_fp)
    c_fp = ring_centroid(p_fp.ring)
    c_osm = ring_centroid(p_osm.ring)

    def transform_for(rot: float, scale: float, dx: float = 0.0, dy: float = 0.0):
        c, s = math.cos(rot), math.sin(rot)
        rc = scale * np.array([c * c_fp[0] - s * c_fp[1],
                               s * c_fp[0] + c * c_fp[1]])
        return SimilarityTransform2D(rot, scale, (c_osm[0] - rc[0] + dx,
                                                  c_osm[1] - rc[1] + dy))

    def iou_of(m: SimilarityTransform2D, grid_res: int) -> float:
        moved = Polygon2D(m.apply(p_fp.ring), [m.apply(h) for h in p_fp.holes])
        return polygon_iou(moved, p_osm, grid_res)

    coarse_res = min(64, res)
    best_rot, best_iou = 0.0, -1.0
    for deg in range(360):
        m = transform_for(math.radians(deg), s0)
        v = iou_of(m, coarse_res)
        if v > best_iou:
            best_rot, best_iou = math.radians(deg), v

    seed = transform_for(best_rot, s0)
    x0 = np.array([best_rot, math.log(s0), seed.translation[0],
                   seed.translation[1]])

    def cost(x):
        m = SimilarityTransform2D(x[0], math.exp(x[1]), (x[2], x[3]))
        return -iou_of(m, res)

    steps = np.array([math.radians(2.0), 0.02, 0.5, 0.5])
    simplex = np.vstack([x0, x0 + np.diag(steps)])
    opt = optimize.minimize(cost, x0, method="Nelder-Mead",
                            options={"maxiter": 200, "fatol": 1e-4,
                                     "xatol": 1e-4,
                                     "initial_simplex": simplex})
    candidates = [SimilarityTransform2D(x0[0], math.exp(x0[1]), (x0[2], x0[3])),
                  SimilarityTransform2D(opt.x[0], math.exp(opt.x[1]),
                                        (opt.x[2], opt.x[3]))]
    scored = [(iou_of(m, res), i, m) for i, m in enumerate(candidates)]
    iou, _, m = max(scored)
    m = SimilarityTransform2D(float(wrap_angle(m.rotation)), float(m.scale),
                              (float(m.translation[0]), float(m.translation[1])))
    if iou < min_iou:
        raise RegistrationError(m, iou, min_iou)
    return RegistrationResult(m, float(iou))


def apply_transform(g: NavGraph, m: SimilarityTransform2D,
                    z_offset: float = 0.0) -> NavGraph:
    """Map node positions through the transform, lift z by ``z_offset``,
    recompute edge directions from the new geometry, and rescale lengths."""
    nodes = []
    pos2 = {}
    for n in g.nodes.values():
        xy = m.apply(np.array([n.position[:2]]))[0]
        p = (float(xy[0]), float(xy[1]), n.position[2] + z_offset)
        pos2[n.id] = p
        nodes.append(NavNode(n.id, n.kind, p, n.floor, n.building, n.label,
                             n.portal_kind))
    edges = []
    for e in g.edges:
        a, b = pos2[e.src], pos2[e.dst]
        dx, dy = b[0] - a[0], b[1] - a[1]
        if math.hypot(dx, dy) > 1e-9:
            d = discretize_direction(math.atan2(dy, dx))
        else:
            d = e.direction  # degenerate projection: keep as constructed
        edges.append(NavEdge(e.src, e.dst, d, e.length * m.scale))
    meta = dict(g.meta)
    if "exterior" in meta:
        ext = m.apply(np.asarray(meta["exterior"], dtype=np.float64))
        meta["exterior"] = [[float(x), float(y)] for x, y in ext]
    return NavGraph(nodes, edges, meta=meta)


# -- OSM ingestion ------------------------------------------------------------


@dataclass
class OsmExtract:
    nodes: dict[str, tuple[float, float]]      # id -> (lon, lat)
    ways: list[dict]                            # {"nodes": [ids], "tags": {...}}
    footprints: dict[str, Polygon2D]            # building name -> local meters
    origin: tuple[float, float]                 # (lon, lat) of the local frame


def parse_osm_geojson(data, origin: Optional[tuple[float, float]] = None) -> OsmExtract:
    """GeoJSON FeatureCollection to an OsmExtract.

    LineString features with a walkable ``highway`` property become ways;
    Polygon features with ``building`` and ``name`` become footprints,
    projected into the local meter frame around ``origin`` (defaults to the
    bounding-box center of the collection).
    """
    doc = json.loads(data) if isinstance(data, (str, bytes)) else data
    if doc.get("type") != "FeatureCollection":
        raise ValueError("expected a GeoJSON FeatureCollection")
    feats = doc.get("features", [])

    all_coords = []
    for f in feats:
        geom = f.get("geometry") or {}
        if geom.get("type") == "LineString":
            all_coords.extend(geom["coordinates"])
        elif geom.get("type") == "Polygon":
            for ring in geom["coordinates"]:
                all_coords.extend(ring)
    if origin is None:
        if not all_coords:
            raise ValueError("empty FeatureCollection and no origin given")
        arr = np.asarray(all_coords, dtype=np.float64)
        origin = (float((arr[:, 0].min() + arr[:, 0].max()) / 2),
                  float((arr[:, 1].min() + arr[:, 1].max()) / 2))

    def node_key(lonlat):
        return (round(float(lonlat[0]), 9), round(float(lonlat[1]), 9))

    coords_seen: dict[tuple, None] = {}
    raw_ways = []
    footprints: dict[str, Polygon2D] = {}
    for i, f in enumerate(feats):
        geom = f.get("geometry") or {}
        props = f.get("properties") or {}
        if geom.get("type") == "LineString":
            if props.get("highway") not in WALKABLE_HIGHWAYS:
                continue
            keys = [node_key(c) for c in geom["coordinates"]]
            if len(keys) < 2:
                raise ValueError(f"features[{i}]: way with fewer than 2 nodes")
            for k in keys:
                coords_seen.setdefault(k, None)
            raw_ways.append({"nodes": keys, "tags": dict(props)})
        elif geom.get("type") == "Polygon":
            if "building" not in props or "name" not in props:
                continue
            ring = np.array([project_lonlat(origin, (c[0], c[1]))
                             for c in geom["coordinates"][0]])
            if len(ring) >= 2 and np.allclose(ring[0], ring[-1]):
                ring = ring[:-1]
            holes = []
            for hole in geom["coordinates"][1:]:
                h = np.array([project_lonlat(origin, (c[0], c[1])) for c in hole])
                if len(h) >= 2 and np.allclose(h[0], h[-1]):
                    h = h[:-1]
                holes.append(h)
            footprints[str(props["name"])] = Polygon2D(ring, holes)

    ordered = sorted(coords_seen)
    ids = {k: f"osm{j:04d}" for j, k in enumerate(ordered)}
    nodes = {ids[k]: k for k in ordered}
    ways = [{"nodes": [ids[k] for k in w["nodes"]], "tags": w["tags"]}
            for w in raw_ways]
    return OsmExtract(nodes=nodes, ways=ways, footprints=footprints,
                      origin=origin)


def osm_to_graph(extract: OsmExtract,
                 origin: Optional[tuple[float, float]] = None,
                 dp_tol: float = 0.25) -> NavGraph:
    """Walkable ways to an intersection graph in local meters.

    Way nodes shared between ways (or repeated) become junctions; interior
    degree-2 chains collapse to straight edges, keeping bends that deviate
    more than ``dp_tol``.
    """
    origin = origin or extract.origin
    pos = {}
    for nid, lonlat in extract.nodes.items():
        pos[nid] = np.array(project_lonlat(origin, lonlat))

    incidence: dict[str, int] = {}
    for w in extract.ways:
        for nid in w["nodes"]:
            if nid not in extract.nodes:
                raise ValueError(f"way references unknown node {nid!r}")
        seq = w["nodes"]
        for j, nid in enumerate(seq):
            deg = (1 if j > 0 else 0) + (1 if j < len(seq) - 1 else 0)
            incidence[nid] = incidence.get(nid, 0) + deg

    anchors = {nid for nid, deg in incidence.items() if deg != 2}

    from .extract import _ChainGraph  # chain plumbing shared with extraction
    cg = _ChainGraph()
    for w in extract.ways:
        seq = w["nodes"]
        if not any(nid in anchors for nid in seq):
            anchors.add(seq[0])  # closed loop: anchor it somewhere
            anchors.add(seq[len(seq) // 2])
        runs = []
        cur = [seq[0]]
        for nid in seq[1:]:
            cur.append(nid)
            if nid in anchors:
                runs.append(cur)
                cur = [nid]
        if len(cur) > 1:
            runs.append(cur)
        for run in runs:
            a, b = run[0], run[-1]
            for k in (a, b):
                if k not in cg.pos:
                    cg.add_node(k, pos[k])
            cg.add_chain(a, b, np.array([pos[nid] for nid in run]))

    cg.smooth_degree2()

    raw_nodes: dict = dict(cg.pos)
    segments = []
    extra = 0
    for a, b, poly in cg.chains:
        simp = [a]
        for p in _simplify(poly, dp_tol)[1:-1]:
            extra += 1
            key = ("bend", extra)
            raw_nodes[key] = p
            simp.append(key)
        simp.append(b)
        segments.extend((simp[j], simp[j + 1]) for j in range(len(simp) - 1))

    order = sorted(raw_nodes, key=lambda k: (raw_nodes[k][0], raw_nodes[k][1], str(k)))
    ids = {k: f"osm{j:04d}" for j, k in enumerate(order)}
    nodes = [NavNode(ids[k], "intersection",
                     (float(raw_nodes[k][0]), float(raw_nodes[k][1]), 0.0),
                     floor=0) for k in order]
    edges = []
    seen = set()
    for a, b in segments:
        ia, ib = ids[a], ids[b]
        if ia == ib or (ia, ib) in seen:
            continue
        pa, pb = raw_nodes[a], raw_nodes[b]
        length = float(np.hypot(*(pb - pa)))
        if length <= 1e-9:
            continue
        d = discretize_direction(math.atan2(pb[1] - pa[1], pb[0] - pa[0]))
        edges.append(NavEdge(ia, ib, d, length))
        edges.append(NavEdge(ib, ia, (d + 4) % 8, length))
        seen.add((ia, ib))
        seen.add((ib, ia))
    return NavGraph(nodes, edges, meta={"name": "osm",
                                        "crs_origin": [origin[0], origin[1]]})


def _simplify(poly: np.ndarray, tol: float) -> np.ndarray:
    from ._geom import douglas_peucker
    return douglas_peucker(poly, tol)


# -- stitching ----------------------------------------------------------------


@dataclass
class StitchResult:
    graph: NavGraph
    components: int
    warnings: list[str]


def stitch(graphs: list[NavGraph], osm: Optional[NavGraph] = None,
           entrance_snap: float = DEFAULT_ENTRANCE_SNAP,
           portal_stack_radius: float = DEFAULT_PORTAL_STACK_RADIUS) -> StitchResult:
    """Union all graphs under namespaced ids, connect entrances to the OSM
    backbone, and join vertically stacked lift/stair/escalator portals on
    adjacent floors of the same building."""
    warnings: list[str] = []
    parts = list(graphs) + ([osm] if osm is not None else [])
    if not parts:
        raise ValueError("nothing to stitch")

    prefixes = []
    used = set()
    for i, g in enumerate(parts):
        base = str(g.meta.get("name") or f"g{i}")
        prefix = base
        k = 1
        while prefix in used:
            prefix = f"{base}{k}"
            k += 1
        used.add(prefix)
        prefixes.append(prefix)

    nodes: list[NavNode] = []
    edges: list[NavEdge] = []
    seen_ids = set()
    for g, prefix in zip(parts, prefixes):
        for n in g.nodes.values():
            nid = f"{prefix}/{n.id}"
            if nid in seen_ids:
                raise ValueError(f"duplicate namespaced id {nid!r}")
            seen_ids.add(nid)
            nodes.append(NavNode(nid, n.kind, n.position, n.floor, n.building,
                                 n.label, n.portal_kind))
        for e in g.edges:
            edges.append(NavEdge(f"{prefix}/{e.src}", f"{prefix}/{e.dst}",
                                 e.direction, e.length))

    by_id = {n.id: n for n in nodes}
    pair_set = {(e.src, e.dst) for e in edges}

    def link(aid: str, bid: str):
        if aid == bid or (aid, bid) in pair_set:
            return
        a, b = by_id[aid], by_id[bid]
        dx = b.position[0] - a.position[0]
        dy = b.position[1] - a.position[1]
        length = math.dist(a.position, b.position)
        if length <= 1e-9:
            warnings.append(f"skipped zero-length link {aid} -> {bid}")
            return
        if math.hypot(dx, dy) > 1e-9:
            d = discretize_direction(math.atan2(dy, dx))
            dback = (d + 4) % 8
        else:
            d = dback = 0
        edges.append(NavEdge(aid, bid, d, length))
        edges.append(NavEdge(bid, aid, dback, length))
        pair_set.add((aid, bid))
        pair_set.add((bid, aid))

    # Entrances onto the OSM backbone.
    if osm is not None:
        osm_prefix = prefixes[len(graphs)]
        osm_nodes = [n for n in nodes if n.id.startswith(f"{osm_prefix}/")
                     and n.kind == "intersection"]
        for n in sorted(nodes, key=lambda n: n.id):
            if n.kind != "portal" or n.portal_kind != "entrance":
                continue
            best, best_d = None, math.inf
            for o in osm_nodes:
                d = math.dist(n.position[:2], o.position[:2])
                if d < best_d:
                    best, best_d = o, d
            if best is not None and best_d <= entrance_snap:
                link(n.id, best.id)
            else:
                warnings.append(f"entrance {n.id} has no OSM node within "
                                f"{entrance_snap} m")

    # Vertical portal stacks (lift / stairs / escalator).
    stackable = [n for n in sorted(nodes, key=lambda n: n.id)
                 if n.kind == "portal"
                 and n.portal_kind in ("lift", "stairs", "escalator")]
    for i, a in enumerate(stackable):
        for b in stackable[i + 1:]:
            if a.building != b.building or a.building is None:
                continue
            if a.portal_kind != b.portal_kind:
                continue
            if abs(a.floor - b.floor) != 1:
                continue
            if math.dist(a.position[:2], b.position[:2]) < portal_stack_radius:
                link(a.id, b.id)

    graph = NavGraph(nodes, edges, meta={"name": "stitched"})
    comps = _component_count(graph, warnings)
    return StitchResult(graph=graph, components=comps, warnings=warnings)


def _component_count(g: NavGraph, warnings: list[str]) -> int:
    ids = list(g.nodes)
    index = {nid: i for i, nid in enumerate(ids)}
    parent = list(range(len(ids)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in g.edges:
        a, b = find(index[e.src]), find(index[e.dst])
        if a != b:
            parent[max(a, b)] = min(a, b)
    groups: dict[int, list[str]] = {}
    for nid in ids:
        groups.setdefault(find(index[nid]), []).append(nid)
    if len(groups) > 1:
        sizes = sorted(((len(v), min(v)) for v in groups.values()), reverse=True)
        orphans = ", ".join(f"{nid} ({cnt} nodes)" for cnt, nid in sizes[1:])
        warnings.append(f"stitched graph is disconnected; orphan components: "
                        f"{orphans}")
    return len(groups)
