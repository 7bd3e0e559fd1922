"""Synthetic episodes and the localization evaluation protocol.

Episodes pair a ground-truth walk over the graph with sign observations
whose cues are consistent with shortest-path directions (optionally
corrupted by direction softening, label typos, and distractor targets).
Replay runs either the particle filter or the exact filter and scores
convergence the same way at every sign sighting: the estimated node must
match ground truth and the heading error must stay below pi/4.
"""

from __future__ import annotations

import json
import logging
import math
import string
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import exact as exact_filter
from .cues import NavCue, SignObservation, observation_from_json, observation_to_json
from .graph import (DIRECTION_ANGLES, NUM_DIRECTIONS, NavEdge, NavGraph,
                    NavNode, angle_diff, discretize_direction, edge_between,
                    wrap_angle)
from .mcl import (BeliefState, FilterConfig, OdometryDelta, TopoAction,
                  estimate, init_uniform, motion_update_metric,
                  motion_update_topo, observation_update)

logger = logging.getLogger(__name__)

_ANGLES = np.array(DIRECTION_ANGLES)

HEADING_TOLERANCE = math.pi / 4  # orientation error allowed at a sighting
NO_CONVERGENCE = "–"        # report marker for episodes that never lock in


@dataclass(frozen=True)
class NoiseConfig:
    dir_temp: float = 0.0        # softmax temperature; 0 = one-hot truth
    label_typo_prob: float = 0.0  # chance of one random character edit
    distractor_prob: float = 0.0  # chance a cue targets a random other place

    def __post_init__(self):
        if self.dir_temp < 0:
            raise ValueError("dir_temp must be >= 0")
        for name in ("label_typo_prob", "distractor_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")


NOISE_PROFILES = {
    "none": NoiseConfig(),
    "mild": NoiseConfig(dir_temp=0.3, label_typo_prob=0.15),
    "heavy": NoiseConfig(dir_temp=0.6, label_typo_prob=0.3, distractor_prob=0.1),
}


@dataclass
class EpisodeRecord:
    t: float
    gt_node: str
    gt_heading: float
    motion: Optional[object] = None            # TopoAction | OdometryDelta
    observation: Optional[SignObservation] = None


@dataclass
class EpisodeLog:
    graph_name: str
    seed: int
    noise: NoiseConfig
    records: list[EpisodeRecord] = field(default_factory=list)
    sighting_steps: list[int] = field(default_factory=list)  # state indices

    def num_sightings(self) -> int:
        return sum(1 for r in self.records if r.observation is not None)


# -- JSONL --------------------------------------------------------------------


def log_to_jsonl(log: EpisodeLog) -> str:
    lines = [json.dumps({"episode": {
        "graph": log.graph_name, "seed": log.seed,
        "noise": {"dir_temp": log.noise.dir_temp,
                  "label_typo_prob": log.noise.label_typo_prob,
                  "distractor_prob": log.noise.distractor_prob}}})]
    for r in log.records:
        rec: dict = {"t": r.t}
        if isinstance(r.motion, TopoAction):
            rec["motion"] = {"topo": r.motion.direction}
        elif isinstance(r.motion, OdometryDelta):
            rec["motion"] = {"odom": [r.motion.dx, r.motion.dy, r.motion.dz,
                                      r.motion.dtheta]}
        if r.observation is not None:
            rec.update(observation_to_json(r.observation))
        rec["gt_state"] = [r.gt_node, r.gt_heading]
        lines.append(json.dumps(rec))
    return "\n".join(lines) + "\n"


def log_from_jsonl(text: str) -> EpisodeLog:
    log = EpisodeLog(graph_name="", seed=0, noise=NoiseConfig())
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON: {exc}") from exc
        try:
            if "episode" in rec:
                meta = rec["episode"]
                log.graph_name = meta.get("graph", "")
                log.seed = int(meta.get("seed", 0))
                log.noise = NoiseConfig(**meta.get("noise", {}))
                continue
            motion = None
            if "motion" in rec:
                m = rec["motion"]
                if "topo" in m:
                    motion = TopoAction(int(m["topo"]))
                elif "odom" in m:
                    motion = OdometryDelta(*[float(v) for v in m["odom"]])
                else:
                    raise ValueError(f"unknown motion {m!r}")
            obs = observation_from_json(rec) if "cues" in rec else None
            gt = rec["gt_state"]
            log.records.append(EpisodeRecord(
                t=float(rec.get("t", 0.0)), gt_node=str(gt[0]),
                gt_heading=float(gt[1]), motion=motion, observation=obs))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"line {lineno}: bad record: {exc}") from exc
    return log


# -- trajectory generation ------------------------------------------------------


def generate_trajectory(g: NavGraph, seed: int, num_signs: int, steps: int,
                        min_gap: int = 3) -> EpisodeLog:
    """Ground-truth skeleton: a shortest-path walk between random waypoints
    with sign-sighting slots at distinct visited nodes spaced >= min_gap.

    Motions are world-frame topo actions; the walk advances with the same
    candidate-edge rule the filter's correct branch uses.
    """
    idx = g.index()
    inter = idx.intersection_idx
    if len(inter) == 0:
        raise ValueError("graph has no intersection nodes")
    rng = np.random.default_rng(seed)
    cand = idx.candidate_edges()

    states: list[tuple[int, float]] = []
    actions: list[int] = []
    for _ in range(5):
        start = int(rng.choice(inter))
        heading = float(_ANGLES[rng.integers(NUM_DIRECTIONS)])
        states = [(start, heading)]
        actions = []
        cur = start
        guard = 0
        while len(actions) < steps and guard < 200:
            wp = int(rng.choice(inter))
            if wp == cur:
                guard += 1
                continue
            field_ = idx.route_field(wp)
            while cur != wp and len(actions) < steps:
                hop = field_.next_hop[cur]
                if hop < 0:
                    guard += 1
                    break
                k = _edge_pos(idx, cur, int(hop))
                action = int(idx.edge_dir[k])
                kc = cand[cur, action]
                if int(idx.nbr[kc]) != hop:
                    # Another edge shares the category and wins the tie; the
                    # action would not reproduce this hop. Re-roll the waypoint.
                    guard += 1
                    break
                states.append((int(hop), float(_ANGLES[idx.edge_dir[kc]])))
                actions.append(action)
                cur = int(hop)
        if len(actions) >= steps:
            break

    if len(actions) < steps:
        logger.warning("trajectory stopped early at %d of %d steps",
                       len(actions), steps)

    sight_idx = _pick_sightings(states, num_signs, min_gap, rng)

    log = EpisodeLog(graph_name=str(g.meta.get("name", "")), seed=seed,
                     noise=NoiseConfig(), sighting_steps=sight_idx)
    log.records.append(EpisodeRecord(0.0, idx.ids[states[0][0]], states[0][1]))
    for i, action in enumerate(actions, start=1):
        node, th = states[i]
        log.records.append(EpisodeRecord(float(i), idx.ids[node], th,
                                         motion=TopoAction(action)))
    return log


def _edge_pos(idx, src: int, dst: int) -> int:
    for k in range(idx.indptr[src], idx.indptr[src + 1]):
        if idx.nbr[k] == dst:
            return k
    raise KeyError(f"no edge {src} -> {dst}")


def _pick_sightings(states, num_signs: int, min_gap: int,
                    rng: np.random.Generator) -> list[int]:
    """Sighting slots spread evenly over the walk, the last one at its end,
    each nudged to the nearest step whose node has not been used yet."""
    if num_signs == 0:
        return []
    last = len(states) - 1
    if last < 1:
        raise ValueError("trajectory too short for any sign sighting")

    anchors = [int(round(last - k * (last - 1) / max(1, num_signs)))
               for k in range(num_signs)]  # last step first, walking backward
    chosen: list[int] = []
    nodes_used: set[int] = set()
    for a in anchors:
        placed = False
        for delta in range(0, last):
            for i in (a - delta, a + delta):
                if not 1 <= i <= last:
                    continue
                if states[i][0] in nodes_used:
                    continue
                if any(abs(i - j) < min_gap for j in chosen):
                    continue
                chosen.append(i)
                nodes_used.add(states[i][0])
                placed = True
                break
            if placed:
                break
    if len(chosen) < num_signs:
        raise ValueError(
            f"graph too small for {num_signs} sign sightings "
            f"(placed {len(chosen)} over {last} steps)")
    return sorted(chosen)


# -- sign synthesis -------------------------------------------------------------


def synthesize_sign(g: NavGraph, at: str, targets: list[str],
                    noise: NoiseConfig, rng: np.random.Generator,
                    facing: float = 0.0,
                    timestamp: float = 0.0) -> Optional[SignObservation]:
    """One sign at node ``at``: for each target place, the cue's direction
    mode is the relative bearing of the first shortest-path edge toward it,
    as seen when facing the sign with heading ``facing``."""
    idx = g.index()
    at_i = idx.idx_of(at)
    place_ids = [nid for nid in sorted(g.nodes) if g.nodes[nid].label]
    cues = []
    for target in targets:
        if noise.distractor_prob > 0 and rng.random() < noise.distractor_prob:
            others = [p for p in place_ids if p != target]
            if others:
                target = others[int(rng.integers(len(others)))]
        if target == at:
            logger.warning("sign target %s equals the sighting node; skipped",
                           target)
            continue
        field_ = idx.route_field(idx.idx_of(target))
        if field_.next_hop[at_i] < 0:
            logger.warning("sign target %s unreachable from %s; skipped",
                           target, at)
            continue
        vec = field_.edge_vec[at_i]
        rel = wrap_angle(math.atan2(vec[1], vec[0]) - facing)
        d_star = discretize_direction(rel)
        dist = _direction_distribution(d_star, noise.dir_temp)
        label = g.nodes[target].label
        if noise.label_typo_prob > 0 and rng.random() < noise.label_typo_prob:
            label = _corrupt_label(label, rng)
        cues.append(NavCue(label, tuple(dist)))
    if not cues:
        return None
    return SignObservation(cues=tuple(cues), timestamp=timestamp, gt_node=at)


def _direction_distribution(d_star: int, temp: float) -> np.ndarray:
    if temp <= 0:
        out = np.zeros(NUM_DIRECTIONS)
        out[d_star] = 1.0
        return out
    gaps = np.abs(wrap_angle_array(_ANGLES - _ANGLES[d_star]))
    logits = -gaps / temp
    w = np.exp(logits - logits.max())
    return w / w.sum()


def wrap_angle_array(theta: np.ndarray) -> np.ndarray:
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


def _corrupt_label(label: str, rng: np.random.Generator) -> str:
    ops = ["sub", "ins", "del"] if len(label) > 1 else ["sub", "ins"]
    op = ops[int(rng.integers(len(ops)))]
    pos = int(rng.integers(len(label)))
    ch = string.ascii_lowercase[int(rng.integers(26))]
    if op == "sub":
        out = label[:pos] + ch + label[pos + 1:]
    elif op == "ins":
        out = label[:pos] + ch + label[pos:]
    else:
        out = label[:pos] + label[pos + 1:]
    return out if out.strip() else label


def build_episode(g: NavGraph, seed: int, num_signs: int = 5, steps: int = 40,
                  noise: NoiseConfig = NoiseConfig(), min_gap: int = 3,
                  cues_per_sign: int = 4,
                  target_radius: float = 60.0) -> EpisodeLog:
    """Trajectory skeleton plus synthesized sign observations at each slot."""
    log = generate_trajectory(g, seed, num_signs, steps, min_gap)
    log.noise = noise
    rng = np.random.default_rng(seed + 1)
    idx = g.index()
    place_ids = [nid for nid in sorted(g.nodes) if g.nodes[nid].label]
    if not place_ids:
        raise ValueError("graph has no labeled place nodes for signs")

    out_records: list[EpisodeRecord] = []
    state_i = 0
    sightings = set(log.sighting_steps)
    for rec in log.records:
        out_records.append(rec)
        if state_i in sightings and rec.observation is None:
            obs = _sign_at(g, idx, rec, place_ids, noise, rng, cues_per_sign,
                           target_radius)
            if obs is not None:
                out_records.append(EpisodeRecord(
                    rec.t + 0.5, rec.gt_node, rec.gt_heading, observation=obs))
        state_i += 1
    log.records = out_records
    return log


def _spread_picks(cands: list[tuple[str, float]], k: int,
                  rng: np.random.Generator) -> list[tuple[str, float]]:
    """Bearing-diversity selection: first pick random, then greedily take
    the candidate farthest (angularly) from everything picked so far.

    A wide bearing spread is what lets a sign reject states whose routes
    all funnel in one direction (wrong floor, far wing)."""
    if not cands or k <= 0:
        return []
    first = int(rng.integers(len(cands)))
    picked = [cands[first]]
    remaining = cands[:first] + cands[first + 1:]
    while len(picked) < k and remaining:
        gaps = [min(angle_diff(b, tb) for _, tb in picked) for _, b in remaining]
        pick = remaining[int(np.argmax(gaps))]
        picked.append(pick)
        remaining.remove(pick)
    return picked


def _sign_at(g, idx, rec: EpisodeRecord, place_ids, noise, rng,
             cues_per_sign: int, target_radius: float):
    at_i = idx.idx_of(rec.gt_node)
    near: list[tuple[str, float]] = []
    far: list[tuple[str, float]] = []
    for p in place_ids:
        if p == rec.gt_node:
            continue
        field_ = idx.route_field(idx.idx_of(p))
        d = field_.dist[at_i]
        if not np.isfinite(d):
            continue
        vec = field_.edge_vec[at_i]
        bearing = math.atan2(vec[1], vec[0])
        (near if d <= target_radius else far).append((p, bearing))
    if not near and not far:
        logger.warning("no reachable sign targets at %s", rec.gt_node)
        return None
    # Signs list nearby rooms plus remote wings: near cues pin the local
    # pattern, far cues rule out the wrong building or floor.
    k_near = min(len(near), max(1, cues_per_sign - cues_per_sign // 3))
    targets = _spread_picks(near, k_near, rng)
    targets += _spread_picks(far, cues_per_sign - len(targets), rng)
    if not targets:
        targets = _spread_picks(near + far, cues_per_sign, rng)
    return synthesize_sign(g, rec.gt_node, [t for t, _ in targets], noise, rng,
                           facing=rec.gt_heading, timestamp=rec.t + 0.5)


# -- replay and scoring ----------------------------------------------------------


@dataclass
class SightingResult:
    index: int          # 1-based sighting number
    t: float
    gt_node: str
    gt_heading: float
    est_node: str
    est_heading: float
    confidence: float
    correct: bool


@dataclass
class EpisodeResult:
    sightings: list[SightingResult]
    convergence_index: Optional[int]
    success: bool
    final_correct: bool
    steps: int
    obs_latency_mean: float
    motion_latency_mean: float

    @property
    def num_sightings(self) -> int:
        return len(self.sightings)

    def conv_string(self) -> str:
        i = self.convergence_index if self.convergence_index else NO_CONVERGENCE
        return f"{i}/{self.num_sightings}"

    def to_json(self) -> dict:
        return {
            "convergence": self.conv_string(),
            "convergence_index": self.convergence_index,
            "success": self.success,
            "final_correct": self.final_correct,
            "steps": self.steps,
            "obs_latency_mean_s": self.obs_latency_mean,
            "motion_latency_mean_s": self.motion_latency_mean,
            "sightings": [{
                "index": s.index, "t": s.t, "gt_node": s.gt_node,
                "gt_heading": s.gt_heading, "est_node": s.est_node,
                "est_heading": s.est_heading, "confidence": s.confidence,
                "correct": s.correct} for s in self.sightings],
        }


def _state_correct(est_node: str, est_heading: float, gt_node: str,
                   gt_heading: float) -> bool:
    return est_node == gt_node and angle_diff(est_heading, gt_heading) < HEADING_TOLERANCE


def run_episode(g: NavGraph, log: EpisodeLog, cfg: FilterConfig,
                seed: Optional[int] = None, engine: str = "mcl") -> EpisodeResult:
    """Replay a log through the chosen filter, scoring every sighting.

    The convergence index is the first sighting from which every later
    sighting (and the final state) stays correct.
    """
    if engine not in ("mcl", "exact"):
        raise ValueError(f"unknown engine {engine!r}")
    seed = log.seed if seed is None else seed
    metric = any(isinstance(r.motion, OdometryDelta) for r in log.records)

    if engine == "mcl":
        belief = init_uniform(g, cfg, seed, metric=metric)
    else:
        belief = exact_filter.init_uniform_exact(g)

    sightings: list[SightingResult] = []
    obs_times: list[float] = []
    motion_times: list[float] = []
    steps = 0
    last = None

    def current_estimate():
        if engine == "mcl":
            e = estimate(belief, g)
            return e.node, e.heading, e.confidence
        return exact_filter.exact_estimate(belief, g)

    for rec in log.records:
        if rec.motion is not None:
            steps += 1
            t0 = time.perf_counter()
            if engine == "mcl":
                if isinstance(rec.motion, TopoAction):
                    belief = motion_update_topo(belief, g, rec.motion, cfg)
                else:
                    belief = motion_update_metric(belief, g, rec.motion, cfg)
            else:
                if not isinstance(rec.motion, TopoAction):
                    raise ValueError("exact engine supports topo motion only")
                belief = exact_filter.exact_motion(belief, g, rec.motion, cfg)
            motion_times.append(time.perf_counter() - t0)
        if rec.observation is not None:
            t0 = time.perf_counter()
            if engine == "mcl":
                belief = observation_update(belief, g, rec.observation, cfg)
            else:
                belief = exact_filter.exact_observe(belief, g, rec.observation, cfg)
            obs_times.append(time.perf_counter() - t0)
            node, heading, conf = current_estimate()
            sightings.append(SightingResult(
                index=len(sightings) + 1, t=rec.t, gt_node=rec.gt_node,
                gt_heading=rec.gt_heading, est_node=node, est_heading=heading,
                confidence=conf,
                correct=_state_correct(node, heading, rec.gt_node, rec.gt_heading)))
        last = rec

    node, heading, _ = current_estimate()
    final_correct = last is not None and _state_correct(
        node, heading, last.gt_node, last.gt_heading)

    conv = None
    for i in range(len(sightings), 0, -1):
        if sightings[i - 1].correct:
            conv = i
        else:
            break

    return EpisodeResult(
        sightings=sightings, convergence_index=conv, success=conv is not None,
        final_correct=final_correct, steps=steps,
        obs_latency_mean=float(np.mean(obs_times)) if obs_times else 0.0,
        motion_latency_mean=float(np.mean(motion_times)) if motion_times else 0.0)


def summarize(results: list[EpisodeResult], env: str = "synthetic") -> dict:
    """Aggregate episode results into the report emitted by the eval CLI."""
    n = len(results)
    conv = [r.convergence_index for r in results]
    by2 = sum(1 for c in conv if c is not None and c <= 2)
    report = {
        "environment": env,
        "episodes": n,
        "success_rate": sum(r.success for r in results) / n if n else 0.0,
        "converged_by_2_rate": by2 / n if n else 0.0,
        "stability": (sum(1 for r in results if r.success and r.final_correct)
                      / max(1, sum(r.success for r in results))),
        "convergence": [r.conv_string() for r in results],
        "mean_obs_latency_s": float(np.mean([r.obs_latency_mean for r in results])) if n else 0.0,
        "mean_motion_latency_s": float(np.mean([r.motion_latency_mean for r in results])) if n else 0.0,
    }
    return report


def format_report(report: dict) -> str:
    head = (f"{'environment':<14}{'episodes':>9}{'success':>9}"
            f"{'conv<=2':>9}{'stability':>11}{'obs ms':>9}{'motion ms':>11}")
    row = (f"{report['environment']:<14}{report['episodes']:>9d}"
           f"{report['success_rate']:>9.2f}{report['converged_by_2_rate']:>9.2f}"
           f"{report['stability']:>11.2f}"
           f"{report['mean_obs_latency_s'] * 1e3:>9.2f}"
           f"{report['mean_motion_latency_s'] * 1e3:>11.2f}")
    conv = " ".join(report["convergence"])
    return f"{head}\n{row}\nconvergence: {conv}"


# -- synthetic environments -------------------------------------------------------


_LABEL_NOUNS = ["pharmacy", "radiology", "cafeteria", "library", "lecture hall",
                "gym", "office", "archive", "lab", "workshop", "clinic",
                "atrium", "bookstore", "helpdesk", "dining hall", "ward",
                "theatre", "gallery", "studio", "terrace", "chapel", "annex",
                "foyer", "pavilion", "plaza", "wing", "court", "lounge"]
_SYLLABLES = ["ka", "re", "mo", "ta", "li", "son", "ver", "del", "mar", "ton",
              "bel", "ric", "hala", "nor", "vis", "qua", "zen", "fir", "lum",
              "ost", "gri", "pex", "dun", "sal", "tev", "bri"]


def _label_pool(rng: np.random.Generator, count: int = 300,
                max_similarity: float = 0.55) -> list[str]:
    """Invented proper names from random syllables ("kareverton").

    Names are unique with pairwise similarity capped well below 1, so fuzzy
    matching concentrates on the right place instead of splitting between
    duplicates. A shared room noun would dominate the edit distance, so
    labels are bare stems.
    """
    from .cues import levenshtein_similarity

    chosen: list[str] = []
    attempts = 0
    while len(chosen) < count and attempts < count * 80:
        attempts += 1
        cand = "".join(_SYLLABLES[int(rng.integers(len(_SYLLABLES)))]
                       for _ in range(int(rng.integers(3, 5))))
        if all(levenshtein_similarity(cand, c) <= max_similarity for c in chosen):
            chosen.append(cand)
    return chosen


def make_random_graph(seed: int, num_nodes: int = 30,
                      place_fraction: float = 0.3,
                      extent: float = 60.0) -> NavGraph:
    """Connected random geometric graph: spanning tree plus shortcut edges,
    with a fraction of nodes carrying unique place labels."""
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0.0, extent, (num_nodes, 2))
    labels = _label_pool(rng)
    num_places = int(round(place_fraction * num_nodes))
    place_set = set(rng.choice(num_nodes, size=num_places, replace=False).tolist())
    if len(place_set) >= num_nodes:  # keep at least one intersection
        place_set.discard(min(place_set))

    nodes = []
    for i in range(num_nodes):
        nid = f"n{i:02d}"
        if i in place_set:
            nodes.append(NavNode(nid, "place", (pos[i][0], pos[i][1], 0.0),
                                 label=labels[i % len(labels)]))
        else:
            nodes.append(NavNode(nid, "intersection", (pos[i][0], pos[i][1], 0.0)))

    pairs: set[tuple[int, int]] = set()
    order = rng.permutation(num_nodes)
    for j in range(1, num_nodes):
        a = order[j]
        prev = order[:j]
        d = np.hypot(*(pos[prev] - pos[a]).T)
        b = prev[int(np.argmin(d))]
        pairs.add((min(a, b), max(a, b)))
    extra = int(num_nodes * 0.8)
    for _ in range(extra):
        a, b = rng.integers(num_nodes), rng.integers(num_nodes)
        if a != b:
            pairs.add((min(a, b), max(a, b)))

    edges = []
    for a, b in sorted(pairs):
        edges.append(edge_between(nodes[a], nodes[b]))
        edges.append(edge_between(nodes[b], nodes[a]))
    return NavGraph(nodes, edges, meta={"name": f"random{seed}"})


def _thin_grid_edges(cells: list[tuple[int, int]],
                     grid_edges: list[tuple[tuple[int, int], tuple[int, int]]],
                     drop_fraction: float,
                     rng: np.random.Generator) -> list[tuple]:
    """Drop a fraction of lattice edges while keeping the floor connected,
    so each floor gets a distinctive corridor topology."""
    keep = set(range(len(grid_edges)))
    adj: dict[tuple[int, int], set[int]] = {c: set() for c in cells}
    for k, (a, b) in enumerate(grid_edges):
        adj[a].add(k)
        adj[b].add(k)

    def connected_without(skip: int) -> bool:
        start = grid_edges[skip][0]
        seen = {start}
        stack = [start]
        while stack:
            c = stack.pop()
            for k in adj[c]:
                if k == skip or k not in keep:
                    continue
                a, b = grid_edges[k]
                o = b if a == c else a
                if o not in seen:
                    seen.add(o)
                    stack.append(o)
        return len(seen) == len(cells)

    order = rng.permutation(len(grid_edges))
    target = int(drop_fraction * len(grid_edges))
    dropped = 0
    for k in order:
        if dropped >= target:
            break
        keep.discard(int(k))
        if connected_without(int(k)):
            dropped += 1
        else:
            keep.add(int(k))
    return [grid_edges[k] for k in sorted(keep)]


def make_campus_graph(seed: int = 0, buildings: int = 2, floors: int = 2,
                      grid: tuple[int, int] = (9, 7),
                      spacing_range: tuple[float, float] = (7.0, 13.0),
                      places_per_floor: int = 70, jitter: float = 3.0,
                      drop_fraction: float = 0.4, floor_height: float = 4.0,
                      outdoor_points: int = 35,
                      outdoor_places: int = 10) -> NavGraph:
    """Campus-scale synthetic graph with irregular geometry.

    Each floor is a thinned lattice with per-row/column spacing drawn at
    random and strong positional jitter, so corridor bearings vary
    continuously instead of snapping to two axes; labeled rooms hang off the
    corridors, lift/stair columns stack across floors, and entrances join an
    outdoor web of paths built from a Delaunay triangulation of scattered
    points. The irregularity is what makes sign cues informative.
    """
    rng = np.random.default_rng(seed)
    labels = _label_pool(rng, count=floors * buildings * places_per_floor
                         + outdoor_places + 8)
    label_i = 0
    nodes: list[NavNode] = []
    edges: list[NavEdge] = []
    pair_set: set[tuple[str, str]] = set()

    def connect(a: NavNode, b: NavNode):
        if a.id == b.id or (a.id, b.id) in pair_set:
            return
        edges.append(edge_between(a, b))
        edges.append(edge_between(b, a))
        pair_set.add((a.id, b.id))
        pair_set.add((b.id, a.id))

    def next_label() -> str:
        nonlocal label_i
        lab = labels[label_i % len(labels)]
        label_i += 1
        return lab

    gx0, gy0 = grid
    bwidth = (gx0 - 1) * np.mean(spacing_range)
    gap = 40.0

    for b in range(buildings):
        bname = f"b{b}"
        ox = b * (bwidth + gap)
        oy = 30.0
        # Floors and buildings get different footprints so no two levels are
        # structural clones of each other.
        gx = max(4, gx0 - b)
        gy_min = max(3, gy0 - (floors - 1))
        lift_cell = (int(rng.integers(1, gx - 1)), int(rng.integers(1, gy_min - 1)))
        stair_cell = (int(rng.integers(1, gx - 1)), int(rng.integers(1, gy_min - 1)))
        portal_xy = {
            "lift": None,
            "stairs": None,
        }
        prev_portals: dict[str, NavNode] = {}
        for f in range(floors):
            gy = max(3, gy0 - f)
            cells = [(i, j) for i in range(gx) for j in range(gy)]
            lattice = ([((i, j), (i + 1, j)) for i in range(gx - 1) for j in range(gy)]
                       + [((i, j), (i, j + 1)) for i in range(gx) for j in range(gy - 1)])
            z = f * floor_height
            xs = np.concatenate([[0.0], np.cumsum(
                rng.uniform(*spacing_range, gx - 1))])
            ys = np.concatenate([[0.0], np.cumsum(
                rng.uniform(*spacing_range, gy - 1))])
            cell_nodes: dict[tuple[int, int], NavNode] = {}
            for i in range(gx):
                for j in range(gy):
                    x = ox + xs[i] + rng.uniform(-jitter, jitter)
                    y = oy + ys[j] + rng.uniform(-jitter, jitter)
                    n = NavNode(f"{bname}f{f}i{i:02d}{j:02d}", "intersection",
                                (x, y, z), floor=f, building=bname)
                    cell_nodes[(i, j)] = n
                    nodes.append(n)
            for a, c in _thin_grid_edges(cells, lattice, drop_fraction, rng):
                connect(cell_nodes[a], cell_nodes[c])

            chosen = rng.choice(len(cells), size=places_per_floor,
                                replace=True)  # corridors host rooms on both sides
            for k, ci in enumerate(chosen):
                anchor = cell_nodes[cells[ci]]
                ang = rng.uniform(-math.pi, math.pi)
                r = rng.uniform(3.0, 6.0)
                p = NavNode(f"{bname}f{f}p{k:02d}", "place",
                            (anchor.position[0] + r * math.cos(ang),
                             anchor.position[1] + r * math.sin(ang), z),
                            floor=f, building=bname, label=next_label())
                nodes.append(p)
                connect(anchor, p)

            for kind, cell in (("lift", lift_cell), ("stairs", stair_cell)):
                anchor = cell_nodes[cell]
                if portal_xy[kind] is None:
                    # Stacked portals share one horizontal position per column.
                    portal_xy[kind] = (anchor.position[0] + 1.5,
                                       anchor.position[1] + 1.5)
                px, py = portal_xy[kind]
                portal = NavNode(f"{bname}f{f}t{kind}", "portal", (px, py, z),
                                 floor=f, building=bname, portal_kind=kind)
                nodes.append(portal)
                connect(anchor, portal)
                if kind in prev_portals:
                    connect(prev_portals[kind], portal)
                prev_portals[kind] = portal

            if f == 0:
                anchor = cell_nodes[(0, 0)]
                ent = NavNode(f"{bname}door", "portal",
                              (anchor.position[0] - 3.0, anchor.position[1] - 3.0,
                               0.0), floor=0, building=bname,
                              portal_kind="entrance")
                nodes.append(ent)
                connect(anchor, ent)

    # Outdoor web: Delaunay edges over scattered points south of the buildings.
    from scipy.spatial import Delaunay

    total_w = buildings * bwidth + (buildings - 1) * gap
    pts = np.column_stack([rng.uniform(-10.0, total_w + 10.0, outdoor_points),
                           rng.uniform(-55.0, 20.0, outdoor_points)])
    out_nodes = [NavNode(f"outi{k:03d}", "intersection",
                         (float(pts[k, 0]), float(pts[k, 1]), 0.0), floor=0)
                 for k in range(outdoor_points)]
    nodes.extend(out_nodes)
    tri = Delaunay(pts)
    seen_out = set()
    for simplex in tri.simplices:
        vs = sorted(int(v) for v in simplex)
        for a, c in ((vs[0], vs[1]), (vs[0], vs[2]), (vs[1], vs[2])):
            if (a, c) in seen_out:
                continue
            seen_out.add((a, c))
            if math.dist(pts[a], pts[c]) <= 30.0:
                connect(out_nodes[a], out_nodes[c])

    for k in range(outdoor_places):
        anchor = out_nodes[int(rng.integers(outdoor_points))]
        ang = rng.uniform(-math.pi, math.pi)
        r = rng.uniform(4.0, 8.0)
        p = NavNode(f"outp{k:02d}", "place",
                    (anchor.position[0] + r * math.cos(ang),
                     anchor.position[1] + r * math.sin(ang), 0.0),
                    floor=0, label=next_label())
        nodes.append(p)
        connect(anchor, p)

    entrances = [n for n in nodes if n.portal_kind == "entrance"]
    for ent in entrances:
        best = min(out_nodes,
                   key=lambda o: math.dist(o.position[:2], ent.position[:2]))
        connect(ent, best)

    return NavGraph(nodes, edges, meta={"name": f"campus{seed}",
                                        "floor_height": floor_height})
