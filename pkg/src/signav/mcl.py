"""Monte Carlo localization on the navigational graph.

State is (node, heading). Sign observations reweight particles through a
direction-of-shortest-travel likelihood; motion is either a discrete
8-direction action (topological) or an odometry delta snapped back to graph
nodes (topometric). All randomness flows through the belief's seeded
generator, so runs replay exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .cues import (DEFAULT_MIN_MATCH_SCORE, DEFAULT_TOP_K, NavCue,
                   SignObservation, top_k_matches)
from .graph import (DIRECTION_ANGLES, NUM_DIRECTIONS, GraphIndex, NavGraph,
                    wrap_angle)

logger = logging.getLogger(__name__)

_ANGLES = np.array(DIRECTION_ANGLES)


@dataclass(frozen=True)
class TopoAction:
    """Discrete motion command: one of the 8 world-frame direction categories."""
    direction: int

    def __post_init__(self):
        if not 0 <= self.direction < NUM_DIRECTIONS:
            raise ValueError(f"direction must be 0..7, got {self.direction}")


@dataclass(frozen=True)
class OdometryDelta:
    """Robot-frame odometry increment (meters, radians)."""
    dx: float
    dy: float
    dz: float = 0.0
    dtheta: float = 0.0


MotionCommand = Union[TopoAction, OdometryDelta]


@dataclass
class FilterConfig:
    num_particles: int = 1000
    top_k: int = DEFAULT_TOP_K
    min_match_score: float = DEFAULT_MIN_MATCH_SCORE
    kernel: str = "aligned"          # "aligned" or "paper"
    weight_floor: float = 1e-9
    ess_fraction: float = 0.5        # resample when ESS < fraction * N
    mixture_alpha: float = 0.9       # low-variance share of the resampling mix
    heading_noise_sigma: float = 0.1
    p_correct: float = 0.9
    p_stay: float = 0.05
    p_random: float = 0.05
    rot_noise_per_rad: float = 0.05    # rotational std per rad of rotation
    rot_noise_per_m: float = 0.01      # rotational std per meter translated
    trans_noise_per_m: float = 0.08    # translational std per meter, per axis
    trans_noise_per_rad: float = 0.02  # translational std per rad of rotation
    snap_radius: float = 5.0
    off_graph_penalty: float = 0.5
    position_jitter_sigma: float = 0.5  # metric-mode resampling jitter
    floor_height: float = 4.0

    def __post_init__(self):
        if self.num_particles < 1:
            raise ValueError("num_particles must be >= 1")
        if self.kernel not in ("aligned", "paper"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not self.weight_floor > 0:
            raise ValueError("weight_floor must be > 0")
        for name in ("p_correct", "p_stay", "p_random", "mixture_alpha",
                     "ess_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if abs(self.p_correct + self.p_stay + self.p_random - 1.0) > 1e-9:
            raise ValueError("p_correct + p_stay + p_random must equal 1")


@dataclass(frozen=True)
class Particle:
    node: str
    heading: float
    weight: float
    metric_pose: Optional[tuple[float, float, float, float]] = None


@dataclass
class BeliefState:
    """Particle set over graph states.

    Arrays are parallel over particles; ``nodes`` holds indices into the
    graph's sorted id order. The RNG is owned by the episode and mutates
    in place as updates consume it.
    """

    nodes: np.ndarray            # (N,) int64
    headings: np.ndarray         # (N,) float64, wrapped to [-pi, pi)
    weights: np.ndarray          # (N,) float64, normalized
    poses: Optional[np.ndarray]  # (N, 4) x, y, z, theta in metric mode
    step: int
    rng: np.random.Generator

    @property
    def num_particles(self) -> int:
        return len(self.nodes)

    def particles(self, g: NavGraph) -> list[Particle]:
        ids = g.index().ids
        out = []
        for i in range(len(self.nodes)):
            pose = tuple(self.poses[i]) if self.poses is not None else None
            out.append(Particle(ids[self.nodes[i]], float(self.headings[i]),
                                float(self.weights[i]), pose))
        return out


@dataclass(frozen=True)
class Estimate:
    node: str
    heading: float
    confidence: float


def init_uniform(g: NavGraph, cfg: FilterConfig, seed: int,
                 metric: bool = False) -> BeliefState:
    """Uniform belief over intersection nodes, headings jittered around the
    8 canonical directions. Deterministic given the seed."""
    idx = g.index()
    if len(idx.intersection_idx) == 0:
        raise ValueError("graph has no intersection nodes to initialize on")
    rng = np.random.default_rng(seed)
    belief = _uniform_arrays(idx, cfg, rng, metric)
    belief.step = 0
    return belief


def _uniform_arrays(idx: GraphIndex, cfg: FilterConfig,
                    rng: np.random.Generator, metric: bool) -> BeliefState:
    n = cfg.num_particles
    nodes = rng.choice(idx.intersection_idx, size=n)
    cats = rng.integers(0, NUM_DIRECTIONS, size=n)
    headings = wrap_angles(_ANGLES[cats] + rng.normal(0.0, cfg.heading_noise_sigma, n))
    weights = np.full(n, 1.0 / n)
    poses = None
    if metric:
        poses = np.empty((n, 4))
        poses[:, :3] = idx.positions[nodes]
        poses[:, 3] = headings
    return BeliefState(nodes, headings, weights, poses, 0, rng)


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    return (np.asarray(theta) + np.pi) % (2 * np.pi) - np.pi


def discretize_directions(theta: np.ndarray) -> np.ndarray:
    """Vectorized nearest-category binning; ties break to lower index."""
    diffs = np.abs(wrap_angles(np.asarray(theta)[..., None] - _ANGLES))
    return np.argmin(diffs, axis=-1)


# -- observation model --------------------------------------------------------


def _direction_likelihood_arrays(idx: GraphIndex, target: int,
                                 nodes: np.ndarray, headings: np.ndarray,
                                 ddist: np.ndarray, kernel: str) -> np.ndarray:
    """Likelihood that the sign's direction distribution points along the
    shortest path from each (node, heading) state toward ``target``."""
    field = idx.route_field(target)
    reachable = np.isfinite(field.dist[nodes])
    at_target = nodes == target

    phi = np.arctan2(field.edge_vec[nodes, 1], field.edge_vec[nodes, 0])
    # dot(d_edge, d_act) for every category: cos(theta + rel_d - phi_edge)
    dots = np.cos(headings[:, None] + _ANGLES[None, :] - phi[:, None])
    if kernel == "aligned":
        k = np.exp(-np.square(1.0 - dots))
    else:  # "paper": kernel as printed, peaks at perpendicularity
        k = np.exp(-np.square(dots))
    lik = k @ ddist
    lik[at_target] = float(np.sum(ddist))  # destination reached: direction-agnostic
    lik[~reachable] = 0.0
    return lik


def direction_likelihood(g: NavGraph, particle: Particle, target: str,
                         direction_dist, kernel: str = "aligned") -> float:
    """Single-state reference for the directional likelihood."""
    idx = g.index()
    nodes = np.array([idx.idx_of(particle.node)])
    headings = np.array([particle.heading])
    ddist = np.asarray(direction_dist, dtype=np.float64)
    return float(_direction_likelihood_arrays(
        idx, idx.idx_of(target), nodes, headings, ddist, kernel)[0])


def cue_likelihood(g: NavGraph, particle: Particle, cue: NavCue,
                   k: int = DEFAULT_TOP_K,
                   min_score: float = DEFAULT_MIN_MATCH_SCORE,
                   kernel: str = "aligned",
                   weight_floor: float = 1e-9) -> float:
    """Label-marginalized likelihood of one cue for one particle."""
    matches = top_k_matches(g, cue.label, k, min_score)
    if not matches:
        return weight_floor
    total = 0.0
    for m in matches:
        total += m.prob * direction_likelihood(g, particle, m.node,
                                               cue.direction_dist, kernel)
    return total


def observation_multipliers(g: NavGraph, obs: SignObservation, cfg: FilterConfig,
                            nodes: np.ndarray, headings: np.ndarray) -> np.ndarray:
    """Geometric-mean observation weight for arbitrary (node, heading) arrays.

    Shared by the particle filter and the exact filter so both apply the
    identical likelihood.
    """
    idx = g.index()
    product = np.ones(len(nodes))
    for cue in obs.cues:
        matches = top_k_matches(g, cue.label, cfg.top_k, cfg.min_match_score)
        if not matches:
            cue_lik = np.full(len(nodes), cfg.weight_floor)
        else:
            ddist = np.asarray(cue.direction_dist)
            cue_lik = np.zeros(len(nodes))
            for m in matches:
                cue_lik += m.prob * _direction_likelihood_arrays(
                    idx, idx.idx_of(m.node), nodes, headings, ddist, cfg.kernel)
        product *= cue_lik
    return np.maximum(product ** (1.0 / len(obs.cues)), cfg.weight_floor)


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    return float(1.0 / np.sum(np.square(weights)))


def observation_update(belief: BeliefState, g: NavGraph, obs: SignObservation,
                       cfg: FilterConfig) -> BeliefState:
    """Reweight by the observation, renormalize, and resample when the
    effective sample size drops below the configured fraction."""
    mult = observation_multipliers(g, obs, cfg, belief.nodes, belief.headings)
    weights = belief.weights * mult
    total = weights.sum()
    if total <= 0.0 or not np.isfinite(total):
        logger.warning("observation produced zero total weight; "
                       "reinitializing belief uniformly (kidnapped robot)")
        out = _uniform_arrays(g.index(), replace(cfg, num_particles=belief.num_particles),
                              belief.rng, belief.poses is not None)
        out.step = belief.step + 1
        return out
    weights = weights / total
    out = BeliefState(belief.nodes.copy(), belief.headings.copy(), weights,
                      None if belief.poses is None else belief.poses.copy(),
                      belief.step + 1, belief.rng)
    if ess(weights) < cfg.ess_fraction * belief.num_particles:
        out = resample(out, g, cfg)
    return out


# -- resampling ---------------------------------------------------------------


def _systematic_indices(weights: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Low-variance (systematic) resampling: one random offset, n strata."""
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(0, len(weights) - 1)


def _reciprocal_indices(weights: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Diversity-preserving draw with probability proportional to inverse
    weight, smoothed by 1/N^2."""
    eps_r = 1.0 / len(weights) ** 2
    inv = 1.0 / (weights + eps_r)
    return rng.choice(len(weights), size=n, p=inv / inv.sum())


def resample(belief: BeliefState, g: NavGraph, cfg: FilterConfig) -> BeliefState:
    """Mixture of low-variance and reciprocal resampling; weights reset to
    1/N, headings re-jittered around the source particle."""
    n = belief.num_particles
    n_low = int(round(cfg.mixture_alpha * n))
    src = np.empty(n, dtype=np.int64)
    if n_low > 0:
        src[:n_low] = _systematic_indices(belief.weights, n_low, belief.rng)
    if n - n_low > 0:
        src[n_low:] = _reciprocal_indices(belief.weights, n - n_low, belief.rng)

    heading_jitter = belief.rng.normal(0.0, cfg.heading_noise_sigma, n)
    headings = wrap_angles(belief.headings[src] + heading_jitter)
    nodes = belief.nodes[src]
    poses = None
    if belief.poses is not None:
        poses = belief.poses[src].copy()
        poses[:, :2] += belief.rng.normal(0.0, cfg.position_jitter_sigma, (n, 2))
        poses[:, 3] = headings
        nodes = _snap_nodes(g.index(), poses, nodes, cfg)[0]
    weights = np.full(n, 1.0 / n)
    return BeliefState(nodes, headings, weights, poses, belief.step, belief.rng)


# -- motion models ------------------------------------------------------------


def motion_update_topo(belief: BeliefState, g: NavGraph, action: TopoAction,
                       cfg: FilterConfig,
                       rng: Optional[np.random.Generator] = None) -> BeliefState:
    """Move each particle along the outgoing edge best matching the action:
    traverse it with p_correct, stay put with p_stay, or take a uniformly
    random outgoing edge with p_random. Particles without outgoing edges
    stay. Weights are unchanged."""
    rng = rng or belief.rng
    idx = g.index()
    n = belief.num_particles
    cand = idx.candidate_edges()[belief.nodes, action.direction]

    u = rng.random(n)
    pick = rng.random(n)
    jitter = rng.normal(0.0, cfg.heading_noise_sigma, n)

    nodes = belief.nodes.copy()
    headings = belief.headings.copy()
    has_edge = cand >= 0

    move = (u < cfg.p_correct) & has_edge
    nodes[move] = idx.nbr[cand[move]]
    headings[move] = _ANGLES[idx.edge_dir[cand[move]]] + jitter[move]

    rand = (u >= cfg.p_correct + cfg.p_stay) & has_edge
    if np.any(rand):
        deg = (idx.indptr[belief.nodes + 1] - idx.indptr[belief.nodes])[rand]
        k = idx.indptr[belief.nodes[rand]] + np.minimum(
            (pick[rand] * deg).astype(np.int64), deg - 1)
        nodes[rand] = idx.nbr[k]
        headings[rand] = _ANGLES[idx.edge_dir[k]] + jitter[rand]

    headings = wrap_angles(headings)
    poses = None
    if belief.poses is not None:
        poses = belief.poses.copy()
        poses[:, :3] = idx.positions[nodes]
        poses[:, 3] = headings
    return BeliefState(nodes, headings, belief.weights.copy(), poses,
                       belief.step + 1, belief.rng)


def _snap_nodes(idx: GraphIndex, poses: np.ndarray, prev_nodes: np.ndarray,
                cfg: FilterConfig) -> tuple[np.ndarray, np.ndarray]:
    """Snap metric poses to the nearest same-floor node within snap_radius.

    Returns (node indices, off-graph mask); off-graph poses keep their
    previous node.
    """
    floors = np.rint(poses[:, 2] / cfg.floor_height).astype(np.int64)
    nodes = prev_nodes.copy()
    off = np.ones(len(poses), dtype=bool)
    for floor in np.unique(floors):
        tree, members = idx.floor_tree(int(floor))
        if tree is None:
            continue
        sel = floors == floor
        dist, which = tree.query(poses[sel, :2])
        hit = dist <= cfg.snap_radius
        rows = np.nonzero(sel)[0][hit]
        nodes[rows] = members[which[hit]]
        off[rows] = False
    return nodes, off


def motion_update_metric(belief: BeliefState, g: NavGraph, delta: OdometryDelta,
                         cfg: FilterConfig,
                         rng: Optional[np.random.Generator] = None) -> BeliefState:
    """Propagate metric poses with the noisy odometry delta (robot frame,
    translation applied in the pre-rotation heading), then snap to nodes.
    Poses beyond snap_radius keep their node and are penalized."""
    if belief.poses is None:
        raise ValueError("metric motion requires a belief with metric poses")
    rng = rng or belief.rng
    n = belief.num_particles
    trans = math.hypot(delta.dx, delta.dy)
    rot = abs(delta.dtheta)
    rot_std = cfg.rot_noise_per_rad * rot + cfg.rot_noise_per_m * trans
    trans_std = cfg.trans_noise_per_m * trans + cfg.trans_noise_per_rad * rot

    noise_xy = rng.normal(0.0, 1.0, (n, 2)) * trans_std
    noise_th = rng.normal(0.0, 1.0, n) * rot_std

    poses = belief.poses.copy()
    theta = poses[:, 3]
    poses[:, 0] += np.cos(theta) * delta.dx - np.sin(theta) * delta.dy + noise_xy[:, 0]
    poses[:, 1] += np.sin(theta) * delta.dx + np.cos(theta) * delta.dy + noise_xy[:, 1]
    poses[:, 2] += delta.dz
    poses[:, 3] = wrap_angles(theta + delta.dtheta + noise_th)

    nodes, off = _snap_nodes(g.index(), poses, belief.nodes, cfg)
    weights = belief.weights.copy()
    if np.any(off):
        weights[off] *= cfg.off_graph_penalty
        weights = weights / weights.sum()
    return BeliefState(nodes, poses[:, 3].copy(), weights, poses,
                       belief.step + 1, belief.rng)


# -- estimates and marginals ---------------------------------------------------


def estimate(belief: BeliefState, g: NavGraph) -> Estimate:
    """Point estimate: highest-weight node (ties: lower id), weighted
    circular-mean heading there, and that node's weight share."""
    idx = g.index()
    totals = np.bincount(belief.nodes, weights=belief.weights, minlength=len(idx.ids))
    best = int(np.argmax(totals))
    at = belief.nodes == best
    w = belief.weights[at]
    heading = float(np.arctan2(np.sum(w * np.sin(belief.headings[at])),
                               np.sum(w * np.cos(belief.headings[at]))))
    return Estimate(idx.ids[best], heading, float(totals[best]))


def node_marginal(belief: BeliefState, g: NavGraph) -> np.ndarray:
    """Particle weights summed per node, aligned to the graph's id order."""
    return np.bincount(belief.nodes, weights=belief.weights,
                       minlength=len(g.index().ids))


def joint_marginal(belief: BeliefState, g: NavGraph) -> np.ndarray:
    """(V, 8) weight table with headings binned to the nearest category."""
    V = len(g.index().ids)
    cats = discretize_directions(belief.headings)
    table = np.zeros((V, NUM_DIRECTIONS))
    np.add.at(table, (belief.nodes, cats), belief.weights)
    return table
