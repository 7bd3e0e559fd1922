"""Exact discrete Bayes filter over (node, direction category) states.

Brute-force forward filtering on the full V x 8 table, applying the same
motion and observation rules as the particle filter. Serves as the
correctness oracle; intended for graphs up to a few hundred states.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .cues import SignObservation
from .graph import DIRECTION_ANGLES, NUM_DIRECTIONS, NavGraph
from .mcl import FilterConfig, TopoAction, observation_multipliers

logger = logging.getLogger(__name__)

_ANGLES = np.array(DIRECTION_ANGLES)


@dataclass
class DiscreteBelief:
    probs: np.ndarray  # (V, 8), non-negative, sums to 1

    def total(self) -> float:
        return float(self.probs.sum())

    def node_marginal(self) -> np.ndarray:
        return self.probs.sum(axis=1)


def init_uniform_exact(g: NavGraph) -> DiscreteBelief:
    """Uniform mass over intersection nodes and the 8 heading categories."""
    idx = g.index()
    V = len(idx.ids)
    probs = np.zeros((V, NUM_DIRECTIONS))
    inter = idx.intersection_idx
    if len(inter) == 0:
        raise ValueError("graph has no intersection nodes to initialize on")
    probs[inter, :] = 1.0 / (len(inter) * NUM_DIRECTIONS)
    return DiscreteBelief(probs)


def exact_motion(b: DiscreteBelief, g: NavGraph, action: TopoAction,
                 cfg: FilterConfig) -> DiscreteBelief:
    """Push the belief through the exact transition kernel of the topological
    motion model. Headings land exactly on the traversed edge's category."""
    idx = g.index()
    V = len(idx.ids)
    new = cfg.p_stay * b.probs.copy()
    node_mass = b.probs.sum(axis=1)

    cand = idx.candidate_edges()[:, action.direction]
    deg = np.diff(idx.indptr)
    stuck = deg == 0
    new[stuck] += (cfg.p_correct + cfg.p_random) * b.probs[stuck]

    movable = ~stuck
    k = cand[movable]
    np.add.at(new, (idx.nbr[k], idx.edge_dir[k]),
              cfg.p_correct * node_mass[movable])

    if cfg.p_random > 0:
        src = np.repeat(np.arange(V), deg)
        contrib = cfg.p_random * node_mass[src] / deg[src]
        np.add.at(new, (idx.nbr, idx.edge_dir), contrib)
    return DiscreteBelief(new)


def exact_observe(b: DiscreteBelief, g: NavGraph, obs: SignObservation,
                  cfg: FilterConfig) -> DiscreteBelief:
    """Pointwise multiply by the identical observation likelihood, evaluated
    at the canonical category headings, and renormalize."""
    idx = g.index()
    V = len(idx.ids)
    nodes = np.repeat(np.arange(V), NUM_DIRECTIONS)
    headings = np.tile(_ANGLES, V)
    mult = observation_multipliers(g, obs, cfg, nodes, headings)
    new = b.probs * mult.reshape(V, NUM_DIRECTIONS)
    total = new.sum()
    if total <= 0.0 or not np.isfinite(total):
        logger.warning("exact filter: zero posterior mass; resetting uniformly")
        return init_uniform_exact(g)
    return DiscreteBelief(new / total)


def exact_estimate(b: DiscreteBelief, g: NavGraph):
    """MAP state: argmax node of the marginal (ties: lower id), then the
    argmax heading category at that node."""
    idx = g.index()
    marg = b.node_marginal()
    best = int(np.argmax(marg))
    cat = int(np.argmax(b.probs[best]))
    return idx.ids[best], float(_ANGLES[cat]), float(marg[best])


def tv_distance(p, q) -> float:
    """Total variation distance between two distributions on the same support.

    Accepts DiscreteBelief or plain arrays; shapes must match after taking
    DiscreteBelief.probs.
    """
    a = p.probs if isinstance(p, DiscreteBelief) else np.asarray(p, dtype=np.float64)
    b = q.probs if isinstance(q, DiscreteBelief) else np.asarray(q, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"mismatched support: {a.shape} vs {b.shape}")
    return float(0.5 * np.sum(np.abs(a - b)))
