"""Navigational cues parsed from signs, and fuzzy label matching.

A cue pairs a place label with a probability distribution over the 8
direction categories. Cues arrive as structured data (files, simulator,
or the UI); this module matches their labels against graph place labels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

from .graph import NUM_DIRECTIONS, NavGraph, normalize_label

DEFAULT_MIN_MATCH_SCORE = 0.35
DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class NavCue:
    label: str
    direction_dist: tuple[float, ...]  # 8 non-negative reals summing to 1

    def __post_init__(self):
        if not normalize_label(self.label):
            raise ValueError("cue label empty after normalization")
        dist = tuple(float(p) for p in self.direction_dist)
        if len(dist) != NUM_DIRECTIONS:
            raise ValueError(f"direction_dist must have {NUM_DIRECTIONS} entries")
        if any(p < 0 for p in dist):
            raise ValueError("direction_dist entries must be non-negative")
        if abs(sum(dist) - 1.0) >= 1e-6:
            raise ValueError(f"direction_dist must sum to 1, got {sum(dist)}")
        object.__setattr__(self, "direction_dist", dist)


@dataclass(frozen=True)
class SignObservation:
    cues: tuple[NavCue, ...]
    timestamp: float = 0.0
    gt_node: Optional[str] = None  # evaluation only

    def __post_init__(self):
        if len(self.cues) < 1:
            raise ValueError("observation requires at least one cue")
        object.__setattr__(self, "cues", tuple(self.cues))


@dataclass(frozen=True)
class LabelMatch:
    node: str
    score: float
    prob: float


def levenshtein_distance(a: str, b: str) -> int:
    """Classic edit distance (insert/delete/substitute, unit costs)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    """Similarity in [0, 1]: 1 - dist / max(len), after label normalization."""
    na, nb = normalize_label(a), normalize_label(b)
    longest = max(len(na), len(nb))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein_distance(na, nb) / longest


def top_k_matches(g: NavGraph, label: str, k: int = DEFAULT_TOP_K,
                  min_score: float = DEFAULT_MIN_MATCH_SCORE) -> list[LabelMatch]:
    """The k most similar labeled nodes, with probabilities renormalized
    over the surviving set. Matches scoring below ``min_score`` are dropped;
    order is deterministic (score descending, then node id)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scored = []
    for nid in sorted(g.nodes):
        node = g.nodes[nid]
        if node.label is None:
            continue
        s = levenshtein_similarity(label, node.label)
        if s >= min_score:
            scored.append((-s, nid))
    scored.sort()
    picked = scored[:k]
    total = sum(-s for s, _ in picked)
    if total <= 0:
        return []
    return [LabelMatch(node=nid, score=-s, prob=-s / total) for s, nid in picked]


# -- JSONL stream -------------------------------------------------------------

def observation_to_json(obs: SignObservation) -> dict:
    rec = {
        "t": obs.timestamp,
        "cues": [{"label": c.label, "dir_dist": list(c.direction_dist)}
                 for c in obs.cues],
    }
    if obs.gt_node is not None:
        rec["gt_node"] = obs.gt_node
    return rec


def observation_from_json(rec: dict) -> SignObservation:
    cues = tuple(NavCue(c["label"], tuple(c["dir_dist"])) for c in rec["cues"])
    return SignObservation(cues=cues, timestamp=float(rec.get("t", 0.0)),
                           gt_node=rec.get("gt_node"))


def read_observations(path) -> list[SignObservation]:
    """Read a cue stream: one SignObservation JSON object per line."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(observation_from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad observation: {exc}") from exc
    return out
