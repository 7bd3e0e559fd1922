"""Shared 2D geometry helpers: simplification, point-in-polygon, rasterization,
and boundary tracing of binary components."""

from __future__ import annotations

import numpy as np


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def douglas_peucker(points: np.ndarray, tol: float) -> np.ndarray:
    """Simplify a polyline, keeping endpoints and bends deviating > tol."""
    pts = np.asarray(points, dtype=np.float64)
    n = len(pts)
    if n <= 2:
        return pts.copy()
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        a, b = stack.pop()
        if b - a < 2:
            continue
        seg = pts[b] - pts[a]
        seg_len = np.hypot(*seg)
        mid = pts[a + 1:b]
        if seg_len < 1e-12:
            d = np.hypot(*(mid - pts[a]).T)
        else:
            d = np.abs(np.cross(seg, mid - pts[a])) / seg_len
        k = int(np.argmax(d))
        if d[k] > tol:
            keep[a + 1 + k] = True
            stack.append((a, a + 1 + k))
            stack.append((a + 1 + k, b))
    return pts[keep]


def points_in_ring(points: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Even-odd (crossing number) point-in-polygon test, vectorized.

    Points exactly on an edge land on either side depending on rounding;
    callers sample away from boundaries.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    r = np.asarray(ring, dtype=np.float64)
    x0, y0 = r[:, 0], r[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    px = pts[:, 0][:, None]
    py = pts[:, 1][:, None]
    spans = (y0[None, :] <= py) != (y1[None, :] <= py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = x0[None, :] + (py - y0[None, :]) * (x1 - x0)[None, :] / (y1 - y0)[None, :]
    crossings = np.sum(spans & (xc > px), axis=1)
    return crossings % 2 == 1


def points_in_polygon(points: np.ndarray, ring: np.ndarray,
                      holes: list[np.ndarray] | None = None) -> np.ndarray:
    inside = points_in_ring(points, ring)
    for h in holes or []:
        inside ^= points_in_ring(points, h)
    return inside


def rasterize_rings(rings: list[np.ndarray], x_centers: np.ndarray,
                    y_centers: np.ndarray) -> np.ndarray:
    """Even-odd fill of a set of rings sampled at cell centers.

    Returns a (len(y_centers), len(x_centers)) boolean mask. Holes are
    passed as additional rings; parity cancels them out.
    """
    R, C = len(y_centers), len(x_centers)
    counts = np.zeros((R, C), dtype=np.int64)
    for ring in rings:
        r = np.asarray(ring, dtype=np.float64)
        x0, y0 = r[:, 0], r[:, 1]
        x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
        yy = y_centers[:, None]
        spans = (y0[None, :] <= yy) != (y1[None, :] <= yy)  # (R, E)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0[None, :] + (yy - y0[None, :]) * (x1 - x0)[None, :] / (y1 - y0)[None, :]
        xc = np.where(spans, xc, np.inf)  # (R, E)
        # Cell (r, c) is inside when an odd number of crossings lie right of x.
        counts += np.sum(xc[:, :, None] > x_centers[None, None, :], axis=1)
    return counts % 2 == 1


def shoelace_area(ring: np.ndarray) -> float:
    """Absolute polygon area of a closed ring (last vertex not repeated)."""
    r = np.asarray(ring, dtype=np.float64)
    if len(r) < 3:
        return 0.0
    x, y = r[:, 0], r[:, 1]
    return float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))) / 2.0)


def ring_centroid(ring: np.ndarray) -> np.ndarray:
    """Area centroid of a simple ring."""
    r = np.asarray(ring, dtype=np.float64)
    x, y = r[:, 0], r[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = np.sum(cross) / 2.0
    if abs(a) < 1e-12:
        return r.mean(axis=0)
    cx = np.sum((x + xn) * cross) / (6.0 * a)
    cy = np.sum((y + yn) * cross) / (6.0 * a)
    return np.array([cx, cy])


# Moore neighborhood in clockwise order (image coords, y down), starting east.
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def trace_boundary(mask: np.ndarray) -> np.ndarray:
    """Outer boundary of a binary component as an ordered (x, y) pixel ring.

    Moore-neighbor tracing starting from the topmost-leftmost foreground
    pixel, sweeping clockwise from the backtrack pixel. Terminates when the
    start pixel is re-entered from the initial backtrack (Jacob's criterion).
    Single-pixel components return that pixel alone.
    """
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return np.zeros((0, 2))
    start_i = np.lexsort((xs, ys))[0]
    start = (int(xs[start_i]), int(ys[start_i]))
    start_backtrack = (start[0] - 1, start[1])  # west; empty by scan order

    h, w = mask.shape

    def fg(p):
        x, y = p
        return 0 <= x < w and 0 <= y < h and bool(mask[y, x])

    ring = [start]
    cur, backtrack = start, start_backtrack
    seen = {(cur, backtrack)}
    for _ in range(4 * mask.size + 8):
        d0 = _MOORE_INDEX[(backtrack[0] - cur[0], backtrack[1] - cur[1])]
        nxt = None
        for k in range(1, 9):
            d = (d0 + k) % 8
            cand = (cur[0] + _MOORE[d][0], cur[1] + _MOORE[d][1])
            if fg(cand):
                nxt = cand
                backtrack = (cur[0] + _MOORE[(d - 1) % 8][0],
                             cur[1] + _MOORE[(d - 1) % 8][1])
                break
        if nxt is None:
            return np.array(ring, dtype=np.float64)  # isolated pixel
        if (nxt, backtrack) in seen:
            return np.array(ring, dtype=np.float64)
        seen.add((nxt, backtrack))
        ring.append(nxt)
        cur = nxt
    raise RuntimeError("boundary tracing failed to terminate")
