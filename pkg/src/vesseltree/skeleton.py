"""Skeletonization, node classification, and polyline tracing.

The mask is thinned to a 1-pixel 8-connected skeleton (two-subpass
parallel thinning plus a deterministic cleanup to the minimal
skeleton). Degrees count 8-connected skeleton neighbors: endpoints have
degree 1, branch pixels degree >= 3. Polylines are traced between such
nodes in a fixed raster-scan / clockwise-from-north order so the output
is reproducible.
"""

from dataclasses import dataclass

import numpy as np
import scipy.ndimage

from vesseltree import _kernels
from vesseltree.mask_io import VesselMask

# ring offsets clockwise from north
_RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

_STRUCT8 = np.ones((3, 3), dtype=np.uint8)


@dataclass(frozen=True)
class Skeleton:
    """1-px-wide skeleton as a binary grid."""

    grid: np.ndarray

    def __post_init__(self):
        g = np.ascontiguousarray(np.asarray(self.grid, dtype=np.uint8))
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)

    @property
    def pixels(self):
        return {tuple(p) for p in np.argwhere(self.grid == 1)}

    def degree_grid(self):
        """Count of set 8-neighbors per pixel (0 off the skeleton)."""
        g = np.pad(self.grid, 1)
        deg = np.zeros(self.grid.shape, dtype=np.int32)
        h, w = self.grid.shape
        for dr, dc in _RING:
            deg += g[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]
        deg[self.grid == 0] = 0
        return deg

    @property
    def degree(self):
        deg = self.degree_grid()
        return {tuple(p): int(deg[tuple(p)]) for p in np.argwhere(self.grid == 1)}


def _ring_component_count(neighbors):
    """Number of 8-connected clusters among the set ring neighbors."""
    idx = [i for i, v in enumerate(neighbors) if v]
    if not idx:
        return 0
    seen = set()
    comps = 0
    for start in idx:
        if start in seen:
            continue
        comps += 1
        stack = [start]
        seen.add(start)
        while stack:
            i = stack.pop()
            ri, ci = _RING[i]
            for j in idx:
                if j in seen:
                    continue
                rj, cj = _RING[j]
                if max(abs(ri - rj), abs(ci - cj)) <= 1:
                    seen.add(j)
                    stack.append(j)
    return comps


def _prune_redundant(grid):
    """Reduce to a minimal 8-connected skeleton.

    Parallel thinning leaves fixed points that are not minimal: 2-px
    diagonal staircases, dense junction corners, filled 2x2 blocks. A
    pixel is redundant when its set neighbors form a single 8-connected
    cluster (so removal cannot disconnect anything), it is not an
    endpoint, and it touches background 4-adjacently (so removal cannot
    open a hole). Redundant pixels are deleted in raster order until
    none remain.
    """
    g = np.pad(grid.astype(np.uint8), 1)
    changed = True
    while changed:
        changed = False
        for r, c in np.argwhere(g):
            ring = [int(g[r + dr, c + dc]) for dr, dc in _RING]
            if sum(ring) < 2:
                continue
            if g[r - 1, c] and g[r + 1, c] and g[r, c - 1] and g[r, c + 1]:
                continue
            if _ring_component_count(ring) == 1:
                g[r, c] = 0
                changed = True
    return g[1:-1, 1:-1]


def skeletonize(mask):
    """Thin a mask to its 1-px topological skeleton."""
    thin = _kernels.thin_mask(mask.pixels)
    return Skeleton(_prune_redundant(thin))


def classify_nodes(skeleton):
    """Return (endpoints, branch_nodes): degree-1 and degree >= 3 pixel sets."""
    deg = skeleton.degree_grid()
    on = skeleton.grid == 1
    endpoints = {tuple(p) for p in np.argwhere(on & (deg == 1))}
    branches = {tuple(p) for p in np.argwhere(on & (deg >= 3))}
    return endpoints, branches


def junction_count(skeleton):
    """Number of 8-connected clusters of branch pixels.

    A single anatomical junction often thins to two or three adjacent
    degree->=3 pixels; clustering counts it once. This is the branch
    count consumed by the branching-density feature.
    """
    deg = skeleton.degree_grid()
    branch = (skeleton.grid == 1) & (deg >= 3)
    _, n = scipy.ndimage.label(branch, structure=_STRUCT8)
    return int(n)


def extract_polylines(skeleton):
    """Trace ordered open polylines split at endpoints and branch nodes.

    Every degree-2 pixel lands in exactly one polyline. Components that
    are pure cycles are opened at their lexicographically smallest
    pixel. Traversal uses raster-scan seeds and clockwise-from-north
    neighbor order, so the result is deterministic.
    """
    g = skeleton.grid
    h, w = g.shape
    deg = skeleton.degree_grid()
    on = g == 1
    node = on & (deg != 2)
    consumed = np.zeros_like(on)
    polylines = []
    direct = set()

    def walk(start, first):
        path = [start, first]
        consumed[first] = True
        prev, cur = start, first
        while True:
            nxt = None
            for dr, dc in _RING:
                r2, c2 = cur[0] + dr, cur[1] + dc
                if (r2, c2) == prev:
                    continue
                if 0 <= r2 < h and 0 <= c2 < w and on[r2, c2]:
                    nxt = (r2, c2)
                    break
            path.append(nxt)
            if node[nxt]:
                return path
            consumed[nxt] = True
            prev, cur = cur, nxt

    for r, c in map(tuple, np.argwhere(node)):
        for dr, dc in _RING:
            rr, cc = r + dr, c + dc
            if not (0 <= rr < h and 0 <= cc < w) or not on[rr, cc]:
                continue
            if node[rr, cc]:
                key = ((r, c), (rr, cc)) if (r, c) <= (rr, cc) else ((rr, cc), (r, c))
                if key in direct:
                    continue
                direct.add(key)
                polylines.append(np.array([(r, c), (rr, cc)], dtype=np.int32))
            elif not consumed[rr, cc]:
                path = walk((r, c), (rr, cc))
                polylines.append(np.array(path, dtype=np.int32))

    remaining = on & (deg == 2) & ~consumed
    while remaining.any():
        m = tuple(np.argwhere(remaining)[0])
        path = [m]
        consumed[m] = True
        prev = m
        cur = None
        for dr, dc in _RING:
            r2, c2 = m[0] + dr, m[1] + dc
            if 0 <= r2 < h and 0 <= c2 < w and on[r2, c2]:
                cur = (r2, c2)
                break
        while cur != m:
            path.append(cur)
            consumed[cur] = True
            nxt = None
            for dr, dc in _RING:
                r2, c2 = cur[0] + dr, cur[1] + dc
                if (r2, c2) == prev:
                    continue
                if 0 <= r2 < h and 0 <= c2 < w and on[r2, c2]:
                    nxt = (r2, c2)
                    break
            prev, cur = cur, nxt
        polylines.append(np.array(path, dtype=np.int32))
        remaining = on & (deg == 2) & ~consumed

    return polylines


def prune_spurs(skeleton, min_points=5):
    """Iteratively remove endpoint arms shorter than ``min_points``.

    A spur is a traced polyline with one degree-1 terminal whose other
    terminal is a branch node; its pixels (branch node excluded) are
    deleted. Standalone short lines (both terminals degree 1) and short
    bridges between junctions are kept. Returns
    (pruned skeleton, number of spurs removed).
    """
    g = skeleton.grid.copy()
    n_removed = 0
    while True:
        current = Skeleton(g.copy())
        deg = current.degree_grid()
        removed_any = False
        for poly in extract_polylines(current):
            if len(poly) >= min_points:
                continue
            a = tuple(poly[0])
            b = tuple(poly[-1])
            da, db = int(deg[a]), int(deg[b])
            if da == 1 and db >= 3:
                body = poly[:-1]
            elif db == 1 and da >= 3:
                body = poly[1:]
            else:
                continue
            g[body[:, 0], body[:, 1]] = 0
            n_removed += 1
            removed_any = True
        if not removed_any:
            break
        g = _prune_redundant(g)
    return Skeleton(g), n_removed


def write_skeleton(skeleton, path):
    """Debug dump: skeleton as an 8-bit raster (foreground 255)."""
    from vesseltree.mask_io import write_mask

    return write_mask(VesselMask(skeleton.grid), path)


def format_polylines(polylines):
    """Debug dump: one ``id: (r,c) (r,c) ...`` line per polyline."""
    lines = []
    for i, poly in enumerate(polylines):
        pts = " ".join(f"({r},{c})" for r, c in poly)
        lines.append(f"{i}: {pts}")
    return "\n".join(lines) + ("\n" if lines else "")
