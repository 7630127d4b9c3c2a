"""Cubic-Bezier fitting, measurement, and the BTE tree format.

Geometry lives in (x, y) pixel coordinates (x = column, y = row).
Control points are quantized to a 2**-20 px grid (~1e-6 px): all later
additive perturbation arithmetic is then exact in float64, and the
quantum sits below the 6-decimal precision of the BTE text format.

BTE grammar:
    line 1:   ``BTE 1``
    comments: lines starting ``#`` (``# dims W H`` and ``# provenance S``
              are recognized and round-trip tree metadata)
    records:  ``id parent x0 y0 x1 y1 x2 y2 x3 y3 radius`` with 11
              whitespace-separated fields; id is a positive integer,
              parent an integer or -1, reals are written with 6 decimals.
"""

from dataclasses import dataclass

import numpy as np

from vesseltree.errors import BteParseError

CHUNK_POINTS = 30
CHUNK_OVERLAP = 4
_CHUNK_STRIDE = CHUNK_POINTS - CHUNK_OVERLAP
MIN_CHUNK_POINTS = 5
LINK_TOLERANCE_PX = 1.5
RADIUS_SAMPLES = 20

_COORD_SCALE = float(1 << 20)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)


def snap(values):
    """Quantize coordinates to the 2**-20 px grid."""
    return np.round(np.asarray(values, dtype=np.float64) * _COORD_SCALE) / _COORD_SCALE


def eval_bezier(ctrl, t):
    """Evaluate the Bernstein form at t in [0, 1] (scalar or array)."""
    t = np.asarray(t, dtype=np.float64)
    if (t < 0).any() or (t > 1).any():
        raise ValueError("curve parameter t must lie in [0, 1]")
    u = 1.0 - t
    b0 = u * u * u
    b1 = 3.0 * u * u * t
    b2 = 3.0 * u * t * t
    b3 = t * t * t
    pts = (
        np.multiply.outer(b0, ctrl[0])
        + np.multiply.outer(b1, ctrl[1])
        + np.multiply.outer(b2, ctrl[2])
        + np.multiply.outer(b3, ctrl[3])
    )
    return pts


def bezier_derivative(ctrl, t):
    t = np.asarray(t, dtype=np.float64)
    u = 1.0 - t
    d0 = ctrl[1] - ctrl[0]
    d1 = ctrl[2] - ctrl[1]
    d2 = ctrl[3] - ctrl[2]
    return 3.0 * (
        np.multiply.outer(u * u, d0)
        + np.multiply.outer(2.0 * u * t, d1)
        + np.multiply.outer(t * t, d2)
    )


def bezier_second_derivative(ctrl, t):
    t = np.asarray(t, dtype=np.float64)
    u = 1.0 - t
    e0 = ctrl[2] - 2.0 * ctrl[1] + ctrl[0]
    e1 = ctrl[3] - 2.0 * ctrl[2] + ctrl[1]
    return 6.0 * (np.multiply.outer(u, e0) + np.multiply.outer(t, e1))


def arc_length(ctrl, subintervals=64):
    """Composite Gauss-Legendre quadrature of |B'(t)| over [0, 1]."""
    edges = np.linspace(0.0, 1.0, subintervals + 1)
    mid = (edges[:-1] + edges[1:]) / 2.0
    half = (edges[1:] - edges[:-1]) / 2.0
    t = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    speed = np.linalg.norm(bezier_derivative(ctrl, t), axis=-1)
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return float(np.dot(speed, w))


def polyline_arc_length(ctrl, samples=100_000):
    """Dense-sampling chord-sum oracle for the arc length."""
    t = np.linspace(0.0, 1.0, samples)
    pts = eval_bezier(ctrl, t)
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def curvature(ctrl, t):
    """Signed-magnitude curvature |x'y'' - y'x''| / speed^3.

    Samples with vanishing first derivative (speed <= 1e-9) come back
    as NaN so aggregations can exclude them.
    """
    d1 = bezier_derivative(ctrl, t)
    d2 = bezier_second_derivative(ctrl, t)
    speed2 = d1[..., 0] ** 2 + d1[..., 1] ** 2
    cross = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.abs(cross) / np.power(speed2, 1.5)
    k = np.where(speed2 > 1e-18, k, np.nan)
    if np.ndim(t) == 0:
        return float(k)
    return k


def chord_length(ctrl):
    return float(np.linalg.norm(ctrl[3] - ctrl[0]))


def split_upper(ctrl, t):
    """De Casteljau subdivision: the cubic restricted to [t, 1]."""
    if not 0.0 <= t < 1.0:
        raise ValueError(f"split parameter must lie in [0, 1), got {t}")
    c = np.asarray(ctrl, dtype=np.float64)
    q = (1.0 - t) * c[:-1] + t * c[1:]
    r = (1.0 - t) * q[:-1] + t * q[1:]
    s = (1.0 - t) * r[0] + t * r[1]
    return np.stack([s, r[1], q[2], c[3]])


def split_lower(ctrl, t):
    """De Casteljau subdivision: the cubic restricted to [0, t].

    Used to trim a fitted chunk to the span it owns when its trailing
    points are retraced by the next chunk's head.
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"split parameter must lie in (0, 1], got {t}")
    c = np.asarray(ctrl, dtype=np.float64)
    q = (1.0 - t) * c[:-1] + t * c[1:]
    r = (1.0 - t) * q[:-1] + t * q[1:]
    s = (1.0 - t) * r[0] + t * r[1]
    return np.stack([c[0], q[0], r[0], s])


def chunk_polyline(points, min_tail=MIN_CHUNK_POINTS):
    """Split an ordered point array into overlapping fit chunks.

    Chunks hold 30 points with a 4-point overlap (stride 26). The final
    remainder becomes its own chunk when it has at least ``min_tail``
    points; shorter remainders merge into the previous chunk, which
    then extends to the end of the polyline. At the default threshold
    (5, the minimum a cubic fit needs) a merged remainder is always the
    4 shared points the previous chunk already covers.

    ``min_tail`` is a sensitivity knob: the encode pipeline raises it
    so that trailing windows stay large enough for the least-squares
    fit to smooth pixel-level corners instead of interpolating them.
    """
    points = np.asarray(points)
    n = len(points)
    if n < MIN_CHUNK_POINTS:
        raise ValueError(f"polyline too short to fit: {n} < {MIN_CHUNK_POINTS} points")
    if min_tail < MIN_CHUNK_POINTS:
        raise ValueError(f"min_tail must be at least {MIN_CHUNK_POINTS}")
    chunks = []
    start = 0
    while start + CHUNK_POINTS <= n:
        chunks.append(points[start : start + CHUNK_POINTS])
        start += _CHUNK_STRIDE
    if start < n:
        if n - start >= min_tail:
            chunks.append(points[start:n])
        elif chunks:
            chunks[-1] = points[start - _CHUNK_STRIDE : n]
    return chunks


@dataclass(frozen=True)
class FitResult:
    ctrl: np.ndarray
    rms: float
    fallback: bool


def chord_parameters(points):
    """Cumulative chordal parameterization in [0, 1]."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("degenerate chunk: zero total chord length")
    return cum / total


def fit_cubic(points, params=None):
    """Least-squares cubic fit with endpoints clamped to the chunk ends.

    P1 and P2 solve the 2x2 normal equations of the linear problem at
    the cumulative chord-length parameters (or caller-supplied
    ``params``). A singular system falls back to the 1/3-2/3 chord
    interpolant, flagged on the result.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < MIN_CHUNK_POINTS:
        raise ValueError(f"need at least {MIN_CHUNK_POINTS} points, got {len(pts)}")
    p0 = pts[0]
    p3 = pts[-1]
    chord = np.linalg.norm(p3 - p0)
    if chord < 1e-9:
        raise ValueError("degenerate chunk: coincident endpoints")
    t = chord_parameters(pts) if params is None else np.asarray(params, dtype=np.float64)
    u = 1.0 - t
    b0 = u * u * u
    b1 = 3.0 * u * u * t
    b2 = 3.0 * u * t * t
    b3 = t * t * t
    rhs = pts - np.multiply.outer(b0, p0) - np.multiply.outer(b3, p3)
    a11 = float(np.dot(b1, b1))
    a12 = float(np.dot(b1, b2))
    a22 = float(np.dot(b2, b2))
    det = a11 * a22 - a12 * a12
    fallback = abs(det) < 1e-12
    if fallback:
        p1 = p0 + (p3 - p0) / 3.0
        p2 = p0 + 2.0 * (p3 - p0) / 3.0
    else:
        r1 = b1 @ rhs
        r2 = b2 @ rhs
        p1 = (a22 * r1 - a12 * r2) / det
        p2 = (a11 * r2 - a12 * r1) / det
    ctrl = snap(np.stack([p0, p1, p2, p3]))
    resid = eval_bezier(ctrl, t) - pts
    rms = float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
    return FitResult(ctrl=_freeze(ctrl), rms=rms, fallback=fallback)


def _freeze(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TreeSegment:
    """One fitted cubic with its tree metadata."""

    id: int
    parent: int | None
    ctrl: np.ndarray
    radius: float

    def __post_init__(self):
        ctrl = np.asarray(self.ctrl, dtype=np.float64)
        if ctrl.shape != (4, 2):
            raise ValueError("control points must be a (4, 2) array")
        if np.linalg.norm(ctrl[3] - ctrl[0]) < 1e-9:
            raise ValueError(f"segment {self.id}: degenerate chord (P0 == P3)")
        object.__setattr__(self, "ctrl", _freeze(snap(ctrl)))


@dataclass(frozen=True)
class BezierTree:
    """Ordered cubic segments with parent connectivity.

    A fundus-scale mask typically yields 200-500 segments; any positive
    count (or an empty tree) is accepted.
    """

    segments: tuple
    source_dims: tuple = (512, 512)
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate segment ids")
        if any(i <= 0 for i in ids):
            raise ValueError("segment ids must be positive")
        known = set(ids)
        for s in self.segments:
            if s.parent is not None and s.parent not in known:
                raise ValueError(f"segment {s.id}: dangling parent {s.parent}")
        self._check_acyclic()

    def _check_acyclic(self):
        parent = {s.id: s.parent for s in self.segments}
        state = {}
        for root in parent:
            node, trail = root, []
            while node is not None and state.get(node) is None:
                state[node] = "open"
                trail.append(node)
                node = parent[node]
            if node is not None and state[node] == "open":
                raise ValueError(f"parent links contain a cycle through segment {node}")
            for n in trail:
                state[n] = "done"

    def __len__(self):
        return len(self.segments)

    @property
    def parent_map(self):
        return {s.id: s.parent for s in self.segments}

    def segment_by_id(self, sid):
        for s in self.segments:
            if s.id == sid:
                return s
        raise KeyError(sid)


def sample_mean_radius(ctrl, field_values, samples=RADIUS_SAMPLES):
    """Mean field value at ``samples`` uniform curve points (nearest pixel)."""
    h, w = field_values.shape
    pts = eval_bezier(ctrl, np.linspace(0.0, 1.0, samples))
    ix = np.clip(np.floor(pts[:, 0] + 0.5).astype(np.int64), 0, w - 1)
    iy = np.clip(np.floor(pts[:, 1] + 0.5).astype(np.int64), 0, h - 1)
    return float(field_values[iy, ix].mean())


def link_parents(curves, tol=LINK_TOLERANCE_PX):
    """Infer parent ids by endpoint coincidence.

    A segment's parent is the nearest earlier segment with an endpoint
    within ``tol`` px of this segment's P0; equal distances go to the
    lower id. Restricting candidates to earlier segments keeps the
    links acyclic by construction.
    """
    parents = []
    for i, ctrl in enumerate(curves):
        start = ctrl[0]
        best = None
        best_d = np.inf
        for j in range(i):
            other = curves[j]
            d = min(
                np.linalg.norm(other[3] - start),
                np.linalg.norm(other[0] - start),
            )
            if d <= tol and d < best_d:
                best, best_d = j, d
        parents.append(best)
    return parents


def build_tree(curves, field=None, source_dims=(512, 512), provenance=""):
    """Assemble fitted curves into a BezierTree with ids 1..n.

    Per-segment radius is the mean field lookup along the curve when a
    RadiusField is supplied, else 0.
    """
    parents = link_parents(curves)
    segments = []
    for i, ctrl in enumerate(curves):
        radius = 0.0
        if field is not None:
            radius = sample_mean_radius(ctrl, field.values)
        parent = None if parents[i] is None else parents[i] + 1
        segments.append(TreeSegment(id=i + 1, parent=parent, ctrl=ctrl, radius=radius))
    return BezierTree(segments=tuple(segments), source_dims=tuple(source_dims), provenance=provenance)


def write_bte(tree, path, extra_comments=()):
    """Serialize a tree in the BTE text format (6-decimal fixed point)."""
    lines = ["BTE 1"]
    lines.append(f"# dims {tree.source_dims[0]} {tree.source_dims[1]}")
    if tree.provenance:
        lines.append(f"# provenance {tree.provenance}")
    for comment in extra_comments:
        lines.append(f"# {comment}")
    for s in tree.segments:
        parent = -1 if s.parent is None else s.parent
        coords = " ".join(f"{v:.6f}" for v in s.ctrl.ravel())
        lines.append(f"{s.id} {parent} {coords} {s.radius:.6f}")
    text = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def parse_bte(path):
    """Parse a BTE file back into a BezierTree.

    Malformed input raises BteParseError carrying the 1-based line
    number: bad header, wrong field count, non-numeric fields,
    duplicate ids, and parent references to missing segments.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise BteParseError("empty file: missing 'BTE 1' header", line=1)
    header = lines[0].split()
    if len(header) != 2 or header[0] != "BTE":
        raise BteParseError(f"bad header {lines[0]!r}: expected 'BTE 1'", line=1)
    if header[1] != "1":
        raise BteParseError(f"unknown format version {header[1]!r}", line=1)

    dims = (512, 512)
    provenance = ""
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            body = stripped[1:].strip().split()
            if len(body) == 3 and body[0] == "dims":
                try:
                    dims = (int(body[1]), int(body[2]))
                except ValueError:
                    raise BteParseError(f"bad dims comment {stripped!r}", line=lineno)
                if dims[0] <= 0 or dims[1] <= 0:
                    raise BteParseError(f"dims must be positive, got {dims}", line=lineno)
            elif len(body) >= 2 and body[0] == "provenance":
                provenance = " ".join(body[1:])
            continue
        fields = stripped.split()
        if len(fields) != 11:
            raise BteParseError(
                f"expected 11 fields, got {len(fields)}", line=lineno
            )
        try:
            sid = int(fields[0])
            parent = int(fields[1])
            values = [float(v) for v in fields[2:]]
        except ValueError as exc:
            raise BteParseError(f"non-numeric field: {exc}", line=lineno)
        if sid <= 0:
            raise BteParseError(f"segment id must be positive, got {sid}", line=lineno)
        records.append((lineno, sid, parent, values))

    ids = {}
    for lineno, sid, _, _ in records:
        if sid in ids:
            raise BteParseError(f"duplicate segment id {sid}", line=lineno)
        ids[sid] = lineno

    segments = []
    for lineno, sid, parent, values in records:
        if parent != -1 and parent not in ids:
            raise BteParseError(f"parent id {parent} not defined", line=lineno)
        ctrl = np.array(values[:8], dtype=np.float64).reshape(4, 2)
        try:
            seg = TreeSegment(
                id=sid,
                parent=None if parent == -1 else parent,
                ctrl=ctrl,
                radius=values[8],
            )
        except ValueError as exc:
            raise BteParseError(str(exc), line=lineno)
        segments.append(seg)
    try:
        return BezierTree(segments=tuple(segments), source_dims=dims, provenance=provenance)
    except ValueError as exc:
        raise BteParseError(str(exc))
