"""Synthetic vessel trees with analytically known geometry.

Test fixture generator: recursive branching of gently bowed cubic
segments whose exact arc lengths are recorded at generation time by
dense polyline summation (the shared arc-length oracle). Rasterization
stamps disks along each curve at sub-pixel steps, giving a mask whose
full-pipeline roundtrip can be scored against the recorded truth.
"""

import math
from dataclasses import dataclass

import numpy as np

from vesseltree import bezier
from vesseltree._kernels import stamp_disks
from vesseltree.bezier import BezierTree, TreeSegment
from vesseltree.mask_io import VesselMask

_SYNTH_TAG = 0x73796E74
_M64 = (1 << 64) - 1

LENGTH_DECAY = 0.72
ROOT_LENGTH_FRACTION = 0.14
BRANCH_ANGLE_RANGE_DEG = (20.0, 50.0)
BOW_RANGE = (0.012, 0.03)
RASTER_STEP = 0.4


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    depth: int
    n_branches: int = 2
    root_radius: float = 2.5
    radius_decay: float = 0.8
    canvas: int = 512

    def __post_init__(self):
        if self.depth < 0 or self.depth > 8:
            raise ValueError("depth must lie in [0, 8]")
        if self.n_branches < 1 or self.n_branches > 3:
            raise ValueError("n_branches must lie in [1, 3]")
        if self.root_radius <= 0 or not 0 < self.radius_decay <= 1:
            raise ValueError("radius parameters must be positive (decay <= 1)")
        if self.canvas < 64:
            raise ValueError("canvas must be at least 64 px")


@dataclass(frozen=True)
class SynthTruth:
    """Exact per-segment geometry recorded at generation time."""

    arcs: np.ndarray
    chords: np.ndarray
    tortuosities: np.ndarray
    radii: np.ndarray
    branch_count: int

    @property
    def n_segments(self):
        return len(self.arcs)

    @property
    def total_arc_length(self):
        return float(self.arcs.sum())

    @property
    def mean_tortuosity(self):
        return float(self.tortuosities.mean())


def _rotate(d, angle_rad):
    c, s = math.cos(angle_rad), math.sin(angle_rad)
    return np.array([c * d[0] - s * d[1], s * d[0] + c * d[1]])


def generate_tree(spec):
    """Build a seeded tree; returns (BezierTree, SynthTruth)."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed) & _M64, _SYNTH_TAG]))
    canvas = spec.canvas
    root_start = np.array([canvas / 2.0, canvas * 0.9])
    root_dir = np.array([0.0, -1.0])
    root_len = canvas * ROOT_LENGTH_FRACTION

    segments = []
    arcs, chords, torts, radii = [], [], [], []
    branch_count = 0
    counter = [0]

    def emit(p0, direction, length, level, parent_id):
        counter[0] += 1
        sid = counter[0]
        p3 = p0 + direction * length
        normal = np.array([-direction[1], direction[0]])
        bow = rng.uniform(*BOW_RANGE) * (1.0 if rng.integers(0, 2) else -1.0)
        offset = bow * length * normal
        ctrl = bezier.snap(np.stack([
            p0,
            p0 + direction * (length / 3.0) + offset,
            p0 + direction * (2.0 * length / 3.0) + offset,
            p3,
        ]))
        radius = spec.root_radius * spec.radius_decay ** level
        margin = radius + 2.0
        if (ctrl < margin).any() or (ctrl > canvas - 1 - margin).any():
            raise ValueError(
                f"segment {sid} exceeds the {canvas}px canvas; "
                "reduce depth or root length"
            )
        segments.append(TreeSegment(id=sid, parent=parent_id, ctrl=ctrl, radius=radius))
        arc = bezier.polyline_arc_length(ctrl)
        chord = bezier.chord_length(ctrl)
        arcs.append(arc)
        chords.append(chord)
        torts.append(arc / chord)
        radii.append(radius)
        return sid, ctrl[3]

    def grow(p0, direction, length, level, parent_id):
        nonlocal branch_count
        sid, p3 = emit(p0, direction, length, level, parent_id)
        if level == spec.depth:
            return
        branch_count += 1
        if spec.n_branches == 1:
            angles = [math.radians(rng.uniform(-15.0, 15.0))]
        elif spec.n_branches == 2:
            angles = [
                math.radians(rng.uniform(*BRANCH_ANGLE_RANGE_DEG)),
                -math.radians(rng.uniform(*BRANCH_ANGLE_RANGE_DEG)),
            ]
        else:
            angles = [
                math.radians(rng.uniform(*BRANCH_ANGLE_RANGE_DEG)),
                math.radians(rng.uniform(-8.0, 8.0)),
                -math.radians(rng.uniform(*BRANCH_ANGLE_RANGE_DEG)),
            ]
        for angle in angles:
            grow(p3, _rotate(direction, angle), length * LENGTH_DECAY, level + 1, sid)

    grow(root_start, root_dir, root_len, 0, None)

    tree = BezierTree(
        segments=tuple(segments),
        source_dims=(canvas, canvas),
        provenance=f"synthetic:seed={spec.seed}:depth={spec.depth}",
    )
    truth = SynthTruth(
        arcs=np.array(arcs),
        chords=np.array(chords),
        tortuosities=np.array(torts),
        radii=np.array(radii),
        branch_count=branch_count,
    )
    return tree, truth


def min_branch_clearance(tree):
    """Smallest gap between non-adjacent segments, minus their radii.

    Positive values mean every pair of rasterized branches stays
    disjoint; fixtures asserting exact branch-count recovery should
    require a comfortable clearance (well-separated branches).
    """
    samples = {
        s.id: bezier.eval_bezier(s.ctrl, np.linspace(0.0, 1.0, 50))
        for s in tree.segments
    }
    parent = tree.parent_map
    clearance = math.inf
    for a in tree.segments:
        for b in tree.segments:
            if b.id <= a.id:
                continue
            if parent.get(a.id) == b.id or parent.get(b.id) == a.id:
                continue
            if parent.get(a.id) is not None and parent.get(a.id) == parent.get(b.id):
                continue
            d = np.sqrt(
                ((samples[a.id][:, None, :] - samples[b.id][None, :, :]) ** 2).sum(-1)
            ).min()
            clearance = min(clearance, float(d) - a.radius - b.radius)
    return clearance


def rasterize_tree(tree, radius_profile=None):
    """Stamp disks along every segment at sub-pixel arc steps.

    ``radius_profile`` overrides per-segment radii (map id -> px);
    segments whose disks would leave the canvas raise ValueError.
    """
    w, h = tree.source_dims
    grid = np.zeros((h, w), dtype=np.uint8)
    for seg in tree.segments:
        radius = seg.radius if radius_profile is None else radius_profile[seg.id]
        margin = radius
        if (seg.ctrl[:, 0] < margin - 0.5).any() or (seg.ctrl[:, 0] > w - 0.5 - margin).any() \
                or (seg.ctrl[:, 1] < margin - 0.5).any() or (seg.ctrl[:, 1] > h - 0.5 - margin).any():
            raise ValueError(f"segment {seg.id} rasterizes outside the canvas")
        arc = bezier.arc_length(seg.ctrl)
        n = max(2, int(math.ceil(arc / RASTER_STEP)) + 1)
        pts = bezier.eval_bezier(seg.ctrl, np.linspace(0.0, 1.0, n))
        stamp_disks(
            grid,
            np.ascontiguousarray(pts[:, 0]),
            np.ascontiguousarray(pts[:, 1]),
            np.full(n, float(radius)),
        )
    return VesselMask(grid)


@dataclass(frozen=True)
class RoundtripReport:
    spec: SynthSpec
    truth: SynthTruth
    recovered: object
    junction_count: int
    n_segments_fitted: int
    errors: dict

    def format(self):
        lines = [
            f"roundtrip seed={self.spec.seed} depth={self.spec.depth} canvas={self.spec.canvas}",
            f"  segments: truth={self.truth.n_segments} fitted={self.n_segments_fitted}",
            f"  branch count: truth={self.truth.branch_count} recovered={self.junction_count}",
        ]
        for name, err in self.errors.items():
            lines.append(f"  {name}: rel err {err:.4%}")
        return "\n".join(lines) + "\n"


def roundtrip_report(spec, tau_thick=3.0):
    """Generate, rasterize, re-encode, and score features against truth."""
    from vesseltree import features as features_mod
    from vesseltree import pipeline

    tree, truth = generate_tree(spec)
    mask = rasterize_tree(tree)
    result = pipeline.encode_mask(mask, provenance=tree.provenance)
    vec = features_mod.compute_features(
        result.tree, result.field, mask, result.diagnostics.junction_count,
        tau_thick=tau_thick,
    )
    errors = {
        "total_arc_length": abs(vec.total_arc_length - truth.total_arc_length)
        / truth.total_arc_length,
        "mean_tortuosity": abs(vec.mean_tortuosity - truth.mean_tortuosity)
        / truth.mean_tortuosity,
    }
    return RoundtripReport(
        spec=spec,
        truth=truth,
        recovered=vec,
        junction_count=result.diagnostics.junction_count,
        n_segments_fitted=len(result.tree),
        errors=errors,
    )


def write_ground_truth_csv(truth, path):
    """Per-segment arc/chord/tortuosity/radius table."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("segment", "arc", "chord", "tortuosity", "radius"))
        for i in range(truth.n_segments):
            writer.writerow((
                i + 1,
                repr(float(truth.arcs[i])),
                repr(float(truth.chords[i])),
                repr(float(truth.tortuosities[i])),
                repr(float(truth.radii[i])),
            ))
    return path
