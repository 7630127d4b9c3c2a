"""The 20-dimensional geometric feature vector.

Aggregation is segment-native: mean/std features are population
statistics over per-segment values, min/max features range over the
per-segment means. thick_vessel_ratio pools every radius sample across
segments against a caliber threshold (default 3 px at 512x512).
"""

import csv
import math
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from vesseltree import bezier

FEATURE_NAMES = (
    "total_arc_length",
    "n_segments",
    "mean_segment_length",
    "std_segment_length",
    "mean_chord_length",
    "std_chord_length",
    "mean_tortuosity",
    "std_tortuosity",
    "max_tortuosity",
    "mean_curvature",
    "std_curvature",
    "max_curvature",
    "mean_radius",
    "std_radius",
    "min_radius",
    "max_radius",
    "radius_cv",
    "thick_vessel_ratio",
    "branching_density",
    "coverage_ratio",
)

CURVATURE_SAMPLES = 50
DEFAULT_THICK_THRESHOLD_PX = 3.0


@dataclass(frozen=True)
class FeatureVector:
    total_arc_length: float
    n_segments: float
    mean_segment_length: float
    std_segment_length: float
    mean_chord_length: float
    std_chord_length: float
    mean_tortuosity: float
    std_tortuosity: float
    max_tortuosity: float
    mean_curvature: float
    std_curvature: float
    max_curvature: float
    mean_radius: float
    std_radius: float
    min_radius: float
    max_radius: float
    radius_cv: float
    thick_vessel_ratio: float
    branching_density: float
    coverage_ratio: float

    def __post_init__(self):
        self.validate()

    def validate(self):
        vals = self.as_dict()
        for name, v in vals.items():
            if not math.isfinite(v):
                raise ValueError(f"feature {name} is not finite: {v}")
        for name in ("mean_tortuosity", "max_tortuosity"):
            if vals[name] < 1.0:
                raise ValueError(f"{name} must be >= 1, got {vals[name]}")
        for name in ("thick_vessel_ratio", "coverage_ratio"):
            if not 0.0 <= vals[name] <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {vals[name]}")
        if vals["mean_radius"] > 0:
            expect = vals["std_radius"] / vals["mean_radius"]
            if abs(vals["radius_cv"] - expect) > 1e-9:
                raise ValueError("radius_cv inconsistent with std_radius/mean_radius")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in dataclass_fields(self)}

    def as_array(self):
        return np.array([getattr(self, n) for n in FEATURE_NAMES], dtype=np.float64)


@dataclass(frozen=True)
class SegmentMetrics:
    segment_id: int
    arc: float
    chord: float
    tortuosity: float
    mean_curvature: float
    mean_radius: float
    radius_samples: np.ndarray


def segment_metrics(seg, field):
    """Per-segment geometry record, or None for a degenerate chord.

    Curvature averages 50 uniform parameter samples, dropping any with
    a vanishing first derivative; radius averages 20 nearest-pixel
    field lookups along the curve.
    """
    chord = bezier.chord_length(seg.ctrl)
    if chord < 1e-6:
        return None
    arc = bezier.arc_length(seg.ctrl)
    tortuosity = arc / chord
    if abs(tortuosity - 1.0) < 1e-9:
        tortuosity = 1.0  # quadrature noise around exactly-straight segments
    kappa = bezier.curvature(seg.ctrl, np.linspace(0.0, 1.0, CURVATURE_SAMPLES))
    valid = np.isfinite(kappa)
    if not valid.any():
        return None
    h, w = field.values.shape
    pts = bezier.eval_bezier(seg.ctrl, np.linspace(0.0, 1.0, bezier.RADIUS_SAMPLES))
    ix = np.clip(np.floor(pts[:, 0] + 0.5).astype(np.int64), 0, w - 1)
    iy = np.clip(np.floor(pts[:, 1] + 0.5).astype(np.int64), 0, h - 1)
    radii = field.values[iy, ix]
    return SegmentMetrics(
        segment_id=seg.id,
        arc=arc,
        chord=chord,
        tortuosity=tortuosity,
        mean_curvature=float(kappa[valid].mean()),
        mean_radius=float(radii.mean()),
        radius_samples=radii,
    )


def segment_metrics_table(tree, field):
    """Metrics for every usable segment plus the excluded-segment tally."""
    rows = []
    excluded = 0
    for seg in tree.segments:
        m = segment_metrics(seg, field)
        if m is None:
            excluded += 1
        else:
            rows.append(m)
    return rows, excluded


def compute_features(tree, field, mask, branch_count,
                     tau_thick=DEFAULT_THICK_THRESHOLD_PX):
    """Aggregate per-segment metrics into the 20-feature vector."""
    if len(tree) == 0:
        raise ValueError("cannot compute features of an empty tree")
    rows, _ = segment_metrics_table(tree, field)
    if not rows:
        raise ValueError("no usable segments after excluding degenerate chords")
    arc = np.array([m.arc for m in rows])
    chord = np.array([m.chord for m in rows])
    tort = np.array([m.tortuosity for m in rows])
    curv = np.array([m.mean_curvature for m in rows])
    rad = np.array([m.mean_radius for m in rows])
    all_radius_samples = np.concatenate([m.radius_samples for m in rows])

    total_arc = float(arc.sum())
    mean_radius = float(rad.mean())
    std_radius = float(rad.std())
    coverage = mask.foreground_count / float(mask.pixels.size)
    return FeatureVector(
        total_arc_length=total_arc,
        n_segments=float(len(rows)),
        mean_segment_length=float(arc.mean()),
        std_segment_length=float(arc.std()),
        mean_chord_length=float(chord.mean()),
        std_chord_length=float(chord.std()),
        mean_tortuosity=float(tort.mean()),
        std_tortuosity=float(tort.std()),
        max_tortuosity=float(tort.max()),
        mean_curvature=float(curv.mean()),
        std_curvature=float(curv.std()),
        max_curvature=float(curv.max()),
        mean_radius=mean_radius,
        std_radius=std_radius,
        min_radius=float(rad.min()),
        max_radius=float(rad.max()),
        radius_cv=std_radius / mean_radius if mean_radius > 0 else 0.0,
        thick_vessel_ratio=float((all_radius_samples >= tau_thick).mean()),
        branching_density=branch_count / total_arc,
        coverage_ratio=coverage,
    )


def write_features_csv(rows, path):
    """Write (image_id, FeatureVector, label) rows; column order is frozen."""
    seen = set()
    for image_id, vec, _ in rows:
        if image_id in seen:
            raise ValueError(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        try:
            vec.validate()
        except ValueError as exc:
            raise ValueError(f"image {image_id!r}: {exc}") from exc
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", *FEATURE_NAMES, "label"))
        for image_id, vec, label in rows:
            writer.writerow(
                (image_id, *(repr(float(v)) for v in vec.as_array()), label)
            )
    return path


def read_features_csv(path):
    """Read rows written by write_features_csv back as
    (image_id, FeatureVector, label) tuples."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(row for row in fh if not row.startswith("#"))
        header = next(reader, None)
        if header is None:
            raise ValueError("empty features CSV")
        expected = ["id", *FEATURE_NAMES, "label"]
        if header != expected:
            raise ValueError(f"unexpected features CSV header: {header}")
        out = []
        for row in reader:
            if not row:
                continue
            image_id = row[0]
            values = {n: float(v) for n, v in zip(FEATURE_NAMES, row[1:-1])}
            out.append((image_id, FeatureVector(**values), int(row[-1])))
    return out
