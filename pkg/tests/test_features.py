import numpy as np
import pytest

from vesseltree import features, mask_io
from vesseltree.bezier import BezierTree, TreeSegment
from vesseltree.features import (
    FEATURE_NAMES,
    FeatureVector,
    compute_features,
    read_features_csv,
    segment_metrics,
    segment_metrics_table,
    write_features_csv,
)
from vesseltree.mask_io import RadiusField, VesselMask

KAPPA = 0.5522847498307934


def _segment(ctrl, sid=1, parent=None, radius=1.0):
    return TreeSegment(id=sid, parent=parent, ctrl=np.asarray(ctrl, float), radius=radius)


def _line_setup():
    """One straight 100 px segment lying on a 1-px mask line at row 256."""
    px = np.zeros((512, 512), dtype=np.uint8)
    px[256, 200:301] = 1
    mask = VesselMask(px)
    field = mask_io.distance_transform(mask)
    seg = _segment([[200, 256], [233, 256], [266, 256], [300, 256]])
    tree = BezierTree(segments=(seg,), source_dims=(512, 512))
    return tree, field, mask


def test_feature_names_frozen():
    assert FEATURE_NAMES == (
        "total_arc_length", "n_segments", "mean_segment_length",
        "std_segment_length", "mean_chord_length", "std_chord_length",
        "mean_tortuosity", "std_tortuosity", "max_tortuosity",
        "mean_curvature", "std_curvature", "max_curvature",
        "mean_radius", "std_radius", "min_radius", "max_radius",
        "radius_cv", "thick_vessel_ratio", "branching_density",
        "coverage_ratio",
    )
    assert len(FEATURE_NAMES) == 20


def test_straight_segment_metrics():
    tree, field, _ = _line_setup()
    m = segment_metrics(tree.segments[0], field)
    assert m.tortuosity == 1.0
    assert m.mean_curvature == pytest.approx(0.0, abs=1e-12)
    assert m.mean_radius == pytest.approx(1.0)


def test_quarter_circle_tortuosity():
    r = 10.0
    ctrl = np.array([[r, 0], [r, r * KAPPA], [r * KAPPA, r], [0, r]]) + 100.0
    field = RadiusField(np.zeros((512, 512)))
    m = segment_metrics(_segment(ctrl), field)
    want = (r * np.pi / 2) / (r * np.sqrt(2))
    assert m.tortuosity == pytest.approx(want, rel=0.01)


def test_single_line_features():
    tree, field, mask = _line_setup()
    vec = compute_features(tree, field, mask, branch_count=0)
    assert vec.n_segments == 1
    assert vec.total_arc_length == pytest.approx(100.0, rel=1e-6)
    assert vec.mean_tortuosity == 1.0
    assert vec.mean_radius == pytest.approx(1.0)
    assert vec.coverage_ratio == pytest.approx(101 / 512**2)
    assert vec.branching_density == 0.0
    assert vec.std_segment_length == 0.0
    assert vec.thick_vessel_ratio == 0.0  # radius 1 < default threshold 3


def test_duplicate_segments_double_totals():
    tree, field, mask = _line_setup()
    seg = tree.segments[0]
    dup = TreeSegment(id=2, parent=None, ctrl=seg.ctrl, radius=seg.radius)
    tree2 = BezierTree(segments=(seg, dup), source_dims=(512, 512))
    one = compute_features(tree, field, mask, branch_count=0)
    two = compute_features(tree2, field, mask, branch_count=0)
    assert two.n_segments == 2 * one.n_segments
    assert two.total_arc_length == pytest.approx(2 * one.total_arc_length)
    assert two.mean_tortuosity == one.mean_tortuosity
    assert two.std_tortuosity == 0.0


def test_all_std_zero_for_identical_segments():
    tree, field, mask = _line_setup()
    seg = tree.segments[0]
    segs = tuple(
        TreeSegment(id=i + 1, parent=None, ctrl=seg.ctrl, radius=seg.radius)
        for i in range(3)
    )
    vec = compute_features(BezierTree(segments=segs, source_dims=(512, 512)),
                           field, mask, branch_count=0)
    assert vec.std_segment_length == 0.0
    assert vec.std_chord_length == 0.0
    assert vec.std_tortuosity == 0.0
    assert vec.std_curvature == 0.0
    assert vec.std_radius == 0.0
    assert vec.radius_cv == 0.0


def test_similarity_scaling():
    """Scaling geometry and canvas by k scales lengths by k, curvature and
    branching density by 1/k, and leaves tortuosity and coverage invariant."""
    from vesseltree import synth

    spec = synth.SynthSpec(seed=4, depth=2, canvas=256)
    tree, truth = synth.generate_tree(spec)
    mask = synth.rasterize_tree(tree)
    field = mask_io.distance_transform(mask)
    base = compute_features(tree, field, mask, truth.branch_count)

    scaled_segments = tuple(
        TreeSegment(id=s.id, parent=s.parent, ctrl=s.ctrl * 2.0, radius=s.radius * 2)
        for s in tree.segments
    )
    scaled_tree = BezierTree(segments=scaled_segments, source_dims=(512, 512))
    scaled_mask = synth.rasterize_tree(scaled_tree)
    scaled_field = mask_io.distance_transform(scaled_mask)
    scaled = compute_features(scaled_tree, scaled_field, scaled_mask, truth.branch_count)

    assert scaled.total_arc_length == pytest.approx(2 * base.total_arc_length, rel=1e-6)
    assert scaled.mean_chord_length == pytest.approx(2 * base.mean_chord_length, rel=1e-6)
    assert scaled.mean_tortuosity == pytest.approx(base.mean_tortuosity, rel=1e-6)
    assert scaled.mean_curvature == pytest.approx(base.mean_curvature / 2, rel=1e-6)
    assert scaled.branching_density == pytest.approx(base.branching_density / 2, rel=1e-6)
    # radius features come from the rasterized field: pixel-quantized,
    # so scaling holds only loosely
    assert scaled.mean_radius == pytest.approx(2 * base.mean_radius, rel=0.2)
    assert scaled.coverage_ratio == pytest.approx(base.coverage_ratio, rel=0.1)


def test_degenerate_segments_excluded():
    tree, field, mask = _line_setup()
    rows, excluded = segment_metrics_table(tree, field)
    assert excluded == 0 and len(rows) == 1


def test_empty_tree_rejected():
    _, field, mask = _line_setup()
    with pytest.raises(ValueError):
        compute_features(BezierTree(segments=()), field, mask, branch_count=0)


def test_tau_thick():
    tree, field, mask = _line_setup()
    vec = compute_features(tree, field, mask, branch_count=0, tau_thick=0.5)
    assert vec.thick_vessel_ratio == 1.0


class TestCsv:
    def _vec(self):
        tree, field, mask = _line_setup()
        return compute_features(tree, field, mask, branch_count=0)

    def test_empty_rows(self, tmp_path):
        path = write_features_csv([], tmp_path / "f.csv")
        assert path.read_text().count("\n") == 1
        assert read_features_csv(path) == []

    def test_two_rows_roundtrip(self, tmp_path):
        vec = self._vec()
        path = write_features_csv(
            [("img1", vec, 0), ("img2", vec, 1)], tmp_path / "f.csv")
        assert len(path.read_text().splitlines()) == 3
        rows = read_features_csv(path)
        assert [r[0] for r in rows] == ["img1", "img2"]
        assert [r[2] for r in rows] == [0, 1]
        assert np.allclose(rows[0][1].as_array(), vec.as_array())

    def test_duplicate_ids_rejected(self, tmp_path):
        vec = self._vec()
        with pytest.raises(ValueError):
            write_features_csv([("a", vec, 0), ("a", vec, 1)], tmp_path / "f.csv")

    def test_nonfinite_rejected(self, tmp_path):
        vec = self._vec()
        bad = FeatureVector.__new__(FeatureVector)
        for name in FEATURE_NAMES:
            object.__setattr__(bad, name, getattr(vec, name))
        object.__setattr__(bad, "mean_radius", float("nan"))
        with pytest.raises(ValueError, match="imgX"):
            write_features_csv([("imgX", bad, 0)], tmp_path / "f.csv")


def test_invariant_validation():
    with pytest.raises(ValueError):
        FeatureVector(**{**{n: 1.0 for n in FEATURE_NAMES},
                         "mean_tortuosity": 0.5, "radius_cv": 1.0})
    with pytest.raises(ValueError):
        FeatureVector(**{**{n: 1.0 for n in FEATURE_NAMES},
                         "coverage_ratio": 1.5, "radius_cv": 1.0})
