import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vesseltree import bezier
from vesseltree.bezier import (
    BezierTree,
    TreeSegment,
    arc_length,
    chunk_polyline,
    curvature,
    eval_bezier,
    fit_cubic,
    link_parents,
    parse_bte,
    polyline_arc_length,
    snap,
    split_upper,
    write_bte,
)
from vesseltree.errors import BteParseError
from vesseltree.mask_io import RadiusField

KAPPA = 0.5522847498307934


def quarter_circle(radius=10.0):
    """Standard cubic approximation of a quarter circle."""
    return np.array([
        [radius, 0.0],
        [radius, radius * KAPPA],
        [radius * KAPPA, radius],
        [0.0, radius],
    ])


def straight(n=4):
    return np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])


class TestChunking:
    def test_exact_30(self):
        pts = np.arange(60).reshape(30, 2)
        chunks = chunk_polyline(pts)
        assert len(chunks) == 1 and len(chunks[0]) == 30

    def test_56_points(self):
        pts = np.stack([np.arange(56), np.zeros(56)], axis=1)
        chunks = chunk_polyline(pts)
        assert [len(c) for c in chunks] == [30, 30]
        assert chunks[0][0, 0] == 0 and chunks[0][-1, 0] == 29
        assert chunks[1][0, 0] == 26 and chunks[1][-1, 0] == 55

    def test_33_points(self):
        pts = np.stack([np.arange(33), np.zeros(33)], axis=1)
        chunks = chunk_polyline(pts)
        assert [len(c) for c in chunks] == [30, 7]
        assert chunks[1][0, 0] == 26 and chunks[1][-1, 0] == 32

    def test_short_remainder_absorbed(self):
        pts = np.stack([np.arange(30 + 26), np.zeros(56)], axis=1)
        assert len(chunk_polyline(pts)) == 2

    @given(st.integers(5, 200))
    @settings(max_examples=60, deadline=None)
    def test_overlap_and_coverage(self, n):
        pts = np.stack([np.arange(n), np.zeros(n)], axis=1)
        chunks = chunk_polyline(pts)
        assert chunks[0][0, 0] == 0
        assert chunks[-1][-1, 0] == n - 1
        for a, b in zip(chunks, chunks[1:]):
            # adjacent chunks share exactly 4 points
            assert a[-1, 0] == b[0, 0] + 3
            assert len(b) >= 5

    def test_too_short(self):
        with pytest.raises(ValueError):
            chunk_polyline(np.zeros((4, 2)))

    def test_min_tail_merges_short_remainder(self):
        pts = np.stack([np.arange(37), np.zeros(37)], axis=1)
        assert [len(c) for c in chunk_polyline(pts)] == [30, 11]
        merged = chunk_polyline(pts, min_tail=12)
        assert [len(c) for c in merged] == [37]
        assert merged[0][0, 0] == 0 and merged[0][-1, 0] == 36
        # long remainders stay standalone at the raised threshold
        pts = np.stack([np.arange(40), np.zeros(40)], axis=1)
        assert [len(c) for c in chunk_polyline(pts, min_tail=12)] == [30, 14]

    def test_min_tail_validation(self):
        pts = np.stack([np.arange(30), np.zeros(30)], axis=1)
        with pytest.raises(ValueError):
            chunk_polyline(pts, min_tail=3)


class TestEval:
    def test_endpoints(self):
        c = quarter_circle()
        assert np.allclose(eval_bezier(c, 0.0), c[0])
        assert np.allclose(eval_bezier(c, 1.0), c[3])

    def test_midpoint_identity(self):
        c = quarter_circle()
        want = (c[0] + 3 * c[1] + 3 * c[2] + c[3]) / 8.0
        assert np.allclose(eval_bezier(c, 0.5), want, atol=1e-12)

    def test_partition_of_unity(self):
        c = np.tile([3.5, -2.0], (4, 1))
        t = np.linspace(0, 1, 11)
        assert np.allclose(eval_bezier(c, t), np.tile([3.5, -2.0], (11, 1)))

    def test_t_out_of_range(self):
        with pytest.raises(ValueError):
            eval_bezier(quarter_circle(), 1.2)


class TestArcLength:
    def test_straight(self):
        assert arc_length(straight()) == pytest.approx(3.0, abs=1e-12)

    def test_degenerate(self):
        c = np.tile([1.0, 1.0], (4, 1))
        assert arc_length(c) == pytest.approx(0.0, abs=1e-12)

    def test_quarter_circle(self):
        got = arc_length(quarter_circle(10.0))
        assert got == pytest.approx(10 * np.pi / 2, rel=1e-3)
        oracle = polyline_arc_length(quarter_circle(10.0))
        assert got == pytest.approx(oracle, rel=1e-6)

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_quadrature_matches_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ctrl = rng.uniform(0, 200, (4, 2))
        if np.linalg.norm(ctrl[3] - ctrl[0]) < 1.0:
            return
        got = arc_length(ctrl)
        want = polyline_arc_length(ctrl)
        assert got == pytest.approx(want, rel=1e-5)
        assert got >= np.linalg.norm(ctrl[3] - ctrl[0]) - 1e-9


class TestCurvature:
    def test_straight_zero(self):
        k = curvature(straight(), np.linspace(0, 1, 9))
        assert np.allclose(k, 0.0)

    def test_quarter_circle_mid(self):
        assert curvature(quarter_circle(10.0), 0.5) == pytest.approx(0.1, rel=0.02)

    def test_scaling_halves(self):
        c = quarter_circle(10.0)
        t = np.linspace(0.1, 0.9, 7)
        assert np.allclose(curvature(2 * c, t), curvature(c, t) / 2.0, rtol=1e-9)

    def test_vanishing_derivative_flagged(self):
        c = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        assert np.isnan(curvature(c, 0.0))


class TestFit:
    def test_collinear(self):
        pts = np.stack([np.linspace(0, 29, 30), np.zeros(30)], axis=1)
        fit = fit_cubic(pts)
        t = np.linspace(0, 1, 50)
        out = eval_bezier(fit.ctrl, t)
        assert np.abs(out[:, 1]).max() < 1e-6
        assert not fit.fallback

    def test_endpoints_clamped(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            pts = np.cumsum(rng.uniform(0.3, 1.0, (12, 2)), axis=0)
            fit = fit_cubic(pts)
            assert np.allclose(fit.ctrl[0], snap(pts[0]), atol=1e-9)
            assert np.allclose(fit.ctrl[3], snap(pts[-1]), atol=1e-9)

    def test_known_cubic_recovery_at_own_parameters(self):
        # sample a known cubic at its arc-length parameters and hand the
        # fitter those parameters: the normal equations then have the
        # original control points as their unique solution
        rng = np.random.default_rng(7)
        for _ in range(10):
            p0 = rng.uniform(50, 450, 2)
            d = rng.normal(size=2)
            d /= np.linalg.norm(d)
            n = np.array([-d[1], d[0]])
            length = rng.uniform(30, 120)
            ctrl = snap(np.stack([
                p0,
                p0 + d * length * 0.3 + n * length * rng.uniform(-0.15, 0.15),
                p0 + d * length * 0.7 + n * length * rng.uniform(-0.15, 0.15),
                p0 + d * length,
            ]))
            dense = np.linspace(0, 1, 100_001)
            pts_dense = eval_bezier(ctrl, dense)
            cum = np.concatenate([[0.0], np.cumsum(
                np.linalg.norm(np.diff(pts_dense, axis=0), axis=1))])
            cum /= cum[-1]
            params = np.interp(np.linspace(0, 1, 30), cum, dense)
            fit = fit_cubic(eval_bezier(ctrl, params), params=params)
            assert np.abs(fit.ctrl - ctrl).max() < 1e-6

    def test_fit_idempotent_on_own_samples(self):
        pts = np.stack([np.linspace(0, 40, 25), np.sin(np.linspace(0, 2, 25)) * 4], axis=1)
        first = fit_cubic(pts)
        t = bezier.chord_parameters(pts)
        again = fit_cubic(eval_bezier(first.ctrl, t), params=t)
        assert np.abs(again.ctrl - first.ctrl).max() < 1e-6

    def test_degenerate_chord(self):
        pts = np.zeros((6, 2))
        with pytest.raises(ValueError):
            fit_cubic(pts)

    def test_singular_falls_back(self):
        # all interior parameters identical makes the system singular
        pts = np.array([[0, 0], [1, 0], [1, 0], [1, 0], [1, 0], [2, 0]], dtype=float)
        params = np.array([0.0, 0.5, 0.5, 0.5, 0.5, 1.0])
        fit = fit_cubic(pts, params=params)
        assert fit.fallback
        assert np.allclose(fit.ctrl[1], [2 / 3, 0], atol=1e-6)


class TestSplit:
    def test_upper_split_matches_curve(self):
        c = quarter_circle(20.0)
        t0 = 0.3
        upper = split_upper(c, t0)
        for u in np.linspace(0, 1, 9):
            want = eval_bezier(c, t0 + (1 - t0) * u)
            assert np.allclose(eval_bezier(upper, u), want, atol=1e-9)

    def test_arc_additivity(self):
        c = quarter_circle(20.0)
        upper = split_upper(c, 0.4)
        lower = split_upper(c[::-1], 0.6)  # reversed curve, complementary piece
        assert arc_length(upper) + arc_length(lower) == pytest.approx(
            arc_length(c), rel=1e-9)


class TestTree:
    def _seg(self, sid, x0, parent=None):
        ctrl = np.array([[x0, 0.0], [x0 + 1, 0.0], [x0 + 2, 0.0], [x0 + 3, 0.0]])
        return TreeSegment(id=sid, parent=parent, ctrl=ctrl, radius=1.0)

    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValueError):
            BezierTree(segments=(self._seg(1, 0), self._seg(1, 10)))

    def test_dangling_parent_rejected(self):
        with pytest.raises(ValueError):
            BezierTree(segments=(self._seg(1, 0, parent=99),))

    def test_cycle_rejected(self):
        a = self._seg(1, 0, parent=2)
        b = self._seg(2, 10, parent=1)
        with pytest.raises(ValueError):
            BezierTree(segments=(a, b))

    def test_degenerate_chord_rejected(self):
        ctrl = np.tile([1.0, 1.0], (4, 1))
        with pytest.raises(ValueError):
            TreeSegment(id=1, parent=None, ctrl=ctrl, radius=0.5)

    def test_link_parents_chain(self):
        a = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
        b = a + [3.2, 0.0]   # P0 within 1.5 px of a's P3
        c = a + [40.0, 0.0]  # far away
        assert link_parents([a, b, c]) == [None, 0, None]

    def test_link_parents_nearest_wins_ties_to_lower_id(self):
        a = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], dtype=float)
        b = np.array([[6, 0], [5, 0], [4, 0], [3, 0]], dtype=float)  # P3 == a's P3
        child = np.array([[3, 0], [4, 1], [5, 1], [6, 2]], dtype=float)
        assert link_parents([a, b, child])[2] == 0

    def test_mean_radius_sampling(self):
        field = RadiusField(np.full((8, 8), 2.5))
        ctrl = np.array([[1, 4], [3, 4], [4, 4], [6, 4]], dtype=float)
        assert bezier.sample_mean_radius(ctrl, field.values) == pytest.approx(2.5)


class TestBteFormat:
    def _tree(self, n=3):
        rng = np.random.default_rng(42)
        segments = []
        for i in range(n):
            base = rng.uniform(10, 400, 2)
            ctrl = snap(base + np.cumsum(rng.uniform(0.5, 5, (4, 2)), axis=0))
            segments.append(TreeSegment(
                id=i + 1,
                parent=None if i == 0 else i,
                ctrl=ctrl,
                radius=float(rng.uniform(0.5, 4)),
            ))
        return BezierTree(segments=tuple(segments), source_dims=(512, 512),
                          provenance="fixture")

    def test_empty_tree_roundtrip(self, tmp_path):
        tree = BezierTree(segments=())
        path = write_bte(tree, tmp_path / "empty.bte")
        again = parse_bte(path)
        assert len(again) == 0

    def test_single_segment_roundtrip(self, tmp_path):
        tree = self._tree(1)
        again = parse_bte(write_bte(tree, tmp_path / "one.bte"))
        assert len(again) == 1
        assert again.segments[0].parent is None
        assert (tmp_path / "one.bte").read_text().splitlines()[0] == "BTE 1"

    @pytest.mark.parametrize("seed", range(5))
    def test_random_tree_roundtrip(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        segments = []
        for i in range(int(rng.integers(2, 30))):
            ctrl = snap(rng.uniform(0, 511, (4, 2)))
            while np.linalg.norm(ctrl[3] - ctrl[0]) < 1e-3:
                ctrl = snap(rng.uniform(0, 511, (4, 2)))
            parent = None if i == 0 else int(rng.integers(1, i + 1))
            segments.append(TreeSegment(id=i + 1, parent=parent, ctrl=ctrl,
                                        radius=float(rng.uniform(0, 8))))
        tree = BezierTree(segments=tuple(segments), source_dims=(512, 512),
                          provenance=f"seed{seed}")
        again = parse_bte(write_bte(tree, tmp_path / "t.bte"))
        assert len(again) == len(tree)
        assert again.source_dims == tree.source_dims
        assert again.provenance == tree.provenance
        for a, b in zip(tree.segments, again.segments):
            assert a.id == b.id and a.parent == b.parent
            assert np.abs(a.ctrl - b.ctrl).max() <= 1e-6
            assert abs(a.radius - b.radius) <= 1e-6

    def test_write_parse_write_stable(self, tmp_path):
        tree = self._tree(5)
        p1 = write_bte(tree, tmp_path / "a.bte")
        p2 = write_bte(parse_bte(p1), tmp_path / "b.bte")
        assert p1.read_text() == p2.read_text()

    @pytest.mark.parametrize("content,line", [
        ("", 1),
        ("BTX 1\n", 1),
        ("BTE 2\n", 1),
        ("BTE 1\n1 -1 0 0 1 1 2 2 3\n", 2),                       # 9 fields
        ("BTE 1\n1 -1 0 0 1 1 2 2 3 3 1 9\n", 2),                 # 12 fields
        ("BTE 1\n1 -1 a 0 1 1 2 2 3 3 1\n", 2),                   # non-numeric
        ("BTE 1\n1 x 0 0 1 1 2 2 3 3 1\n", 2),                    # bad parent
        ("BTE 1\n0 -1 0 0 1 1 2 2 3 3 1\n", 2),                   # id 0
        ("BTE 1\n1 7 0 0 1 1 2 2 3 3 1\n", 2),                    # dangling parent
        ("BTE 1\n1 -1 0 0 1 1 2 2 3 3 1\n1 -1 5 5 6 6 7 7 8 8 1\n", 3),  # dup id
        ("BTE 1\n1 -1 0 0 1 1 2 2 0 0 1\n", 2),                   # degenerate chord
        ("BTE 1\n# ok comment\n2 9 0 0 1 1 2 2 3 3 1\n", 3),      # dangling, later line
        ("BTE 1\n# dims x y\n", 2),                               # bad dims comment
        ("BTE 1\n# dims 0 512\n", 2),                             # non-positive dims
    ])
    def test_malformed_files(self, tmp_path, content, line):
        path = tmp_path / "bad.bte"
        path.write_text(content)
        with pytest.raises(BteParseError) as err:
            parse_bte(path)
        assert err.value.line == line
