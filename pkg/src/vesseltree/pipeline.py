"""Mask-to-tree encode pipeline shared by the CLI and the pixel-drop control."""

from dataclasses import dataclass

import numpy as np

from vesseltree import bezier, mask_io, skeleton

MIN_POLYLINE_POINTS = 5
# trailing windows shorter than this merge into the previous chunk so
# the fit keeps enough points to smooth pixel staircase noise
MERGE_TAIL_POINTS = 12


@dataclass(frozen=True)
class EncodeDiagnostics:
    n_polylines: int
    n_discarded_short: int
    n_degenerate_chunks: int
    n_pruned_spurs: int
    n_segments: int
    n_fallback_fits: int
    rms_mean: float
    rms_max: float
    junction_count: int
    n_endpoints: int


@dataclass(frozen=True)
class EncodeResult:
    tree: bezier.BezierTree
    field: mask_io.RadiusField
    skeleton: skeleton.Skeleton
    diagnostics: EncodeDiagnostics


def encode_mask(mask, provenance="", min_points=MIN_POLYLINE_POINTS):
    """Distance transform, skeletonize, prune, trace, chunk, and fit a mask."""
    field = mask_io.distance_transform(mask)
    skel, n_spurs = skeleton.prune_spurs(skeleton.skeletonize(mask), min_points)
    endpoints, _ = skeleton.classify_nodes(skel)
    junctions = skeleton.junction_count(skel)
    polylines = skeleton.extract_polylines(skel)

    fits = []
    curves = []
    n_short = 0
    n_degenerate = 0
    for poly in polylines:
        if len(poly) < min_points:
            n_short += 1
            continue
        pts = poly[:, ::-1].astype(np.float64)  # (row, col) -> (x, y)
        chunks = bezier.chunk_polyline(pts, min_tail=MERGE_TAIL_POINTS)
        for k, chunk in enumerate(chunks):
            try:
                fit = bezier.fit_cubic(chunk)
            except ValueError:
                n_degenerate += 1
                continue
            ctrl = fit.ctrl
            if k < len(chunks) - 1:
                # the last 4 points are retraced by the next chunk's
                # head; keep only the span this chunk owns
                t_owned = bezier.chord_parameters(chunk)[len(chunk) - bezier.CHUNK_OVERLAP]
                ctrl = bezier.snap(bezier.split_lower(ctrl, t_owned))
            fits.append(fit)
            curves.append(ctrl)

    tree = bezier.build_tree(
        curves,
        field=field,
        source_dims=(mask.width, mask.height),
        provenance=provenance,
    )
    rms = np.array([f.rms for f in fits]) if fits else np.zeros(1)
    diagnostics = EncodeDiagnostics(
        n_polylines=len(polylines),
        n_discarded_short=n_short,
        n_degenerate_chunks=n_degenerate,
        n_pruned_spurs=n_spurs,
        n_segments=len(tree),
        n_fallback_fits=sum(1 for f in fits if f.fallback),
        rms_mean=float(rms.mean()),
        rms_max=float(rms.max()),
        junction_count=junctions,
        n_endpoints=len(endpoints),
    )
    return EncodeResult(tree=tree, field=field, skeleton=skel, diagnostics=diagnostics)
