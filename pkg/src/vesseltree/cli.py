"""Batch command-line entry point.

Subcommands: encode, features, perturb, hint, score, obs, dedupe,
synth, roundtrip. All outputs are deterministic functions of the
inputs and the seed; text artifacts carry a provenance comment (tool
version, seed, config hash) and every file is written atomically via a
same-directory temp file and rename.

Exit codes: 0 success, 1 at least one item failed, 2 configuration
error.
"""

import argparse
import concurrent.futures
import hashlib
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

import vesseltree
from vesseltree import bezier, cfstats, features, hint, mask_io, perturb, pipeline, skeleton, synth
from vesseltree.errors import ConfigError, VesselTreeError

_IMAGE_SUFFIXES = (".png", ".pgm")


def _provenance(seed, args_repr):
    digest = hashlib.sha256(args_repr.encode("utf-8")).hexdigest()[:12]
    return f"vesseltree {vesseltree.__version__} seed={seed} config={digest}"


def _atomic_write_text(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_file(path, writer):
    """Run ``writer(tmp_path)`` then rename the result into place.

    The temp name keeps the real extension so format-sniffing writers
    (Pillow) still work.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".",
                               suffix=".tmp" + path.suffix)
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_config_file(path):
    """Plain-text key=value defaults, overridable by flags."""
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _require_files(*paths):
    """Input paths are validated before any work starts."""
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise ConfigError(f"input {p} does not exist")


def _collect_masks(input_path):
    p = Path(input_path)
    if p.is_dir():
        items = sorted(q for q in p.iterdir() if q.suffix.lower() in _IMAGE_SUFFIXES)
        if not items:
            raise ConfigError(f"no mask images in {p}")
        return items
    if not p.exists():
        raise ConfigError(f"input {p} does not exist")
    return [p]


def _encode_one(mask_path, out_dir, seed, min_points, resample, prov):
    mask = mask_io.load_mask(mask_path)
    if resample:
        mask = mask_io.resample_to_working(mask)
    result = pipeline.encode_mask(mask, provenance=Path(mask_path).stem,
                                  min_points=min_points)
    out = Path(out_dir) / (Path(mask_path).stem + ".bte")
    _atomic_file(out, lambda tmp: bezier.write_bte(result.tree, tmp, extra_comments=[prov]))
    d = result.diagnostics
    return (
        f"{Path(mask_path).name}: {d.n_segments} segments, "
        f"{d.n_polylines} polylines ({d.n_discarded_short} short discarded), "
        f"rms mean {d.rms_mean:.3f} max {d.rms_max:.3f}, "
        f"{d.junction_count} junctions"
    )


def _cmd_encode(args):
    prov = _provenance(args.seed, f"encode:{args.min_points}:{args.resample}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    items = _collect_masks(args.input)
    failures = 0
    lines = []
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = {
                pool.submit(_encode_one, str(p), str(out_dir), args.seed,
                            args.min_points, args.resample, prov): p
                for p in items
            }
            results = {}
            for fut, p in futures.items():
                try:
                    results[p] = fut.result()
                except (VesselTreeError, OSError, ValueError) as exc:
                    results[p] = None
                    print(f"error: {p}: {exc}", file=sys.stderr)
                    failures += 1
            lines = [results[p] for p in items if results[p]]
    else:
        for p in items:
            try:
                lines.append(_encode_one(str(p), str(out_dir), args.seed,
                                         args.min_points, args.resample, prov))
            except (VesselTreeError, OSError, ValueError) as exc:
                print(f"error: {p}: {exc}", file=sys.stderr)
                failures += 1
    for line in lines:
        print(line)
    print(f"encoded {len(items) - failures}/{len(items)} masks -> {out_dir}")
    return 1 if failures else 0


def _load_pair(bte_path, mask_path, resample):
    tree = bezier.parse_bte(bte_path)
    mask = mask_io.load_mask(mask_path)
    if resample:
        mask = mask_io.resample_to_working(mask)
    field = mask_io.distance_transform(mask)
    return tree, field, mask


def _cmd_features(args):
    _require_files(args.bte, args.mask)
    tree, field, mask = _load_pair(args.bte, args.mask, args.resample)
    junctions = skeleton.junction_count(skeleton.skeletonize(mask))
    vec = features.compute_features(tree, field, mask, junctions,
                                    tau_thick=args.tau_thick)
    image_id = args.id or Path(args.bte).stem
    _atomic_file(args.out, lambda tmp: features.write_features_csv(
        [(image_id, vec, args.label)], tmp))
    print(f"features for {image_id} -> {args.out}")
    return 0


def _cmd_perturb(args):
    _require_files(args.bte, args.mask)
    config = perturb.PerturbationConfig(
        family=args.family,
        strength=args.strength,
        gamma=args.gamma,
        seed=args.seed,
    )
    tree, field, mask = _load_pair(args.bte, args.mask, args.resample)
    new_tree, _, new_mask = perturb.apply(config, tree, field, mask)
    prov = _provenance(args.seed, f"perturb:{config.name}")
    _atomic_file(args.out_bte, lambda tmp: bezier.write_bte(
        new_tree, tmp, extra_comments=[prov, f"config {config.name}"]))
    print(f"{config.name} -> {args.out_bte}")
    if args.out_mask:
        _atomic_file(args.out_mask, lambda tmp: mask_io.write_mask(new_mask, Path(tmp)))
        print(f"mask -> {args.out_mask}")
    return 0


def _hint_one(bte_path, mask_path, config_name, seed, gamma, out_dir, preview, resample, prov):
    tree, field, mask = _load_pair(bte_path, mask_path, resample)
    config = perturb.PerturbationConfig.from_name(config_name, seed=seed, gamma=gamma)
    p_tree, p_field, _ = perturb.apply(config, tree, field, mask)
    img = hint.make_hint(p_tree, p_field)
    start = Path(bte_path).stem
    out = Path(out_dir) / f"{start}_{config_name}.btef"
    meta = {"provenance": prov, "config": config_name, "seed": seed, "start": start}
    _atomic_file(out, lambda tmp: hint.write_btef(img, tmp, metadata=meta))
    if preview:
        png = Path(out_dir) / f"{start}_{config_name}.png"
        _atomic_file(png, lambda tmp: hint.write_hint_png(img, Path(tmp)))
    return out


def _cmd_hint(args):
    _require_files(args.bte, args.mask)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.grid:
        names = list(perturb.CONFIG_NAMES)
    elif args.config_name:
        names = [args.config_name]
    else:
        raise ConfigError("pass --config NAME or --grid")
    prov = _provenance(args.seed, f"hint:{','.join(names)}")
    jobs = [(str(args.bte), str(args.mask), name, args.seed, args.gamma,
             str(out_dir), args.preview, args.resample, prov) for name in names]
    failures = 0
    if args.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            futs = [pool.submit(_hint_one, *job) for job in jobs]
            for fut, job in zip(futs, jobs):
                try:
                    print(f"wrote {fut.result()}")
                except (VesselTreeError, OSError, ValueError) as exc:
                    print(f"error: {job[2]}: {exc}", file=sys.stderr)
                    failures += 1
    else:
        for job in jobs:
            try:
                print(f"wrote {_hint_one(*job)}")
            except (VesselTreeError, OSError, ValueError) as exc:
                print(f"error: {job[2]}: {exc}", file=sys.stderr)
                failures += 1
    return 1 if failures else 0


def _cmd_score(args):
    _require_files(args.scores)
    table = cfstats.ScoreTable.from_csv(args.scores)
    if args.strict:
        keep = cfstats.strict_subset(table, threshold=args.threshold)
        table = table.restrict_to(keep)
        print(f"strict subset: {len(keep)} starts")
    wanted = None
    if args.configs:
        wanted = {c.strip() for c in args.configs.split(",") if c.strip()}
        unknown = wanted - set(perturb.CONFIG_NAMES)
        if unknown:
            raise ConfigError(f"unknown configs: {sorted(unknown)}")
    effects = {}
    for name in table.configs:
        if name == cfstats.BASELINE or (wanted and name not in wanted):
            continue
        try:
            effects[name] = cfstats.paired_delta(table, name)
        except ValueError as exc:
            print(f"warning: {exc}", file=sys.stderr)
    base = table.by_config(cfstats.BASELINE)
    if base:
        effects[cfstats.BASELINE] = cfstats.PairedEffect(
            config=cfstats.BASELINE, n=len(base), delta_mean=0.0, sem=0.0,
            ci_low=0.0, ci_high=0.0, p_value=1.0)
    csv_text, aligned = cfstats.emit_causal_table(effects)
    prov = _provenance(args.seed, "score")
    _atomic_write_text(f"{args.out_prefix}.csv", csv_text)
    _atomic_write_text(f"{args.out_prefix}.txt", f"# {prov}\n" + aligned)
    print(aligned, end="")
    return 0


def _cmd_obs(args):
    _require_files(args.features)
    rows = features.read_features_csv(args.features)
    if not rows:
        raise ConfigError("features CSV holds no rows")
    labels = np.array([label for _, _, label in rows])
    columns = {
        name: np.array([vec.as_dict()[name] for _, vec, _ in rows])
        for name in features.FEATURE_NAMES
    }
    csv_text, aligned = cfstats.observational_report(columns, labels)
    prov = _provenance(args.seed, "obs")
    _atomic_write_text(f"{args.out_prefix}.csv", csv_text)
    _atomic_write_text(f"{args.out_prefix}.txt", f"# {prov}\n" + aligned)
    print(aligned, end="")
    return 0


def _cmd_dedupe(args):
    _require_files(args.cohort)
    rows = cfstats.read_cohort_csv(args.cohort)
    kept, report = cfstats.dedupe_cohort(rows)
    _atomic_file(args.out, lambda tmp: cfstats.write_cohort_csv(kept, tmp))
    lines = [f"{k}: {v}" for k, v in report.items()]
    text = "\n".join(lines) + "\n"
    if args.report:
        prov = _provenance(args.seed, "dedupe")
        _atomic_write_text(args.report, f"# {prov}\n" + text)
    print(text, end="")
    return 0


def _cmd_synth(args):
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    prov = _provenance(args.seed, f"synth:{args.depth}:{args.count}")
    failures = 0
    for i in range(args.count):
        seed = args.seed + i
        spec = synth.SynthSpec(
            seed=seed, depth=args.depth, n_branches=args.branches,
            root_radius=args.root_radius, radius_decay=args.radius_decay,
            canvas=args.canvas,
        )
        try:
            tree, truth = synth.generate_tree(spec)
            mask = synth.rasterize_tree(tree)
        except ValueError as exc:
            print(f"error: seed {seed}: {exc}", file=sys.stderr)
            failures += 1
            continue
        stem = f"synth_{seed:06d}"
        _atomic_file(out_dir / f"{stem}.png",
                     lambda tmp: mask_io.write_mask(mask, Path(tmp)))
        _atomic_file(out_dir / f"{stem}.bte",
                     lambda tmp: bezier.write_bte(tree, tmp, extra_comments=[prov]))
        _atomic_file(out_dir / f"{stem}_truth.csv",
                     lambda tmp: synth.write_ground_truth_csv(truth, tmp))
        print(f"{stem}: {truth.n_segments} segments, {truth.branch_count} branch nodes")
    return 1 if failures else 0


def _cmd_roundtrip(args):
    spec = synth.SynthSpec(
        seed=args.seed, depth=args.depth, n_branches=args.branches,
        root_radius=args.root_radius, radius_decay=args.radius_decay,
        canvas=args.canvas,
    )
    report = synth.roundtrip_report(spec)
    text = report.format()
    if args.out:
        prov = _provenance(args.seed, "roundtrip")
        _atomic_write_text(args.out, f"# {prov}\n" + text)
    print(text, end="")
    return 0


def _add_common(p, with_seed=True):
    p.add_argument("--config", dest="config_file", default=None,
                   help="key=value config file supplying flag defaults")
    if with_seed:
        p.add_argument("--seed", type=int, default=0, help="deterministic run seed")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vesseltree",
        description="Bezier vessel-tree encoding, perturbation, hints, and score statistics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="fit BTE trees from mask images")
    _add_common(p)
    p.add_argument("--input", required=True, help="mask image or directory")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-points", type=int, default=pipeline.MIN_POLYLINE_POINTS,
                   help="discard polylines shorter than this many pixels")
    p.add_argument("--resample", action="store_true",
                   help="resample masks to the 512px working resolution first")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("features", help="compute the 20-feature vector for a BTE+mask pair")
    _add_common(p)
    p.add_argument("--bte", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--id", default=None, help="image id for the CSV row")
    p.add_argument("--label", type=int, default=0)
    p.add_argument("--tau-thick", type=float, default=features.DEFAULT_THICK_THRESHOLD_PX)
    p.add_argument("--resample", action="store_true")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("perturb", help="apply one perturbation configuration")
    _add_common(p)
    p.add_argument("--bte", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--family", required=True, choices=perturb.FAMILIES)
    p.add_argument("--strength", type=float, default=None)
    p.add_argument("--gamma", type=float, default=perturb.DEFAULT_GAMMA)
    p.add_argument("--out-bte", required=True)
    p.add_argument("--out-mask", default=None)
    p.add_argument("--resample", action="store_true")
    p.set_defaults(func=_cmd_perturb)

    p = sub.add_parser("hint", help="rasterize conditioning hints")
    _add_common(p)
    p.add_argument("--bte", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--config-name", default=None,
                   help="single configuration name, e.g. tortuosity_4x")
    p.add_argument("--grid", action="store_true",
                   help="emit all 13 canonical configurations")
    p.add_argument("--gamma", type=float, default=perturb.DEFAULT_GAMMA)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--preview", action="store_true", help="also write 8-bit PNG previews")
    p.add_argument("--resample", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_hint)

    p = sub.add_parser("score", help="paired counterfactual table from a scores CSV")
    _add_common(p)
    p.add_argument("--scores", required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--strict", action="store_true",
                   help="restrict to the strict low-baseline fidelity-passing subset")
    p.add_argument("--threshold", type=float, default=cfstats.STRICT_PROB_THRESHOLD)
    p.add_argument("--configs", default=None,
                   help="comma-separated configuration subset to report")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("obs", help="observational statistics from a features CSV")
    _add_common(p)
    p.add_argument("--features", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_obs)

    p = sub.add_parser("dedupe", help="subject-level cohort deduplication")
    _add_common(p)
    p.add_argument("--cohort", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_dedupe)

    p = sub.add_parser("synth", help="generate synthetic tree fixtures")
    _add_common(p)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--branches", type=int, default=2)
    p.add_argument("--root-radius", type=float, default=2.5)
    p.add_argument("--radius-decay", type=float, default=0.8)
    p.add_argument("--canvas", type=int, default=512)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("roundtrip", help="synthetic generate-encode-compare report")
    _add_common(p)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--branches", type=int, default=2)
    p.add_argument("--root-radius", type=float, default=2.5)
    p.add_argument("--radius-decay", type=float, default=0.8)
    p.add_argument("--canvas", type=int, default=512)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_roundtrip)

    parser.subcommands = list(sub.choices.values())
    return parser


def _apply_config_file(parser, argv):
    """Inject config-file values as parser defaults, keeping flag precedence."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ConfigError("--config needs a file path")
    values = _load_config_file(argv[idx + 1])
    if not values:
        return argv
    for subparser in parser.subcommands:
        defaults = {}
        for act in subparser._actions:
            if act.dest not in values:
                continue
            raw = values[act.dest]
            if act.type is not None:
                defaults[act.dest] = act.type(raw)
            elif isinstance(act.const, bool) or isinstance(act.default, bool):
                defaults[act.dest] = raw.lower() in ("1", "true", "yes")
            else:
                defaults[act.dest] = raw
        subparser.set_defaults(**defaults)
    return argv


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (VesselTreeError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
