"""``cephforge`` command line.

Exit codes: 0 success, 1 validation failure, 2 I/O error, 3 config error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import ait, metrics, pdg, pipeline
from .errors import CephforgeError, CephforgeIOError, ConfigError
from .mira import AugmentConfig, mira_generate
from .schema import AnatomySchema, load_schema, read_landmarks, write_landmarks

log = logging.getLogger("cephforge")

SCHEMA_ENV = "CEPHFORGE_SCHEMA"


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _schema(args) -> AnatomySchema:
    path = args.schema or os.environ.get(SCHEMA_ENV) or None
    return load_schema(path)


def _style(args) -> ait.RasterStyle:
    return ait.RasterStyle(node_radius=args.node_radius, edge_thickness=args.edge_thickness)


def _mira_cfg(args, count: int) -> AugmentConfig:
    return AugmentConfig(
        n_l=count,
        seed=args.seed,
        scale_range=tuple(args.scale_range),
        rotation_range_deg=tuple(args.rotation_range),
        translation_range_frac=tuple(args.translation_range),
        anatomical_min=args.anatomical_min,
        anatomical_max=args.anatomical_max,
        reject_out_of_bounds=not args.keep_out_of_bounds,
    )


def _landmark_inputs(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    return pipeline.annotation_files(path)


def cmd_augment(args) -> int:
    schema = _schema(args)
    if args.constraints:
        schema = schema.with_constraints(args.constraints.split(","))
    pool = pipeline.ingest(args.pool, schema)
    results = mira_generate(pool.sets, _mira_cfg(args, args.count), schema, source_ids=pool.ids, jobs=args.jobs)
    pipeline.write_augmented(results, args.out)
    print(f"wrote {len(results)} landmark sets to {args.out}")
    return 0


def cmd_rasterize(args) -> int:
    schema = _schema(args)
    files = _landmark_inputs(Path(args.inp))
    sets = [read_landmarks(p, schema.n) for p in files]
    pngs = ait.rasterize_many(sets, schema, args.size, _style(args), jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p, png in zip(files, pngs):
        (out / f"{p.stem}.png").write_bytes(png)
    print(f"wrote {len(pngs)} topology images to {out}")
    return 0


def cmd_prompts(args) -> int:
    lex = pdg.load_lexicon(args.lexicon)
    prompts = pdg.generate_prompts(lex, args.count, args.seed, distinct=args.distinct)
    text = "".join(p.text + "\n" for p in prompts)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text, encoding="utf-8", newline="\n")
        print(f"wrote {len(prompts)} prompts to {args.out} ({pdg.enumerate_valid(lex)} valid prompts exist)")
    return 0


def cmd_bundle(args) -> int:
    schema = _schema(args)
    pool = pipeline.ingest(args.pool, schema)
    records = pipeline.build_bundles(
        pool.sets,
        schema,
        _mira_cfg(args, args.count),
        pdg.load_lexicon(args.lexicon),
        _style(args),
        args.out,
        size=args.size,
        source_ids=pool.ids,
        jobs=args.jobs,
    )
    print(f"wrote {len(records)} bundle records to {Path(args.out) / pipeline.MANIFEST}")
    return 0


def cmd_split(args) -> int:
    if args.manifest:
        ids = [r["id"] for r in pipeline.read_manifest(args.manifest)]
    else:
        ids = [p.stem for p in pipeline.annotation_files(args.inp)]
    sizes = args.sizes
    if len(sizes) != 3:
        raise ConfigError("--sizes needs three comma-separated counts: train,val,test")
    split = pipeline.split_dataset(ids, sizes, args.seed)
    text = json.dumps(split.to_json(), indent=1) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
        print(f"split {len(ids)} records into {tuple(map(len, (split.train, split.val, split.test)))}")
    return 0


def cmd_evaluate(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    gt_files = pipeline.annotation_files(gt_dir)
    pairs = []
    for g in gt_files:
        p = pred_dir / g.name
        if not p.is_file():
            raise CephforgeIOError(f"no prediction for {g.name} in {pred_dir}")
        gt = read_landmarks(g)
        pairs.append((read_landmarks(p, len(gt)), gt))
    cfg = metrics.EvalConfig(args.thresholds, ddof=args.ddof, pooling=args.pooling, by_tag=args.by_tag)
    report = metrics.evaluate(pairs, cfg=cfg)
    table = metrics.format_table(report)
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_json(), indent=1) + "\n")
        Path(args.out).with_suffix(".txt").write_text(table)
    if args.baseline:
        base = json.loads(Path(args.baseline).read_text())
        base_report = _report_from_json(base)
        sys.stdout.write(metrics.format_comparison(metrics.compare_reports(base_report, report)))
    return 0


def _report_from_json(doc: dict) -> metrics.EvalReport:
    return metrics.EvalReport(
        mre_mm=doc["mre_mm"],
        sd_mm=doc["sd_mm"],
        sdr={float(k): v for k, v in doc["sdr"].items()},
        n_landmarks=doc["n_landmarks"],
        n_images=doc["n_images"],
        subsets={k: _report_from_json(v) for k, v in doc.get("subsets", {}).items()},
    )


def cmd_verify(args) -> int:
    schema = _schema(args)
    lex = pdg.load_lexicon(args.lexicon)
    size = None if args.size == 0 else args.size
    defects = pipeline.verify_manifest(args.manifest, schema, lex, size=size)
    n = len(pipeline.read_manifest(args.manifest))
    for d in defects:
        print(d)
    print(f"{n} records, {len(defects)} defects")
    return 1 if defects else 0


def cmd_stub_render(args) -> int:
    schema = _schema(args)
    files = _landmark_inputs(Path(args.inp))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in files:
        img = pipeline.render_stub_xray(read_landmarks(p, schema.n), schema, args.size)
        ait.write_png(img, out / f"{p.stem}.png")
    print(f"wrote {len(files)} stub images to {out}")
    return 0


def cmd_synth_pool(args) -> int:
    schema = _schema(args)
    sets = pipeline.synth_pool(args.count, args.seed, schema)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, ls in enumerate(sets):
        write_landmarks(ls, out / f"pool_{i:04d}.json")
    print(f"wrote {len(sets)} synthetic pool annotations to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1, help="worker processes; output does not depend on it")
    common.add_argument("--schema", help=f"schema JSON (default: ${SCHEMA_ENV} or the bundled schema)")
    common.add_argument("-v", "--verbose", action="store_true")

    raster = argparse.ArgumentParser(add_help=False)
    raster.add_argument("--size", type=int, default=512)
    raster.add_argument("--node-radius", type=int, default=4)
    raster.add_argument("--edge-thickness", type=int, default=2)

    aug = argparse.ArgumentParser(add_help=False)
    aug.add_argument("--scale-range", type=_floats, default=(0.92, 1.08))
    aug.add_argument("--rotation-range", type=_floats, default=(-5.0, 5.0), help="degrees")
    aug.add_argument("--translation-range", type=_floats, default=(-0.04, 0.04), help="fraction of image size")
    aug.add_argument("--anatomical-min", type=int, default=1)
    aug.add_argument("--anatomical-max", type=int, default=None)
    aug.add_argument("--keep-out-of-bounds", action="store_true", help="do not reject sets that leave the frame")

    parser = argparse.ArgumentParser(prog="cephforge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("augment", parents=[common, aug], help="expand a landmark pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--constraints", help="comma-separated subset of schema constraints to keep")
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("rasterize", parents=[common, raster], help="render topology images")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rasterize)

    p = sub.add_parser("prompts", parents=[common], help="generate text prompts")
    p.add_argument("--lexicon")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--distinct", action="store_true")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("bundle", parents=[common, raster, aug], help="build a conditioning bundle")
    p.add_argument("--pool", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--lexicon")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bundle)

    p = sub.add_parser("split", parents=[common], help="train/val/test split")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest")
    src.add_argument("--in", dest="inp")
    p.add_argument("--sizes", type=_ints, required=True, help="train,val,test")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("evaluate", parents=[common], help="MRE / SDR report")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--thresholds", type=_floats, default=metrics.DEFAULT_THRESHOLDS)
    p.add_argument("--by-tag", action="store_true")
    p.add_argument("--ddof", type=int, default=0)
    p.add_argument("--pooling", choices=("landmarks", "images"), default="landmarks")
    p.add_argument("--out", help="write the JSON report here (and the table next to it)")
    p.add_argument("--baseline", help="JSON report to print deltas against")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify-manifest", parents=[common], help="check a bundle manifest")
    p.add_argument("manifest")
    p.add_argument("--lexicon")
    p.add_argument("--size", type=int, default=512, help="expected image size, 0 to skip")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("stub-render", parents=[common], help="procedural test radiographs")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stub_render)

    p = sub.add_parser("synth-pool", parents=[common], help="synthetic annotation pool for testing")
    p.add_argument("--count", type=int, default=476)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_pool)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 3 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CephforgeError as exc:
        print(f"cephforge {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"cephforge {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
