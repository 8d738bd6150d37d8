"""`forge` command line: dataset construction, captioning, benchmark, review.

Every subcommand is deterministic given the same inputs, config, seed, and
stub endpoints. Secrets come only from environment variables named in the
endpoint config; everything else comes from flags or a TOML config file
(flags win).
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import __version__
from .annotation_io import (
    Detection,
    InstanceRecord,
    Source,
    detection_to_dict,
    instance_to_dict,
    parse_detector_results,
    parse_dota_file,
    read_instances,
    write_instances,
    write_jsonl,
)
from .benchmark_kit import TileStats, build_benchmark, read_attribute_manifest, write_benchmark
from .caption_engine import DEFAULT_MIN_WORDS, PromptSpec, caption_batch, render_prompt
from .client import ChatClient, load_endpoint_config
from .errors import (
    CapforgeError,
    ConfigError,
    DegenerateRegion,
    EmptyCaption,
    EmptyDataset,
    EmptyReport,
    EndpointError,
    InvalidTransition,
    JudgeParseError,
    NotFound,
    NumericError,
    ParseError,
    SchemaError,
    ShapeError,
)
from .evaluator import aggregate, emit_report, run_judging
from .geometry import DEFAULT_FOCAL, FocalConfig, ObbQuad, focal_crop
from .store_api import create_app, dataset_stats, open_store
from .tiler import DEFAULT_TILE, tile_many

EXIT_CODES = (
    (ConfigError, 3),
    (ParseError, 4),
    (SchemaError, 5),
    ((EndpointError, EmptyCaption), 6),
    ((EmptyDataset, EmptyReport), 7),
    (JudgeParseError, 8),
    ((NumericError, ShapeError, DegenerateRegion), 9),
    ((NotFound, InvalidTransition), 10),
    (CapforgeError, 1),
)

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def find_image(images_dir: Path, stem: str) -> Optional[Path]:
    for ext in IMAGE_EXTS:
        candidate = images_dir / f"{stem}{ext}"
        if candidate.exists():
            return candidate
    return None


def load_config_table(path: Optional[str], section: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad TOML in {path}: {exc}") from None
    return doc.get(section, {})


def setting(args: argparse.Namespace, table: dict, name: str, default):
    """Flag value if given, else config table value, else default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in table:
        return table[name]
    return default


# --- subcommand implementations ----------------------------------------------


def _load_annotation_jobs(ann_dir: Path, images_dir: Path) -> list[tuple[Path, list[InstanceRecord]]]:
    ann_files = sorted(ann_dir.glob("*.txt"))
    jobs = []
    for ann_path in ann_files:
        image_path = find_image(images_dir, ann_path.stem)
        if image_path is None:
            continue
        from PIL import Image

        with Image.open(image_path) as img:
            image_w, image_h = img.size
        records = []
        for idx, raw in enumerate(parse_dota_file(ann_path)):
            clamped = ObbQuad(
                tuple(
                    (min(max(x, 0.0), float(image_w)), min(max(y, 0.0), float(image_h)))
                    for x, y in raw.obb.corners
                )
            )
            records.append(
                InstanceRecord(
                    instance_id=f"{ann_path.stem}_{idx:04d}",
                    image_ref=image_path.name,
                    image_w=image_w,
                    image_h=image_h,
                    category=raw.category,
                    obb=clamped,
                    source=Source.DOTA,
                    source_label=raw.source_label,
                )
            )
        jobs.append((image_path, records))
    if not jobs:
        raise EmptyDataset(f"no annotation/image pairs under {ann_dir}")
    return jobs


def cmd_tile(args) -> int:
    table = load_config_table(args.config, "tile")
    tile_size = int(setting(args, table, "tile-size", DEFAULT_TILE))
    ann_dir, images_dir = Path(args.in_dir), Path(args.images)
    out_path = Path(args.out)
    crops_dir = Path(args.crops_dir) if args.crops_dir else out_path.parent / "tiles"
    jobs = _load_annotation_jobs(ann_dir, images_dir)
    results = tile_many(jobs, crops_dir, tile=tile_size, dedupe=args.dedupe, workers=args.workers)
    records, dropped, partial = [], 0, 0
    for _, plan in results:
        dropped += plan.dropped_windows
        partial += plan.partial_instances
        for win in plan.windows:
            records.extend(plan.assignments[win])
    write_instances(records, out_path)
    print(
        f"tiled {len(results)} images -> {len(records)} instances, "
        f"{dropped} windows dropped, {partial} partial instances skipped"
    )
    return 0


def _load_image_bytes(images_dir: Path, rec: InstanceRecord) -> bytes:
    path = images_dir / rec.image_ref
    if not path.exists():
        found = find_image(images_dir, Path(rec.image_ref).stem)
        if found is None:
            raise EmptyDataset(f"image {rec.image_ref} not found under {images_dir}")
        path = found
    return path.read_bytes()


def cmd_caption(args) -> int:
    table = load_config_table(args.config, "caption")
    min_words = int(setting(args, table, "min-words", DEFAULT_MIN_WORDS))
    records = read_instances(args.in_path)
    if not records:
        raise EmptyDataset(f"no instances in {args.in_path}")
    client = ChatClient(load_endpoint_config(args.endpoint))
    images_dir = Path(args.images)
    items = [(rec, _load_image_bytes(images_dir, rec)) for rec in records]
    outcomes = caption_batch(items, client, min_words=min_words, parallel=args.parallel)
    captioned = []
    n_failed = 0
    for rec, outcome in zip(records, outcomes):
        updated = rec.with_description(outcome.text)
        if not outcome.report.passed:
            n_failed += 1
        captioned.append(updated)
    write_instances(captioned, args.out)
    print(f"captioned {len(captioned)} instances ({n_failed} failed validation)")
    return 0


def cmd_build_dataset(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = load_config_table(args.config, "build")
    tile_size = int(setting(args, table, "tile-size", DEFAULT_TILE))
    min_words = int(setting(args, table, "min-words", DEFAULT_MIN_WORDS))

    jobs = _load_annotation_jobs(Path(args.annotations), Path(args.images))
    results = tile_many(jobs, out_dir / "tiles", tile=tile_size, dedupe=args.dedupe, workers=args.workers)
    records = []
    dropped = partial = 0
    for _, plan in results:
        dropped += plan.dropped_windows
        partial += plan.partial_instances
        for win in plan.windows:
            records.extend(plan.assignments[win])
    if not records:
        raise EmptyDataset("tiling produced no instances")

    client = ChatClient(load_endpoint_config(args.endpoint))
    items = [(rec, _load_image_bytes(out_dir / "tiles", rec)) for rec in records]
    outcomes = caption_batch(items, client, min_words=min_words, parallel=args.parallel)
    captioned = []
    n_failed = 0
    for rec, outcome in zip(records, outcomes):
        if not outcome.report.passed:
            n_failed += 1
        captioned.append(rec.with_description(outcome.text))
    write_instances(captioned, out_dir / "instances.jsonl")

    stats = dataset_stats(captioned)
    stats["tiling"] = {"windows_dropped": dropped, "partial_instances": partial}
    stats["validation"] = {"failed": n_failed}
    with open(out_dir / "stats.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"dataset: {stats['n_instances']} instances over {stats['n_images']} images "
        f"({n_failed} captions failed validation)"
    )
    return 0


def cmd_describe_batch(args) -> int:
    from PIL import Image

    table = load_config_table(args.config, "describe")
    threshold = float(setting(args, table, "score-threshold", 0.5))
    focal_cfg = FocalConfig(
        medium_patch=int(setting(args, table, "medium-patch", DEFAULT_FOCAL.medium_patch)),
        small_patch=int(setting(args, table, "small-patch", DEFAULT_FOCAL.small_patch)),
        focal_resize=int(setting(args, table, "focal-resize", DEFAULT_FOCAL.focal_resize)),
        global_resize=int(setting(args, table, "global-resize", DEFAULT_FOCAL.global_resize)),
    )
    detections = parse_detector_results(args.detections, score_threshold=threshold)
    if not detections:
        raise EmptyDataset(f"no detections at or above {threshold} in {args.detections}")
    client = ChatClient(load_endpoint_config(args.endpoint))
    images_dir = Path(args.images)
    rows = []
    for det in detections:
        row = detection_to_dict(det)
        try:
            image_path = images_dir / det.image_ref
            if not image_path.exists():
                found = find_image(images_dir, Path(det.image_ref).stem)
                if found is None:
                    raise EmptyDataset(f"image {det.image_ref} not found")
                image_path = found
            with Image.open(image_path) as img:
                window = focal_crop(det.obb, img.width, img.height, focal_cfg)
                crop = img.crop((int(window.x_min), int(window.y_min), int(window.x_max), int(window.y_max)))
                crop = crop.resize((focal_cfg.focal_resize, focal_cfg.focal_resize))
                buf = io.BytesIO()
                crop.save(buf, format="PNG")
            prompt = render_prompt(PromptSpec(category=det.category, obb=det.obb, template_id="describe"))
            from .client import build_messages

            result = client.complete(build_messages(prompt, buf.getvalue()))
            row["caption"] = result.text
            row["focal_window"] = [window.x_min, window.y_min, window.x_max, window.y_max]
            row["error"] = None
        except (EndpointError, EmptyDataset, CapforgeError, OSError) as exc:
            row["caption"] = ""
            row["focal_window"] = None
            row["error"] = str(exc)
        rows.append(row)
    write_jsonl(rows, args.out)
    described = sum(1 for r in rows if not r["error"])
    print(f"described {described}/{len(rows)} detections")
    return 0


def cmd_bench_build(args) -> int:
    records = read_instances(args.in_path)
    if not records:
        raise EmptyDataset(f"no instances in {args.in_path}")
    attrs = read_attribute_manifest(args.attrs)
    ood = set()
    if args.ood:
        ood = {line.strip() for line in Path(args.ood).read_text(encoding="utf-8").splitlines() if line.strip()}
    per_image: dict[str, int] = {}
    for rec in records:
        per_image[rec.image_ref] = per_image.get(rec.image_ref, 0) + 1
    stats_by_id = {}
    for rec in records:
        xs = [x for x, _ in rec.obb.corners]
        ys = [y for _, y in rec.obb.corners]
        touches = (
            min(xs) < 1.0 or min(ys) < 1.0 or max(xs) > rec.image_w - 1.0 or max(ys) > rec.image_h - 1.0
        )
        stats_by_id[rec.instance_id] = TileStats(per_image[rec.image_ref], touches)
    bench = build_benchmark(records, attrs, ood, stats_by_id)
    if not bench:
        raise EmptyDataset("no benchmark instances (does the manifest reference these ids?)")
    write_benchmark(bench, args.out)
    print(f"benchmark: {len(bench)} instances, {sum(len(b.qa_list) for b in bench)} questions")
    return 0


def cmd_evaluate(args) -> int:
    from .benchmark_kit import read_benchmark

    bench = read_benchmark(args.bench)
    captions: dict[str, str] = {}
    with open(args.captions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            if "caption" in doc:
                captions[doc["instance_id"]] = doc["caption"]
            else:
                captions[doc["instance_id"]] = doc.get("description", "")
    judge = ChatClient(load_endpoint_config(args.judge))
    run = run_judging(bench, captions, judge, parallel=args.parallel)
    if not run.scored:
        raise EmptyReport("no questions were scored")
    report = aggregate(
        run.scored,
        model_name=args.model_name or "",
        judge_name=judge.cfg.name or judge.cfg.model or judge.cfg.kind,
        unscored=run.unscored,
    )
    out = Path(args.out)
    fmt = args.format or {"json": "json", "csv": "csv", "md": "table", "txt": "table"}.get(
        out.suffix.lstrip("."), "json"
    )
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(emit_report(report, fmt))
    sys.stdout.write(emit_report(report, "table").decode("utf-8"))
    return 0


def cmd_fusion_check(args) -> int:
    import numpy as np

    from .fusion_ref import DfmParams, FeatureMatrix, FeatureRole, grad_check

    rng = np.random.default_rng(args.seed)
    d, heads = args.dmodel, args.heads
    params = DfmParams.init(d, args.ddomain, heads=heads, rng=rng, gate=0.5)
    G = FeatureMatrix(rng.standard_normal((args.global_tokens, d)), FeatureRole.GLOBAL)
    F = FeatureMatrix(rng.standard_normal((args.focal_tokens, d)), FeatureRole.FOCAL)
    R = FeatureMatrix(rng.standard_normal((args.domain_tokens, args.ddomain)), FeatureRole.DOMAIN)
    err = grad_check(G, F, R, params, eps=args.eps, seed=args.seed)
    ok = err < 1e-5
    print(f"max relative gradient error: {err:.3e}  [{'PASS' if ok else 'FAIL'}]")
    if not ok:
        raise NumericError(f"gradient check failed: {err:.3e} >= 1e-5")
    return 0


def cmd_stats(args) -> int:
    records = read_instances(args.in_path)
    stats = dataset_stats(records)
    if args.json_out:
        print(json.dumps(stats, indent=2, sort_keys=True))
    else:
        print(f"images:               {stats['n_images']}")
        print(f"instances:            {stats['n_instances']}")
        print(f"instances per image:  {stats['instances_per_image_mean']:.2f}")
        print(f"words per caption:    {stats['words_per_description_mean']:.2f}")
        print(f"categories:           {stats['n_categories']}")
        for cat, count in stats["per_category_counts"].items():
            print(f"  {cat:<30} {count}")
    return 0


def cmd_review_serve(args) -> int:
    import uvicorn

    annotator = None
    if args.endpoint:
        annotator = ChatClient(load_endpoint_config(args.endpoint))
    store = open_store(args.data, fraction=args.sample, seed=args.seed, annotator=annotator)
    static_dir = args.static or _default_static_dir()
    app = create_app(store, static_dir=static_dir)
    print(f"review service on http://{args.host}:{args.port} ({len(store.queue.pending)} pending)")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _default_static_dir() -> Optional[str]:
    repo_root = Path(__file__).resolve().parents[2]
    bundled = repo_root / "frontend" / "dist"
    return str(bundled) if bundled.is_dir() else None


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forge",
        description="Build, curate, and evaluate object-level captioning datasets for remote sensing imagery.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tile", help="partition large images into tiles and remap instances")
    p.add_argument("--in", dest="in_dir", required=True, help="annotation directory (DOTA .txt)")
    p.add_argument("--images", required=True, help="image directory")
    p.add_argument("--out", required=True, help="output instances JSONL")
    p.add_argument("--tile-size", type=int, default=None)
    p.add_argument("--dedupe", action="store_true")
    p.add_argument("--crops-dir", default=None)
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_tile)

    p = sub.add_parser("caption", help="generate captions for instances via an annotator endpoint")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--endpoint", required=True, help="endpoint config TOML")
    p.add_argument("--out", required=True)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_caption)

    p = sub.add_parser("build-dataset", help="tile + caption + validate + stats in one run")
    p.add_argument("--annotations", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tile-size", type=int, default=None)
    p.add_argument("--min-words", type=int, default=None)
    p.add_argument("--dedupe", action="store_true")
    p.add_argument("--workers", type=int, default=4)
    p.add_argument("--parallel", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_build_dataset)

    p = sub.add_parser("describe-batch", help="caption each detection from an off-the-shelf detector")
    p.add_argument("--detections", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--score-threshold", type=float, default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(fn=cmd_describe_batch)

    p = sub.add_parser("bench-build", help="attach rubric QA and difficulty tiers to instances")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--attrs", required=True, help="attribute manifest JSONL")
    p.add_argument("--ood", default=None, help="file of out-of-distribution categories")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench_build)

    p = sub.add_parser("evaluate", help="judge captions against a benchmark and report scores")
    p.add_argument("--bench", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--judge", required=True, help="judge endpoint config TOML")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["table", "json", "csv"], default=None)
    p.add_argument("--model-name", default=None)
    p.add_argument("--parallel", type=int, default=None)
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("fusion-check", help="finite-difference check of the fusion reference")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dmodel", type=int, default=8)
    p.add_argument("--heads", type=int, default=2)
    p.add_argument("--ddomain", type=int, default=6)
    p.add_argument("--global-tokens", type=int, default=5)
    p.add_argument("--focal-tokens", type=int, default=3)
    p.add_argument("--domain-tokens", type=int, default=4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(fn=cmd_fusion_check)

    p = sub.add_parser("stats", help="dataset statistics over an instances file")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--json", dest="json_out", action="store_true")
    p.set_defaults(fn=cmd_stats)

    p = sub.add_parser("review-serve", help="serve the human verification API and UI")
    p.add_argument("--data", required=True, help="directory with instances.jsonl and images")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--sample", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--endpoint", default=None, help="annotator config for regeneration")
    p.add_argument("--static", default=None, help="frontend bundle directory")
    p.set_defaults(fn=cmd_review_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CapforgeError as exc:
        for families, code in EXIT_CODES:
            if isinstance(exc, families):
                print(f"error: {exc}", file=sys.stderr)
                return code
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
