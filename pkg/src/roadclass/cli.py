"""Command-line entry point: ``roadclass <subcommand> ...``.

Every subcommand prints one JSON summary on stdout; diagnostics go to
stderr. Exit status is 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import pngio
from .baseline_model import ModelParams, TrainConfig, evaluate, train
from .dataset import Manifest, class_weights, read_manifest, split, write_manifest
from .experiments import run_baseline, run_binarize, run_cross_domain, run_masking
from .imageops import binarize_confidence
from .metrics import iou
from .osm_ingest import class_distribution, load_class_table, make_tile, parse_roads, sample_anchor_points
from .pipeline import OCCLUSION_FLAGS, FeatureCache, FileSource, PrepareConfig, prepare_from_manifest, prepare_from_roads
from .synth import DOMAINS, DomainParams, SynthConfig, generate_dataset

logger = logging.getLogger("roadclass")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 0
    radius: int = 20
    decloud_threshold: float = 150.0
    crop: int = 224
    occlusion: str = "none"
    geometry: str = "crop"
    domain: list | None = None
    points_per_road: int = 1
    workers: int = 1
    learning_rate: float = 1e-4
    epochs: int = 200
    batch_size: int = 64

    def validate(self) -> None:
        if self.radius < 0:
            raise UsageError("--radius must be >= 0")
        if self.crop < 1:
            raise UsageError("--crop must be >= 1")
        if not 0 <= self.decloud_threshold <= 255:
            raise UsageError("--decloud-threshold must lie in [0, 255]")
        if self.occlusion not in OCCLUSION_FLAGS:
            raise UsageError(f"--occlusion must be one of {sorted(OCCLUSION_FLAGS)}")
        if self.geometry not in ("crop", "crop-downsize"):
            raise UsageError("--geometry must be crop or crop-downsize")
        if self.points_per_road < 1:
            raise UsageError("--points-per-road must be >= 1")
        if self.workers < 1:
            raise UsageError("--workers must be >= 1")
        if not self.learning_rate > 0 or self.epochs < 0 or self.batch_size < 1:
            raise UsageError("invalid training parameters")

    def prepare_config(self) -> PrepareConfig:
        return PrepareConfig(
            radius=self.radius,
            decloud_threshold=self.decloud_threshold,
            crop=self.crop,
            occlusion=OCCLUSION_FLAGS[self.occlusion],
            geometry=self.geometry,
            workers=self.workers,
        )

    def train_config(self, **overrides) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            **overrides,
        )


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the --config JSON file, then explicit flags."""
    values = asdict(RunConfig())
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                file_values = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        unknown = set(file_values) - set(values)
        if unknown:
            raise UsageError(f"unknown config keys {sorted(unknown)}")
        values.update(file_values)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_ingest(args, cfg: RunConfig) -> dict:
    domain = (cfg.domain or ["unknown"])[0]
    table = load_class_table(args.class_map) if args.class_map else None
    text = Path(args.geojson).read_text(encoding="utf-8")
    parsed = parse_roads(text, domain, table)
    roads = []
    anchor_errors = {}
    for road in parsed.records:
        try:
            anchors = sample_anchor_points(road, cfg.points_per_road, cfg.seed)
        except ValueError as e:
            anchor_errors[road.road_id] = str(e)
            continue
        roads.append(
            {
                "road_id": road.road_id,
                "label": road.label,
                "raw_tag": road.raw_tag,
                "domain": road.domain,
                "polyline": [[p.lon, p.lat] for p in road.polyline],
                "anchors": [
                    {"sample_id": f"{road.road_id}_{i}", "tile": make_tile(a).to_dict()} for i, a in enumerate(anchors)
                ],
            }
        )
    dist = class_distribution([r["label"] for r in roads])
    summary = {
        "command": "ingest",
        "domain": domain,
        "points_per_road": cfg.points_per_road,
        "seed": cfg.seed,
        "roads": len(roads),
        "samples": sum(len(r["anchors"]) for r in roads),
        "skipped_unmapped": parsed.skipped_unmapped,
        "feature_errors": parsed.errors,
        "anchor_errors": anchor_errors,
        "class_distribution": dist.to_dict(),
    }
    _write_json(args.out, {**summary, "roads": roads})
    return summary


def cmd_prepare(args, cfg: RunConfig) -> dict:
    pcfg = cfg.prepare_config()
    if args.manifest:
        manifest, summary = prepare_from_manifest(args.manifest, args.out, pcfg)
    elif args.tiles and args.roads:
        manifest, summary = prepare_from_roads(args.tiles, args.roads, args.out, pcfg)
    else:
        raise UsageError("prepare needs --manifest, or both --tiles and --roads")
    return {"command": "prepare", "manifest": str(Path(args.out) / "manifest.jsonl"), **summary.to_dict()}


def cmd_split(args, cfg: RunConfig) -> dict:
    m = split(read_manifest(args.manifest), tuple(args.fractions), cfg.seed)
    write_manifest(args.out, m)
    counts = {s: sum(r.split == s for r in m.records) for s in ("train", "val", "test")}
    return {"command": "split", "out": args.out, "counts": counts}


def cmd_train(args, cfg: RunConfig) -> dict:
    m = read_manifest(args.manifest)
    overrides = {}
    if args.class_weighted:
        overrides["class_weights"] = class_weights(m.in_split("train"))
    tcfg = cfg.train_config(**overrides)
    cache = FeatureCache(FileSource(args.manifest), cfg.crop, cfg.geometry, cfg.workers)
    cache.prefetch(m.in_split("train").records, ("none",))
    params = train(m, tcfg, cache.loader())
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(params.to_json() + "\n", encoding="utf-8")
    return {"command": "train", "model": args.out, "final_train_loss": params.final_train_loss}


def cmd_eval(args, cfg: RunConfig) -> dict:
    params = ModelParams.from_json(Path(args.model).read_text(encoding="utf-8"))
    m = read_manifest(args.manifest)
    cache = FeatureCache(FileSource(args.manifest), cfg.crop, cfg.geometry, cfg.workers)
    cache.prefetch(m.in_split(args.split).records, ("none",))
    _, rep = evaluate(params, m, args.split, cache.loader())
    if args.out:
        _write_json(args.out, rep)
    return {"command": "eval", "split": args.split, **rep}


def cmd_experiment(args, cfg: RunConfig) -> dict:
    manifests = [read_manifest(p) for p in args.manifest]
    sources = {}
    records, label_set = [], manifests[0].label_set
    for path, m in zip(args.manifest, manifests):
        src = FileSource(path)
        for r in m.records:
            sources[r.sample_id] = src
            records.append(r)
    merged = Manifest(tuple(records), label_set, {"inputs": [str(p) for p in args.manifest]})
    cache = FeatureCache(lambda r: sources[r.sample_id](r), cfg.crop, cfg.geometry, cfg.workers)
    tcfg = cfg.train_config()
    if args.kind == "baseline":
        rep = run_baseline(merged, cache, tcfg, OCCLUSION_FLAGS[cfg.occlusion])
    elif args.kind == "masking":
        rep = run_masking(merged, cache, tcfg)
    elif args.kind == "binarize":
        rep = run_binarize(merged, cache, tcfg, weighted=args.class_weighted)
    else:
        domains = cfg.domain or merged.domains()
        if len(domains) != 2:
            raise ValueError(f"cross_domain needs exactly two domains, got {domains}")
        rep = run_cross_domain(merged, cache, tcfg, domains[0], domains[1])
    if args.out:
        _write_json(args.out, rep)
    return {"command": "experiment", "kind": args.kind, **rep}


def cmd_iou(args, cfg: RunConfig) -> dict:
    pred_dir, ref_dir = Path(args.pred), Path(args.ref)
    pred = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    ref = {p.stem: p for p in sorted(ref_dir.glob("*.png"))}
    paired = sorted(set(pred) & set(ref))
    unpaired = sorted(set(pred) ^ set(ref))
    labels = {}
    if args.manifest:
        labels = {r.sample_id: r.label for r in read_manifest(args.manifest).records}
    conf = {sid: pngio.read_confidence(pred[sid]) for sid in paired}
    refs = {sid: pngio.read_mask(ref[sid]) for sid in paired}
    per_threshold = []
    for t in args.thresholds:
        scores = {}
        degenerate = []
        for sid in paired:
            res = iou(binarize_confidence(conf[sid], t), refs[sid])
            scores[sid] = res.value
            if res.degenerate:
                degenerate.append(sid)
        by_class: dict[str, list[float]] = {}
        for sid, v in scores.items():
            by_class.setdefault(labels.get(sid, "all"), []).append(v)
        per_threshold.append(
            {
                "threshold": t,
                "per_sample": scores,
                "mean_iou": sum(scores.values()) / len(scores) if scores else None,
                "fraction_iou_ge_0.5": {c: sum(v >= 0.5 for v in vs) / len(vs) for c, vs in sorted(by_class.items())},
                "predicted_pixels": {sid: int(binarize_confidence(conf[sid], t).sum()) for sid in paired},
                "degenerate": degenerate,
            }
        )
    rep = {"paired": len(paired), "unpaired": unpaired, "unpaired_count": len(unpaired), "thresholds": per_threshold}
    if args.out:
        _write_json(args.out, rep)
    return {"command": "iou", **rep}


def cmd_synth(args, cfg: RunConfig) -> dict:
    domain = (cfg.domain or ["synthA"])[0]
    params = DOMAINS.get(domain, DomainParams())
    if args.base_color:
        params = DomainParams(tuple(args.base_color), params.noise_amplitude, params.tile_jitter)
    if args.noise is not None:
        params = DomainParams(params.base_color, args.noise, params.tile_jitter)
    scfg = SynthConfig(
        tile_px=args.tile_px,
        context_correlation=args.context_correlation,
        domain_params=params,
        seed=cfg.seed,
    )
    m = generate_dataset(args.n_per_class, scfg, domain, args.out, cfg.radius, cfg.workers)
    return {"command": "synth", "domain": domain, "samples": len(m), "manifest": str(Path(args.out) / "manifest.jsonl")}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="JSON file of run settings; flags override it")
    common.add_argument("--workers", type=int)
    common.add_argument("--radius", type=int, help="mask dilation radius in pixels (default 20)")
    common.add_argument("--decloud-threshold", dest="decloud_threshold", type=float)
    common.add_argument("--crop", type=int, help="crop target in pixels (default 224)")
    common.add_argument("--occlusion", choices=sorted(OCCLUSION_FLAGS))
    common.add_argument("--geometry", choices=["crop", "crop-downsize"])
    common.add_argument("--domain", action="append")
    common.add_argument("--points-per-road", dest="points_per_road", type=int)
    common.add_argument("--learning-rate", dest="learning_rate", type=float)
    common.add_argument("--epochs", type=int)
    common.add_argument("--batch-size", dest="batch_size", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="roadclass", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse GeoJSON roads and sample tile anchors")
    p.add_argument("geojson")
    p.add_argument("--out", required=True)
    p.add_argument("--class-map", dest="class_map", help="JSON {highway_tag: label} override")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("prepare", parents=[common], help="decloud, mask, crop and occlude tiles")
    p.add_argument("--tiles")
    p.add_argument("--roads")
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("split", parents=[common], help="stratified train/val/test split")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--fractions", type=float, nargs=3, default=[0.8, 0.2, 0.0])
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", parents=[common], help="train the baseline classifier")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--class-weighted", dest="class_weighted", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate a trained model on a split")
    p.add_argument("model")
    p.add_argument("manifest")
    p.add_argument("--split", default="val")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", parents=[common], help="run an experiment harness")
    p.add_argument("kind", choices=["masking", "binarize", "cross_domain", "baseline"])
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--out")
    p.add_argument("--class-weighted", dest="class_weighted", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("iou", parents=[common], help="IoU of predicted masks or confidence maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--thresholds", type=float, nargs="+", default=[0.5])
    p.add_argument("--manifest", help="manifest supplying per-sample labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_iou)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic tile dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", dest="n_per_class", type=int, default=10)
    p.add_argument("--tile-px", dest="tile_px", type=int, default=1000)
    p.add_argument("--context-correlation", dest="context_correlation", action="store_true")
    p.add_argument("--base-color", dest="base_color", type=int, nargs=3)
    p.add_argument("--noise", type=int)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        summary = args.func(args, cfg)
    except UsageError as e:
        print(f"roadclass: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError, KeyError, FloatingPointError) as e:
        print(f"roadclass: error: {e}", file=sys.stderr)
        return EXIT_DATA
    _emit(summary)
    if summary.get("errors"):
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
