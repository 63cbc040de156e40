"""Command-line entry point: one subcommand per pipeline stage plus `demo`.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
failure. Every stage appends to a log file under the output directory so
failures can point at it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ExperimentConfig, load_config
from .data import load_annotations, load_detections, load_manifest, write_annotations
from .detect import ExternalProcessDetector, StubDetector, enrich, load_metadata_table, run_detection
from .errors import ConfigError, DataError, TrainingError, WildclassError
from .preprocess import run_preprocess
from .store import ExperimentStore

log = logging.getLogger("wildclass")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAINING = 4


def _setup_logging(log_dir: Path | None, stage: str) -> Path | None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_path = None
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"{stage}.log"
        handlers.append(logging.FileHandler(log_path))
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )
    return log_path


def _load(args) -> ExperimentConfig:
    config = load_config(Path(args.config))
    overrides = {}
    if getattr(args, "confidence_threshold", None) is not None:
        overrides["confidence_threshold"] = args.confidence_threshold
    if getattr(args, "crop_strategy", None) is not None:
        overrides["crop_strategy"] = args.crop_strategy
    if getattr(args, "target_dim", None) is not None:
        overrides["target_dim"] = args.target_dim
    if overrides:
        config = dataclasses.replace(
            config, preprocessing=dataclasses.replace(config.preprocessing, **overrides)
        )
    if getattr(args, "repeats", None) is not None:
        config = dataclasses.replace(
            config, training=dataclasses.replace(config.training, repeats=args.repeats)
        )
    if getattr(args, "seed", None) is not None:
        config = dataclasses.replace(
            config, training=dataclasses.replace(config.training, seed=args.seed)
        )
    return config


def cmd_detect(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "detect")
    if args.adapter == "stub":
        adapter = StubDetector(boxes_per_image=args.boxes_per_image)
    else:
        if not args.adapter_command:
            raise ConfigError("--adapter-command is required with --adapter external")
        adapter = ExternalProcessDetector(
            args.adapter_command.split(), bbox_convention=args.bbox_convention
        )
    detections, report = run_detection(
        Path(args.image_dir or config.io.data_dir),
        adapter,
        min_write_confidence=args.min_write_confidence,
        out_path=Path(config.io.detections_file),
    )
    print(f"wrote {len(detections)} detections to {config.io.detections_file} "
          f"({len(report['skipped_images'])} images skipped)")
    return EXIT_OK


def cmd_enrich(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "enrich")
    detections = load_detections(Path(config.io.detections_file))
    annotations_path = Path(config.io.annotations_file)
    annotations = load_annotations(annotations_path) if annotations_path.exists() else None
    if annotations is None:
        from .data import AnnotationSet

        annotations = AnnotationSet()
    table = load_metadata_table(Path(args.table), args.join_key)
    annotations = enrich(detections, annotations, table)
    write_annotations(annotations, annotations_path)
    print(f"metadata merged for {len(table.rows)} keys into {annotations_path}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "preprocess")
    manifest = run_preprocess(config)
    print(f"manifest with {len(manifest.entries)} entries at {pipeline.manifest_path(config)}")
    return EXIT_OK


def cmd_split(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "split")
    manifest = load_manifest(pipeline.manifest_path(config))
    assignment = pipeline.run_split(config, manifest)
    n_test = len(assignment.ids_for("test"))
    print(f"split {len(assignment.assignment) - n_test}/{n_test} train/test "
          f"(straddling images: {assignment.straddling_image_fraction:.1%})")
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "train")
    store = ExperimentStore(Path(config.io.model_dir))
    experiment_id, records = pipeline.train_experiment(config, store, args.experiment_id)
    for rec in records:
        print(f"{experiment_id}/{rec.run_id}: best val accuracy {rec.best_val_accuracy:.4f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _load(args)
    _setup_logging(Path(config.io.output_dir) / "logs", "evaluate")
    store = ExperimentStore(Path(config.io.model_dir))
    experiment_id = args.experiment_id or pipeline.default_experiment_id(config)
    if args.exclude_uncertain is not None:
        config = dataclasses.replace(
            config,
            evaluation=dataclasses.replace(config.evaluation, exclude_uncertain=args.exclude_uncertain),
        )
    aggregate = pipeline.evaluate_experiment(
        config, store, experiment_id, uncertainty_threshold=args.uncertainty_threshold
    )
    print(f"{experiment_id}: accuracy {aggregate.accuracy:.4f} "
          f"F1 {aggregate.weighted_f1:.4f} over {aggregate.iterations} run(s)")
    return EXIT_OK


def cmd_compare(args) -> int:
    store = ExperimentStore(Path(args.store))
    summaries = store.list_experiments(args.scheme)
    if args.json:
        payload = json.dumps(summaries, indent=2)
        print(payload)
        if args.out:
            Path(args.out).write_text(payload + "\n")
        return EXIT_OK
    header = f"{'experiment':24} {'scheme':10} {'backbone':12} {'acc':>7} {'prec':>7} {'rec':>7} {'f1':>7} {'runs':>5}"
    lines = [header, "-" * len(header)]
    for s in summaries:
        agg = s["aggregate"]
        if agg:
            lines.append(
                f"{s['experiment_id']:24} {s['scheme']:10} {s['backbone']:12} "
                f"{agg['accuracy']:7.4f} {agg['weighted_precision']:7.4f} "
                f"{agg['weighted_recall']:7.4f} {agg['weighted_f1']:7.4f} "
                f"{agg['iterations']:5d}"
            )
        else:
            lines.append(f"{s['experiment_id']:24} {s['scheme']:10} {s['backbone']:12} {'(not evaluated)':>31}")
    output = "\n".join(lines)
    print(output)
    if args.out:
        Path(args.out).write_text(output + "\n")
    return EXIT_OK


def cmd_annotate_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(Path(args.root), Path(args.store) if args.store else None)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .demo import run_demo

    output_dir = Path(args.output_dir)
    if output_dir.exists() and any(output_dir.iterdir()):
        if args.no_overwrite:
            raise DataError(f"{output_dir} is not empty and --no-overwrite is set")
        log.info("reusing %s (contents will be overwritten deterministically)", output_dir)
    _setup_logging(output_dir / "logs", "demo")
    experiment_id, aggregate = run_demo(
        output_dir, n_images=args.images, repeats=args.repeats, epochs=args.epochs
    )
    print(f"demo experiment '{experiment_id}' evaluated:")
    print(f"  accuracy  {aggregate.accuracy:.4f}")
    print(f"  precision {aggregate.weighted_precision:.4f}")
    print(f"  recall    {aggregate.weighted_recall:.4f}")
    print(f"  F1        {aggregate.weighted_f1:.4f}")
    print(f"  iterations {aggregate.iterations}, mean certain {aggregate.mean_n_certain:.1f}, "
          f"mean excluded {aggregate.mean_n_excluded:.1f}")
    print(f"artifacts under {output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wildclass",
        description="Config-driven experimentation pipeline for camera-trap image classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="path to the experiment TOML file")

    p = sub.add_parser("detect", help="run the detector over an image folder")
    add_config(p)
    p.add_argument("--image-dir", default=None, help="defaults to io.data_dir")
    p.add_argument("--adapter", choices=["stub", "external"], default="stub")
    p.add_argument("--adapter-command", default=None,
                   help="command template for the external adapter; '{image}' is substituted")
    p.add_argument("--bbox-convention", default="relative_xywh",
                   choices=["relative_xywh", "absolute_xywh", "absolute_xyxy"])
    p.add_argument("--min-write-confidence", type=float, default=0.1)
    p.add_argument("--boxes-per-image", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("enrich", help="merge a metadata table into the annotations")
    add_config(p)
    p.add_argument("--table", required=True, help="delimited text file with a header row")
    p.add_argument("--join-key", choices=["image_id", "bbox_id"], default="image_id")
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("preprocess", help="filter, crop, rescale; write the manifest")
    add_config(p)
    p.add_argument("--confidence-threshold", type=float, default=None)
    p.add_argument("--crop-strategy", choices=["shift", "pad"], default=None)
    p.add_argument("--target-dim", type=int, default=None)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="stratified train/test partition")
    add_config(p)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="two-stage training, repeated over seeds")
    add_config(p)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--experiment-id", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-set metrics, review logs, aggregate")
    add_config(p)
    p.add_argument("--experiment-id", default=None)
    p.add_argument("--uncertainty-threshold", type=float, default=None)
    p.add_argument("--exclude-uncertain", dest="exclude_uncertain", action="store_true", default=None)
    p.add_argument("--include-uncertain", dest="exclude_uncertain", action="store_false")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="tabular cross-experiment summary")
    p.add_argument("--store", required=True, help="experiment store root (io.model_dir)")
    p.add_argument("--scheme", default=None, help="filter by target scheme")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--out", default=None, help="also write the summary to this file")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("annotate-serve", help="serve the annotation/review API + UI")
    p.add_argument("--root", required=True, help="directory containing image dataset folders")
    p.add_argument("--store", default=None, help="experiment store root for results pages")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8501)
    p.set_defaults(func=cmd_annotate_serve)

    p = sub.add_parser("demo", help="end-to-end run on bundled synthetic data")
    p.add_argument("--output-dir", default="demo_output")
    p.add_argument("--images", type=int, default=200)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--no-overwrite", action="store_true")
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc} (see the stage log under the output directory)", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc} (see the stage log under the output directory)", file=sys.stderr)
        return EXIT_TRAINING
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except WildclassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
