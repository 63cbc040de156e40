"""Stage orchestration shared by the CLI and the demo.

Wires manifest + split assignment + checkpoints into RunResults and the
cross-run aggregate, and owns the experiment-directory conventions.
"""

from __future__ import annotations

import datetime
import logging
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig, fingerprint
from .data import DatasetManifest, load_manifest, write_manifest
from .detect import derive_season
from .errors import EmptySplit
from .evaluation import ExperimentAggregate, PredictionRecord, RunResult, evaluate_records
from .models import normalize_input
from .split import (
    TARGET_ATTRIBUTE,
    SplitAssignment,
    load_assignment,
    save_assignment,
    stratified_split,
)
from .store import ExperimentStore
from .training import CropDataset, TrainRecord, load_checkpoint, train_run
from .augment import AugmentationPolicy

log = logging.getLogger(__name__)


def manifest_path(config: ExperimentConfig) -> Path:
    return Path(config.io.output_dir) / "manifest.json"


def assignment_path(config: ExperimentConfig) -> Path:
    return Path(config.io.output_dir) / "split.json"


def default_experiment_id(config: ExperimentConfig) -> str:
    return f"{config.training.target_scheme}-{fingerprint(config, ignore_seed=True)[:8]}"


def run_split(config: ExperimentConfig, manifest: DatasetManifest) -> SplitAssignment:
    """Stratified train/test split; persists the assignment and tags the manifest."""
    tc = config.training
    attribute = tc.stratify_attribute or TARGET_ATTRIBUTE
    assignment = stratified_split(manifest, tc.test_fraction, attribute, tc.seed)
    save_assignment(assignment, assignment_path(config))
    tagged = manifest.with_split(assignment.assignment)
    write_manifest(tagged, manifest_path(config))
    return assignment


def season_value(record: PredictionRecord) -> str | None:
    """Stratum value for 'season': stored metadata, else derived from timestamp."""
    season = record.metadata.get("season")
    if season is not None:
        return season
    ts = record.metadata.get("timestamp")
    if ts is None:
        return None
    try:
        return derive_season(datetime.date.fromisoformat(ts[:10]))
    except ValueError:
        return None


def predict_test_set(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    assignment: SplitAssignment,
    ckpt_path: Path,
    run_id: str,
) -> list[PredictionRecord]:
    """Deterministic test-set inference for one checkpoint."""
    test_ids = set(assignment.ids_for("test"))
    test_entries = [e for e in manifest.entries if e.bbox_id in test_ids]
    if not test_entries:
        raise EmptySplit("no test entries in split assignment")
    model = load_checkpoint(ckpt_path)
    labels = manifest.scheme.labels
    dataset = CropDataset(test_entries, Path(config.io.output_dir),
                          AugmentationPolicy.for_level("none"), run_seed=0)
    records: list[PredictionRecord] = []
    batch_size = config.training.transfer_stage.batch_size
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = range(start, min(start + batch_size, len(dataset)))
            x = normalize_input(np.stack([dataset.images[i] for i in idx]))
            probs = model.predict_proba(x).cpu().numpy()
            hard = np.argmax(probs, axis=1)
            for j, i in enumerate(idx):
                entry = dataset.entries[i]
                metadata = dict(entry.metadata)
                metadata["crop_path"] = entry.crop_path
                records.append(
                    PredictionRecord(
                        bbox_id=entry.bbox_id,
                        true_label=entry.label,
                        predicted_label=labels[int(hard[j])],
                        confidence=float(probs[j, hard[j]]),
                        certain=True,  # re-flagged by the uncertainty threshold
                        run_id=run_id,
                        metadata=metadata,
                    )
                )
    return records


def evaluate_run(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    assignment: SplitAssignment,
    ckpt_path: Path,
    run_id: str,
    uncertainty_threshold: float | None = None,
) -> RunResult:
    ev = config.evaluation
    ut = ev.uncertainty_threshold if uncertainty_threshold is None else uncertainty_threshold
    records = predict_test_set(config, manifest, assignment, ckpt_path, run_id)
    value_fn = season_value if ev.stratify_attribute == "season" else None
    return evaluate_records(
        run_id=run_id,
        records=records,
        scheme=manifest.scheme,
        ut=ut,
        exclude_uncertain=ev.exclude_uncertain,
        experiment_fingerprint=fingerprint(config, ignore_seed=True),
        stratify_attribute=ev.stratify_attribute,
        value_fn=value_fn,
    )


def train_experiment(
    config: ExperimentConfig,
    store: ExperimentStore,
    experiment_id: str | None = None,
) -> tuple[str, list[TrainRecord]]:
    """Train config.training.repeats runs with seeds base, base+1, ..."""
    manifest = load_manifest(manifest_path(config))
    assignment = load_assignment(assignment_path(config))
    experiment_id = experiment_id or default_experiment_id(config)
    store.create_experiment(experiment_id, config)
    records = []
    for run_index in range(config.training.repeats):
        run_id = f"run-{run_index:03d}"
        run_dir = store.run_dir(experiment_id, run_id)
        record = train_run(config, manifest, assignment, run_index, run_dir)
        records.append(record)
        log.info("trained %s/%s: best val acc %.4f", experiment_id, run_id,
                 record.best_val_accuracy)
    store.set_status(experiment_id, "trained")
    return experiment_id, records


def evaluate_experiment(
    config: ExperimentConfig,
    store: ExperimentStore,
    experiment_id: str,
    uncertainty_threshold: float | None = None,
) -> ExperimentAggregate:
    """Evaluate every trained run of the experiment and write the aggregate."""
    manifest = load_manifest(manifest_path(config))
    assignment = load_assignment(assignment_path(config))
    runs_dir = store.experiment_dir(experiment_id) / "runs"
    run_ids = sorted(d.name for d in runs_dir.iterdir() if (d / "best.ckpt").exists())
    if not run_ids:
        raise EmptySplit(f"no trained runs found under {runs_dir}")
    for run_id in run_ids:
        run_dir = store.run_dir(experiment_id, run_id)
        result = evaluate_run(config, manifest, assignment, run_dir / "best.ckpt",
                              run_id, uncertainty_threshold)
        train_record = store.load_train_record(experiment_id, run_id)
        store.save_run(experiment_id, train_record, result, overwrite=True)
    aggregate = store.save_aggregate(experiment_id)
    store.set_status(experiment_id, "evaluated")
    return aggregate
