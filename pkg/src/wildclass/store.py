"""File-backed experiment store: configs, runs, results, aggregates.

Layout (a stable contract; the CLI and the API server both read it):

    {root}/{experiment_id}/
        config.toml
        record.json                  id, fingerprints, created, status, run ids
        runs/{run_id}/
            train_record.json
            result.json
            errors.json / uncertain.json
            best.ckpt
        aggregate.json

Everything is reconstructable from the directory tree alone; writes are
atomic and stray *.tmp files from interrupted saves are ignored on load.
"""

from __future__ import annotations

import datetime
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import ExperimentConfig, dump_toml, fingerprint, load_config
from .errors import DataError, DuplicateRunId
from .evaluation import ExperimentAggregate, RunResult, aggregate_runs, record_review_sets
from .training import TrainRecord, load_train_record
from .util import atomic_write_json, atomic_write_text, read_json

log = logging.getLogger(__name__)

STATUSES = ("preprocessed", "trained", "evaluated")


@dataclass
class ExperimentRecord:
    experiment_id: str
    config_fingerprint: str
    created: str
    status: str = "preprocessed"
    run_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "config_fingerprint": self.config_fingerprint,
            "created": self.created,
            "status": self.status,
            "run_ids": list(self.run_ids),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentRecord":
        return cls(
            experiment_id=doc["experiment_id"],
            config_fingerprint=doc["config_fingerprint"],
            created=doc["created"],
            status=doc.get("status", "preprocessed"),
            run_ids=list(doc.get("run_ids", [])),
        )


class ExperimentStore:
    def __init__(self, root: Path):
        self.root = Path(root)

    def experiment_dir(self, experiment_id: str) -> Path:
        return self.root / experiment_id

    def create_experiment(self, experiment_id: str, config: ExperimentConfig) -> ExperimentRecord:
        exp_dir = self.experiment_dir(experiment_id)
        exp_dir.mkdir(parents=True, exist_ok=True)
        record_path = exp_dir / "record.json"
        if record_path.exists():
            record = self.load_record(experiment_id)
            if record.config_fingerprint != fingerprint(config):
                raise DataError(
                    f"experiment '{experiment_id}' exists with a different config"
                )
            return record
        atomic_write_text(exp_dir / "config.toml", dump_toml(config))
        record = ExperimentRecord(
            experiment_id=experiment_id,
            config_fingerprint=fingerprint(config),
            created=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )
        atomic_write_json(record_path, record.to_dict())
        return record

    def load_record(self, experiment_id: str) -> ExperimentRecord:
        return ExperimentRecord.from_dict(read_json(self.experiment_dir(experiment_id) / "record.json"))

    def load_experiment_config(self, experiment_id: str) -> ExperimentConfig:
        return load_config(self.experiment_dir(experiment_id) / "config.toml")

    def _save_record(self, record: ExperimentRecord) -> None:
        atomic_write_json(self.experiment_dir(record.experiment_id) / "record.json", record.to_dict())

    def set_status(self, experiment_id: str, status: str) -> None:
        if status not in STATUSES:
            raise ValueError(f"unknown status '{status}'")
        record = self.load_record(experiment_id)
        record.status = status
        self._save_record(record)

    def run_dir(self, experiment_id: str, run_id: str) -> Path:
        return self.experiment_dir(experiment_id) / "runs" / run_id

    def save_run(self, experiment_id: str, train_record: TrainRecord, result: RunResult,
                 overwrite: bool = False) -> None:
        """Persist one run's record + result; run ids are unique per experiment.

        overwrite permits idempotent re-evaluation from the CLI; the default
        refuses duplicates.
        """
        record = self.load_record(experiment_id)
        if train_record.run_id in record.run_ids:
            if not overwrite:
                raise DuplicateRunId(
                    f"run '{train_record.run_id}' already stored for '{experiment_id}'"
                )
        else:
            record.run_ids.append(train_record.run_id)
        run_dir = self.run_dir(experiment_id, train_record.run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        atomic_write_json(run_dir / "train_record.json", train_record.to_dict())
        atomic_write_json(run_dir / "result.json", result.to_dict())
        errors, uncertain = record_review_sets(result.records)
        atomic_write_json(run_dir / "errors.json", [self._review_entry(r) for r in errors])
        atomic_write_json(run_dir / "uncertain.json", [self._review_entry(r) for r in uncertain])
        self._save_record(record)

    @staticmethod
    def _review_entry(r) -> dict:
        return {
            "bbox_id": r.bbox_id,
            "crop_path": r.metadata.get("crop_path", ""),
            "true_label": r.true_label,
            "predicted_label": r.predicted_label,
            "confidence": r.confidence,
            "run_id": r.run_id,
            "metadata": dict(r.metadata),
        }

    def load_result(self, experiment_id: str, run_id: str) -> RunResult:
        return RunResult.from_dict(read_json(self.run_dir(experiment_id, run_id) / "result.json"))

    def load_train_record(self, experiment_id: str, run_id: str) -> TrainRecord:
        return load_train_record(self.run_dir(experiment_id, run_id) / "train_record.json")

    def save_aggregate(self, experiment_id: str) -> ExperimentAggregate:
        record = self.load_record(experiment_id)
        results = [self.load_result(experiment_id, rid) for rid in record.run_ids]
        aggregate = aggregate_runs(results)
        atomic_write_json(self.experiment_dir(experiment_id) / "aggregate.json", aggregate.to_dict())
        return aggregate

    def load_aggregate(self, experiment_id: str) -> ExperimentAggregate | None:
        path = self.experiment_dir(experiment_id) / "aggregate.json"
        if not path.exists():
            return None
        return ExperimentAggregate.from_dict(read_json(path))

    def experiment_ids(self) -> list[str]:
        if not self.root.exists():
            return []
        ids = []
        for child in self.root.iterdir():
            if child.is_dir() and (child / "record.json").exists():
                ids.append(child.name)
        return ids

    def list_experiments(self, scheme_filter: str | None = None) -> list[dict]:
        """Experiment summaries with aggregate metrics, sorted by creation time."""
        summaries = []
        for experiment_id in self.experiment_ids():
            try:
                record = self.load_record(experiment_id)
                config = self.load_experiment_config(experiment_id)
            except (json.JSONDecodeError, KeyError, OSError) as exc:
                log.warning("skipping unreadable experiment '%s': %s", experiment_id, exc)
                continue
            scheme = config.training.target_scheme
            if scheme_filter and scheme != scheme_filter:
                continue
            aggregate = self.load_aggregate(experiment_id)
            summaries.append(
                {
                    "experiment_id": experiment_id,
                    "created": record.created,
                    "status": record.status,
                    "scheme": scheme,
                    "backbone": config.training.backbone,
                    "config_fingerprint": record.config_fingerprint,
                    "run_ids": list(record.run_ids),
                    "aggregate": aggregate.to_dict() if aggregate else None,
                }
            )
        summaries.sort(key=lambda s: s["created"])
        return summaries
