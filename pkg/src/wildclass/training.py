"""Two-stage transfer-learning / finetuning loop over manifest crops.

Stage one trains only the classifier head with the whole backbone frozen;
stage two additionally unfreezes the configured number of trailing
backbone blocks. The best-validation-accuracy checkpoint across both
stages is retained. Everything is seeded: model init from the run seed,
batch order from (run seed, epoch), augmentation from
(run seed, epoch, sample index).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .augment import AugmentationPolicy, augment
from .config import ExperimentConfig, StageConfig, fingerprint
from .data import DatasetManifest, ManifestEntry
from .errors import EmptySplit, NonFiniteLoss
from .models import ClassifierModel, build_model, normalize_input
from .split import SplitAssignment, train_val_split
from .util import atomic_write_json, read_json, stable_seed

log = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainRecord:
    run_id: str
    seed: int
    config_fingerprint: str
    experiment_fingerprint: str
    stage_histories: dict[str, list[EpochStats]] = field(default_factory=dict)
    checkpoint_path: str = ""
    best_val_accuracy: float = 0.0
    best_stage: str = ""
    best_epoch: int = -1

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "config_fingerprint": self.config_fingerprint,
            "experiment_fingerprint": self.experiment_fingerprint,
            "stage_histories": {
                stage: [vars(e) for e in hist] for stage, hist in self.stage_histories.items()
            },
            "checkpoint_path": self.checkpoint_path,
            "best_val_accuracy": self.best_val_accuracy,
            "best_stage": self.best_stage,
            "best_epoch": self.best_epoch,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainRecord":
        rec = cls(
            run_id=doc["run_id"],
            seed=int(doc["seed"]),
            config_fingerprint=doc["config_fingerprint"],
            experiment_fingerprint=doc["experiment_fingerprint"],
            checkpoint_path=doc.get("checkpoint_path", ""),
            best_val_accuracy=float(doc.get("best_val_accuracy", 0.0)),
            best_stage=doc.get("best_stage", ""),
            best_epoch=int(doc.get("best_epoch", -1)),
        )
        rec.stage_histories = {
            stage: [EpochStats(**e) for e in hist]
            for stage, hist in doc.get("stage_histories", {}).items()
        }
        return rec


class CropDataset:
    """Loads manifest crops once, serves augmented normalized batches.

    Augmentation seeds derive from (run_seed, epoch, sample index), so the
    results are independent of batching or worker arrangement.
    """

    def __init__(self, entries: Sequence[ManifestEntry], crops_root: Path,
                 policy: AugmentationPolicy, run_seed: int):
        from PIL import Image

        self.entries = list(entries)
        self.policy = policy
        self.run_seed = run_seed
        self.images: list[np.ndarray] = []
        self.labels = np.array([e.class_index for e in self.entries], dtype=np.int64)
        for e in self.entries:
            with Image.open(Path(crops_root) / e.crop_path) as img:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
            self.images.append(arr)

    def __len__(self) -> int:
        return len(self.entries)

    def batch(self, indices: Sequence[int], epoch: int, train: bool) -> tuple[torch.Tensor, torch.Tensor]:
        arrays = []
        for idx in indices:
            img = self.images[idx]
            if train and self.policy.level != "none":
                img = augment(img, self.policy, stable_seed(self.run_seed, epoch, int(idx)))
            arrays.append(img)
        x = normalize_input(np.stack(arrays))
        y = torch.from_numpy(self.labels[np.asarray(indices)])
        return x, y


def classification_loss(logits: torch.Tensor, labels: torch.Tensor,
                        class_weights: torch.Tensor | None = None) -> torch.Tensor:
    """Cross-entropy objective shared by both training stages."""
    return F.cross_entropy(logits, labels, weight=class_weights)


def inverse_frequency_weights(labels: np.ndarray, g: int) -> torch.Tensor:
    counts = np.bincount(labels, minlength=g).astype(np.float64)
    weights = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0)
    weights = weights / weights.sum() * (counts > 0).sum()
    return torch.tensor(weights, dtype=torch.float32)


def _evaluate_split(model: ClassifierModel, dataset: CropDataset, batch_size: int,
                    class_weights: torch.Tensor | None) -> tuple[float, float]:
    model.eval()
    losses, correct = [], 0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            idx = range(start, min(start + batch_size, len(dataset)))
            x, y = dataset.batch(idx, epoch=0, train=False)
            logits = model(x)
            losses.append(float(classification_loss(logits, y, class_weights)) * len(y))
            correct += int((logits.argmax(dim=1) == y).sum())
    n = len(dataset)
    return (sum(losses) / n, correct / n)


def _run_stage(
    model: ClassifierModel,
    stage_name: str,
    stage: StageConfig,
    unfrozen_depth: int,
    train_ds: CropDataset,
    val_ds: CropDataset,
    run_seed: int,
    epoch_offset: int,
    class_weights: torch.Tensor | None,
    best: dict,
) -> list[EpochStats]:
    model.set_trainable(unfrozen_depth)
    params = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.SGD(params, lr=stage.learning_rate, momentum=0.9)
    history: list[EpochStats] = []
    for epoch in range(stage.epochs):
        global_epoch = epoch_offset + epoch
        model.train()
        rng = np.random.default_rng(stable_seed(run_seed, "order", global_epoch))
        order = rng.permutation(len(train_ds))
        batch_losses = []
        n_batches = math.ceil(len(train_ds) / stage.batch_size)
        for b in range(n_batches):
            idx = order[b * stage.batch_size : (b + 1) * stage.batch_size]
            x, y = train_ds.batch(idx, epoch=global_epoch, train=True)
            logits = model(x)
            loss = classification_loss(logits, y, class_weights)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(stage_name, epoch, b, stage.learning_rate)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            batch_losses.append(float(loss.detach()) * len(y))
        train_loss = sum(batch_losses) / len(train_ds)
        val_loss, val_acc = _evaluate_split(model, val_ds, stage.batch_size, class_weights)
        history.append(EpochStats(epoch=epoch, train_loss=train_loss,
                                  val_loss=val_loss, val_accuracy=val_acc))
        log.info("%s epoch %d: train_loss=%.4f val_loss=%.4f val_acc=%.4f",
                 stage_name, epoch, train_loss, val_loss, val_acc)
        if val_acc > best["val_accuracy"]:
            best.update(
                val_accuracy=val_acc,
                stage=stage_name,
                epoch=epoch,
                state={k: v.detach().clone() for k, v in model.state_dict().items()},
            )
    return history


def train_run(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    assignment: SplitAssignment,
    run_index: int,
    run_dir: Path,
) -> TrainRecord:
    """Train one seeded run and write its best checkpoint + record to run_dir."""
    tc = config.training
    run_seed = tc.seed + run_index
    run_id = f"run-{run_index:03d}"

    train_tags = set(assignment.ids_for("train"))
    train_pool = [e for e in manifest.entries if e.bbox_id in train_tags]
    if not train_pool:
        raise EmptySplit("no training entries in split assignment")
    train_entries, val_entries = train_val_split(train_pool, tc.val_fraction, run_seed)
    if not train_entries or not val_entries:
        raise EmptySplit(
            f"degenerate train/val split ({len(train_entries)}/{len(val_entries)})"
        )

    torch.manual_seed(run_seed)
    g = len(manifest.scheme.labels)
    model = build_model(tc.backbone, g, pretrained=tc.pretrained,
                        allow_random_fallback=tc.allow_random_fallback)

    policy = AugmentationPolicy.for_level(tc.augmentation)
    crops_root = Path(config.io.output_dir)
    train_ds = CropDataset(train_entries, crops_root, policy, run_seed)
    val_ds = CropDataset(val_entries, crops_root, policy, run_seed)

    class_weights = None
    if tc.class_weights:
        class_weights = inverse_frequency_weights(train_ds.labels, g)

    best = {"val_accuracy": -1.0, "stage": "", "epoch": -1, "state": None}
    histories = {}
    histories["transfer"] = _run_stage(
        model, "transfer", tc.transfer_stage, unfrozen_depth=0,
        train_ds=train_ds, val_ds=val_ds, run_seed=run_seed, epoch_offset=0,
        class_weights=class_weights, best=best,
    )
    histories["finetune"] = _run_stage(
        model, "finetune", tc.finetune_stage,
        unfrozen_depth=tc.finetune_stage.unfrozen_depth,
        train_ds=train_ds, val_ds=val_ds, run_seed=run_seed,
        epoch_offset=tc.transfer_stage.epochs,
        class_weights=class_weights, best=best,
    )

    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = run_dir / "best.ckpt"
    torch.save(
        {
            "state_dict": best["state"],
            "backbone": tc.backbone,
            "num_classes": g,
            "labels": list(manifest.scheme.labels),
            "run_seed": run_seed,
        },
        ckpt_path,
    )

    record = TrainRecord(
        run_id=run_id,
        seed=run_seed,
        config_fingerprint=fingerprint(config),
        experiment_fingerprint=fingerprint(config, ignore_seed=True),
        stage_histories=histories,
        checkpoint_path=str(ckpt_path),
        best_val_accuracy=best["val_accuracy"],
        best_stage=best["stage"],
        best_epoch=best["epoch"],
    )
    atomic_write_json(run_dir / "train_record.json", record.to_dict())
    return record


def load_checkpoint(ckpt_path: Path) -> ClassifierModel:
    """Rebuild a model from a saved checkpoint (random init, then weights)."""
    payload = torch.load(ckpt_path, map_location="cpu", weights_only=False)
    model = build_model(payload["backbone"], payload["num_classes"], pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def load_train_record(path: Path) -> TrainRecord:
    return TrainRecord.from_dict(read_json(path))
