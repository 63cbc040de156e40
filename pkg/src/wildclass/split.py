"""Stratified train/test and per-run train/validation partitions.

Per-stratum held-out counts are floor(fraction*n + 0.5) exactly (half-up),
which keeps every stratum within half an entry of the target fraction and
makes the assignment a pure, seed-deterministic function of its inputs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .data import DatasetManifest, ManifestEntry
from .errors import MissingAttribute
from .util import atomic_write_json, read_json, round_half_up, stable_seed

log = logging.getLogger(__name__)

TARGET_ATTRIBUTE = "__target__"  # stratify on the manifest's target label


@dataclass(frozen=True)
class SplitAssignment:
    """bbox_id -> {train, val, test} plus the inputs that produced it."""

    assignment: Mapping[str, str]
    seed: int
    attribute: str
    fraction: float
    straddling_image_fraction: float | None = None

    def ids_for(self, tag: str) -> list[str]:
        return [k for k, v in self.assignment.items() if v == tag]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "attribute": self.attribute,
            "fraction": self.fraction,
            "straddling_image_fraction": self.straddling_image_fraction,
            "assignment": {k: self.assignment[k] for k in sorted(self.assignment)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitAssignment":
        return cls(
            assignment=dict(doc["assignment"]),
            seed=int(doc["seed"]),
            attribute=doc["attribute"],
            fraction=float(doc["fraction"]),
            straddling_image_fraction=doc.get("straddling_image_fraction"),
        )


def _attribute_value(entry: ManifestEntry, attribute: str) -> str | None:
    if attribute == TARGET_ATTRIBUTE:
        return entry.label
    return entry.metadata.get(attribute)


def _split_entries(
    entries: Sequence[ManifestEntry],
    fraction: float,
    attribute: str,
    seed: int,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Hold out round(fraction*n) per stratum; returns (kept A, held-out B)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    missing = [e.bbox_id for e in entries if _attribute_value(e, attribute) is None]
    if missing:
        raise MissingAttribute(attribute, missing)

    strata: dict[str, list[ManifestEntry]] = {}
    for e in entries:
        strata.setdefault(_attribute_value(e, attribute), []).append(e)

    held_ids: set[str] = set()
    for value in sorted(strata):
        members = sorted(strata[value], key=lambda e: e.bbox_id)
        if len(members) < 2:
            log.warning("stratum '%s'='%s' has %d entry(ies); split may be degenerate",
                        attribute, value, len(members))
        k = round_half_up(fraction * len(members))
        rng = np.random.default_rng(stable_seed(seed, attribute, value))
        order = rng.permutation(len(members))
        held_ids.update(members[i].bbox_id for i in order[:k])

    part_a = [e for e in entries if e.bbox_id not in held_ids]
    part_b = [e for e in entries if e.bbox_id in held_ids]
    return part_a, part_b


def stratified_split(
    manifest: DatasetManifest,
    fraction: float,
    attribute: str,
    seed: int,
) -> SplitAssignment:
    """80/20-style train/test partition, stratified on the given attribute.

    attribute may be TARGET_ATTRIBUTE (the default target-label
    stratification) or any metadata key present on every entry.
    """
    train, test = _split_entries(manifest.entries, fraction, attribute, seed)
    assignment = {e.bbox_id: "train" for e in train}
    assignment.update({e.bbox_id: "test" for e in test})

    # Boxes from one image may land on both sides; the potential leakage
    # is surfaced as a report metric rather than enforced away.
    by_image: dict[str, set[str]] = {}
    for e in manifest.entries:
        image_id = e.bbox_id.split("#", 1)[0]
        by_image.setdefault(image_id, set()).add(assignment[e.bbox_id])
    straddling = sum(1 for tags in by_image.values() if len(tags) > 1)
    frac = straddling / len(by_image) if by_image else 0.0

    return SplitAssignment(
        assignment=assignment,
        seed=seed,
        attribute=attribute,
        fraction=fraction,
        straddling_image_fraction=frac,
    )


def train_val_split(
    train_entries: Sequence[ManifestEntry],
    val_fraction: float,
    run_seed: int,
) -> tuple[list[ManifestEntry], list[ManifestEntry]]:
    """Per-run 85/15-style split of the training partition, stratified on the
    target class. Drawn once per run and fixed for all epochs."""
    return _split_entries(train_entries, val_fraction, TARGET_ATTRIBUTE, run_seed)


def save_assignment(assignment: SplitAssignment, path: Path) -> None:
    atomic_write_json(Path(path), assignment.to_dict())


def load_assignment(path: Path) -> SplitAssignment:
    return SplitAssignment.from_dict(read_json(path))
