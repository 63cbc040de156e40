"""Detector adapters, folder detection runs, and metadata enrichment.

The detector itself is pluggable: a deterministic stub keeps tests and the
demo independent of model weights, while the external-process adapter wraps
a real detector binary. Both feed the unified detections schema.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import logging
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol

import numpy as np

from .data import AnnotationSet, BboxRel, Detection, normalize_bbox, write_detections
from .errors import DataError, DuplicateJoinKey, EmptyDirectory
from .util import atomic_write_json

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".webp")

# (category, bbox relative xywh, confidence)
RawBox = tuple[int, BboxRel, float]


class DetectorAdapter(Protocol):
    """Minimal detector interface: one image path in, raw boxes out."""

    name: str
    version: str

    def detect(self, image_path: Path) -> list[RawBox]: ...


class StubDetector:
    """Deterministic fake detector: boxes derived from the image content hash.

    Identical files always produce identical boxes, which makes folder runs
    reproducible byte-for-byte without any model weights.
    """

    name = "stub"
    version = "1"

    def __init__(self, boxes_per_image: int = 1):
        self.boxes_per_image = boxes_per_image

    def detect(self, image_path: Path) -> list[RawBox]:
        from PIL import Image

        with Image.open(image_path) as img:  # unreadable files must fail here
            img.verify()
        digest = hashlib.sha256(Path(image_path).read_bytes()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        boxes: list[RawBox] = []
        for _ in range(self.boxes_per_image):
            w = float(rng.uniform(0.2, 0.5))
            h = float(rng.uniform(0.2, 0.5))
            x = float(rng.uniform(0.0, 1.0 - w))
            y = float(rng.uniform(0.0, 1.0 - h))
            conf = float(rng.uniform(0.5, 1.0))
            boxes.append((0, (x, y, w, h), conf))
        return boxes


class ScriptedDetector:
    """Replays a fixed mapping image_id -> raw boxes (tests, demo data)."""

    name = "scripted"
    version = "1"

    def __init__(self, boxes: Mapping[str, list[RawBox]]):
        self.boxes = dict(boxes)

    def detect(self, image_path: Path) -> list[RawBox]:
        return list(self.boxes.get(Path(image_path).stem, []))


class ExternalProcessDetector:
    """Invokes a detector command per image and parses its JSON stdout.

    The command is a template list where "{image}" is replaced by the image
    path. Expected output: a JSON list of {"category", "bbox", "conf"}
    records. Detector-native categories are remapped (default 1 -> 0 so the
    common "1 = animal" convention lands on the unified "0 = animal"), and
    boxes are normalized from the declared convention.
    """

    name = "external"
    version = "1"

    def __init__(
        self,
        command: list[str],
        bbox_convention: str = "relative_xywh",
        category_map: Mapping[int, int] | None = None,
    ):
        self.command = list(command)
        self.bbox_convention = bbox_convention
        self.category_map = dict(category_map) if category_map is not None else {1: 0}

    def detect(self, image_path: Path) -> list[RawBox]:
        from PIL import Image

        cmd = [arg.replace("{image}", str(image_path)) for arg in self.command]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise DataError(f"detector command failed ({proc.returncode}): {proc.stderr.strip()}")
        try:
            records = json.loads(proc.stdout)
        except json.JSONDecodeError as exc:
            raise DataError(f"detector output not parseable: {exc}") from exc
        with Image.open(image_path) as img:
            dims = img.size
        boxes: list[RawBox] = []
        for rec in records:
            bbox = normalize_bbox(tuple(rec["bbox"]), self.bbox_convention, dims)
            category = self.category_map.get(int(rec["category"]), int(rec["category"]))
            boxes.append((category, bbox, float(rec["conf"])))
        return boxes


def _list_images(image_dir: Path) -> list[Path]:
    return sorted(
        (p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS),
        key=lambda p: str(p),
    )


def run_detection(
    image_dir: Path,
    adapter: DetectorAdapter,
    min_write_confidence: float = 0.1,
    out_path: Path | None = None,
) -> tuple[list[Detection], dict]:
    """Run the adapter over a folder and write the unified detections file.

    Ordering is deterministic: lexicographic image path, then descending
    confidence within an image. bbox_id = image_id + "#" + ordinal. Images
    the adapter cannot read are skipped with a warning and listed in the
    sidecar report, as are images yielding zero boxes.
    """
    image_dir = Path(image_dir)
    images = _list_images(image_dir)
    if not images:
        raise EmptyDirectory(f"no readable images in {image_dir}")
    out_path = Path(out_path) if out_path else image_dir / "detections.json"

    detections: list[Detection] = []
    skipped: list[dict] = []
    empty: list[str] = []
    for path in images:
        image_id = path.stem
        try:
            raw = adapter.detect(path)
        except DataError:
            raise
        except Exception as exc:  # unreadable image or adapter hiccup: skip, report
            log.warning("skipping unreadable image %s: %s", path, exc)
            skipped.append({"image_path": str(path.relative_to(image_dir)), "reason": str(exc)})
            continue
        kept = [b for b in raw if b[2] >= min_write_confidence]
        kept.sort(key=lambda b: (-b[2], b[1]))
        if not kept:
            empty.append(str(path.relative_to(image_dir)))
            continue
        for ordinal, (category, bbox, conf) in enumerate(kept):
            det = Detection(
                bbox_id=f"{image_id}#{ordinal}",
                image_id=image_id,
                image_path=str(path.relative_to(image_dir)),
                category=int(category),
                bbox=tuple(float(v) for v in bbox),
                confidence=float(conf),
            )
            det.validate()
            detections.append(det)

    write_detections(detections, out_path)
    report = {
        "adapter": {"name": adapter.name, "version": adapter.version},
        "n_images": len(images),
        "n_detections": len(detections),
        "min_write_confidence": min_write_confidence,
        "skipped_images": skipped,
        "images_without_detections": empty,
    }
    atomic_write_json(out_path.with_name(out_path.stem + ".report.json"), report)
    return detections, report


@dataclass(frozen=True)
class MetadataTable:
    """Rows of key/value strings keyed by image_id or bbox_id."""

    join_key: str
    rows: Mapping[str, Mapping[str, str]] = field(default_factory=dict)


def load_metadata_table(path: Path, join_key: str) -> MetadataTable:
    """Read a delimited text file (header row) into a MetadataTable."""
    if join_key not in ("image_id", "bbox_id"):
        raise DataError(f"join key must be image_id or bbox_id, got '{join_key}'")
    rows: dict[str, dict[str, str]] = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or join_key not in reader.fieldnames:
            raise DataError(f"metadata table must have a '{join_key}' column")
        for rec in reader:
            key = rec.pop(join_key)
            if key in rows:
                raise DuplicateJoinKey(f"duplicate {join_key} '{key}' in metadata table")
            rows[key] = {k: v for k, v in rec.items() if v is not None}
    return MetadataTable(join_key=join_key, rows=rows)


def enrich(
    detections: Iterable[Detection],
    annotations: AnnotationSet,
    table: MetadataTable,
) -> AnnotationSet:
    """Attach table rows to matching detections' metadata.

    Detection fields are never touched; only annotation metadata grows.
    Key collisions overwrite the old value with a logged warning.
    """
    result = annotations
    for det in detections:
        key = det.image_id if table.join_key == "image_id" else det.bbox_id
        row = table.rows.get(key)
        if row is None:
            continue
        existing = result.metadata_for(det.bbox_id)
        for k in row:
            if k in existing and existing[k] != row[k]:
                log.warning(
                    "metadata key '%s' overwritten for %s ('%s' -> '%s')",
                    k, det.bbox_id, existing[k], row[k],
                )
        result = result.with_metadata(det.bbox_id, row)
    return result


def derive_season(date: datetime.date) -> str:
    """May through September is summer; every other month is winter."""
    return "summer" if 5 <= date.month <= 9 else "winter"
