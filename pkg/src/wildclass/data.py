"""Unified on-disk data model: detections, class schemes, annotations, manifests.

Every stage of the pipeline reads and writes these types. Detections and
annotations live as JSON files next to the image directory; the dataset
manifest is written by preprocessing. All types are immutable values after
construction (updates return new objects) and every writer is atomic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from .errors import MalformedFile, OutOfBounds, SchemaViolation
from .util import atomic_write_text, dump_json, read_json

# Absolute slack allowed on bbox extent checks; detector floats are only
# approximately normalized.
BBOX_TOL = 1e-9

_DETECTION_FIELDS = ("bbox_id", "image_id", "image_path", "category", "bbox", "confidence")

BboxRel = tuple[float, float, float, float]


@dataclass(frozen=True)
class Detection:
    """One detector bounding box tied to an image.

    bbox is (x_min, y_min, width, height) as fractions of the image
    dimensions. category follows the unified schema where 0 = animal.
    extra carries unknown input fields so files round-trip unchanged.
    """

    bbox_id: str
    image_id: str
    image_path: str
    category: int
    bbox: BboxRel
    confidence: float
    extra: Mapping[str, object] = field(default_factory=dict)

    def validate(self) -> None:
        x, y, w, h = self.bbox
        if w <= 0 or h <= 0:
            raise SchemaViolation("bbox width/height must be > 0", self.bbox_id, "bbox")
        if x < 0 or y < 0 or x + w > 1 + BBOX_TOL or y + h > 1 + BBOX_TOL:
            raise SchemaViolation("bbox exceeds [0,1] extent", self.bbox_id, "bbox")
        if not 0.0 <= self.confidence <= 1.0:
            raise SchemaViolation("confidence outside [0,1]", self.bbox_id, "confidence")


def _detection_from_record(rec: dict) -> Detection:
    if not isinstance(rec, dict):
        raise MalformedFile(f"detection record is not an object: {rec!r}")
    bbox_id = rec.get("bbox_id")
    for name in _DETECTION_FIELDS:
        if name not in rec:
            raise SchemaViolation(f"missing field '{name}'", bbox_id, name)
    bbox = rec["bbox"]
    if not (isinstance(bbox, (list, tuple)) and len(bbox) == 4):
        raise SchemaViolation("bbox must be a 4-element list", bbox_id, "bbox")
    try:
        bbox = tuple(float(v) for v in bbox)
        confidence = float(rec["confidence"])
        category = int(rec["category"])
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"non-numeric field: {exc}", bbox_id, "bbox") from exc
    det = Detection(
        bbox_id=str(rec["bbox_id"]),
        image_id=str(rec["image_id"]),
        image_path=str(rec["image_path"]),
        category=category,
        bbox=bbox,
        confidence=confidence,
        extra={k: v for k, v in rec.items() if k not in _DETECTION_FIELDS},
    )
    det.validate()
    return det


def validate_detections(file_content: bytes) -> list[Detection]:
    """Parse and validate a detections file (JSON list of records).

    Unknown extra fields are preserved on each Detection for round-trip.
    Raises MalformedFile for unparseable input and SchemaViolation (with
    bbox_id and field name) for invariant breaches.
    """
    try:
        doc = json.loads(file_content.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFile(f"detections file not parseable: {exc}") from exc
    if not isinstance(doc, list):
        raise MalformedFile("detections file must be a top-level list")
    detections = [_detection_from_record(rec) for rec in doc]
    seen: set[str] = set()
    for det in detections:
        if det.bbox_id in seen:
            raise SchemaViolation("duplicate bbox_id", det.bbox_id, "bbox_id")
        seen.add(det.bbox_id)
    return detections


def detection_to_record(det: Detection) -> dict:
    rec = {
        "bbox_id": det.bbox_id,
        "image_id": det.image_id,
        "image_path": det.image_path,
        "category": det.category,
        "bbox": list(det.bbox),
        "confidence": det.confidence,
    }
    rec.update(det.extra)
    return rec


def write_detections(detections: Iterable[Detection], path: Path) -> None:
    atomic_write_text(Path(path), dump_json([detection_to_record(d) for d in detections]))


def load_detections(path: Path) -> list[Detection]:
    with open(path, "rb") as f:
        return validate_detections(f.read())


CONVENTIONS = ("relative_xywh", "absolute_xywh", "absolute_xyxy")
# Normalized boxes may exceed [0,1] by up to this much and get clamped;
# anything worse is rejected.
NORMALIZE_TOL = 1e-6


def normalize_bbox(
    coords: tuple[float, float, float, float],
    convention: str,
    image_dims: tuple[int, int],
) -> BboxRel:
    """Convert a bounding box in any supported convention to relative xywh.

    relative_xywh input is returned unchanged. Boxes that exceed [0,1] by
    at most 1e-6 are clamped; beyond that OutOfBounds is raised.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown bbox convention: {convention}")
    W, H = image_dims
    if W <= 0 or H <= 0:
        raise ValueError("image dimensions must be positive")
    a, b, c, d = (float(v) for v in coords)
    if convention == "relative_xywh":
        x, y, w, h = a, b, c, d
    elif convention == "absolute_xywh":
        x, y, w, h = a / W, b / H, c / W, d / H
    else:  # absolute_xyxy
        x, y, w, h = a / W, b / H, (c - a) / W, (d - b) / H
    if w <= 0 or h <= 0:
        raise OutOfBounds(f"degenerate box (w={w}, h={h})")
    if x < -NORMALIZE_TOL or y < -NORMALIZE_TOL or x + w > 1 + NORMALIZE_TOL or y + h > 1 + NORMALIZE_TOL:
        raise OutOfBounds(f"normalized box outside [0,1]: {(x, y, w, h)}")
    # Clamp the within-tolerance overshoot.
    x = min(max(x, 0.0), 1.0)
    y = min(max(y, 0.0), 1.0)
    w = min(w, 1.0 - x)
    h = min(h, 1.0 - y)
    return (x, y, w, h)


def denormalize_bbox(
    bbox: BboxRel, convention: str, image_dims: tuple[int, int]
) -> tuple[float, float, float, float]:
    """Inverse of normalize_bbox for the given convention."""
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown bbox convention: {convention}")
    W, H = image_dims
    x, y, w, h = bbox
    if convention == "relative_xywh":
        return (x, y, w, h)
    if convention == "absolute_xywh":
        return (x * W, y * H, w * W, h * H)
    return (x * W, y * H, (x + w) * W, (y + h) * H)


@dataclass(frozen=True)
class ClassScheme:
    """A classification target and its ordered label list.

    Label order is the canonical class index order everywhere downstream.
    """

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        if not self.labels:
            raise SchemaViolation(f"scheme '{self.name}' has no labels")
        if len(set(self.labels)) != len(self.labels):
            raise SchemaViolation(f"scheme '{self.name}' labels not distinct")
        object.__setattr__(self, "labels", tuple(self.labels))

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SchemaViolation(f"label '{label}' not in scheme '{self.name}'") from None


@dataclass(frozen=True)
class AnnotationSet:
    """Class schemes plus per-bounding-box labels and metadata.

    A missing / None value means "not yet labeled" — a distinct sentinel,
    so "unknown" can be an ordinary class label. The revision counter backs
    optimistic concurrency in the annotation API.
    """

    schemes: tuple[ClassScheme, ...] = ()
    records: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    metadata: Mapping[str, Mapping[str, str]] = field(default_factory=dict)
    revision: int = 0

    def scheme(self, name: str) -> ClassScheme:
        for s in self.schemes:
            if s.name == name:
                return s
        raise SchemaViolation(f"no scheme named '{name}'")

    def label_for(self, bbox_id: str, scheme_name: str) -> str | None:
        return self.records.get(bbox_id, {}).get(scheme_name)

    def metadata_for(self, bbox_id: str) -> Mapping[str, str]:
        return self.metadata.get(bbox_id, {})

    def with_label(self, bbox_id: str, scheme_name: str, label: str | None) -> "AnnotationSet":
        """Functional update; validates the label against the scheme."""
        scheme = self.scheme(scheme_name)
        if label is not None and label not in scheme.labels:
            raise SchemaViolation(f"label '{label}' not in scheme '{scheme_name}'", bbox_id, scheme_name)
        records = {k: dict(v) for k, v in self.records.items()}
        rec = records.setdefault(bbox_id, {})
        if label is None:
            rec.pop(scheme_name, None)
            if not rec:
                records.pop(bbox_id, None)
        else:
            rec[scheme_name] = label
        return replace(self, records=records, revision=self.revision + 1)

    def with_metadata(self, bbox_id: str, values: Mapping[str, str]) -> "AnnotationSet":
        metadata = {k: dict(v) for k, v in self.metadata.items()}
        metadata.setdefault(bbox_id, {}).update(values)
        return replace(self, metadata=metadata, revision=self.revision + 1)

    def with_schemes(self, schemes: Iterable[ClassScheme]) -> "AnnotationSet":
        return replace(self, schemes=tuple(schemes), revision=self.revision + 1)

    def validate_against(self, detections: Iterable[Detection]) -> None:
        """Every labeled value must be in its scheme; every bbox_id must resolve."""
        known = {d.bbox_id for d in detections}
        scheme_labels = {s.name: set(s.labels) for s in self.schemes}
        for bbox_id, rec in self.records.items():
            if bbox_id not in known:
                raise SchemaViolation("annotation for unknown bbox_id", bbox_id)
            for scheme_name, label in rec.items():
                if scheme_name not in scheme_labels:
                    raise SchemaViolation(f"no scheme named '{scheme_name}'", bbox_id, scheme_name)
                if label not in scheme_labels[scheme_name]:
                    raise SchemaViolation(f"label '{label}' not in scheme", bbox_id, scheme_name)

    def to_dict(self) -> dict:
        return {
            "schemes": [{"name": s.name, "labels": list(s.labels)} for s in self.schemes],
            "records": {k: dict(v) for k, v in sorted(self.records.items())},
            "metadata": {k: dict(v) for k, v in sorted(self.metadata.items())},
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "AnnotationSet":
        try:
            schemes = tuple(
                ClassScheme(s["name"], tuple(s["labels"])) for s in doc.get("schemes", [])
            )
            records = {
                str(k): {str(sn): str(lb) for sn, lb in v.items() if lb is not None}
                for k, v in doc.get("records", {}).items()
            }
            metadata = {
                str(k): {str(mk): str(mv) for mk, mv in v.items()}
                for k, v in doc.get("metadata", {}).items()
            }
        except (KeyError, TypeError, AttributeError) as exc:
            raise MalformedFile(f"annotations file malformed: {exc}") from exc
        return cls(schemes=schemes, records=records, metadata=metadata, revision=int(doc.get("revision", 0)))


def write_annotations(annotations: AnnotationSet, path: Path) -> None:
    atomic_write_text(Path(path), dump_json(annotations.to_dict()))


def load_annotations(path: Path) -> AnnotationSet:
    try:
        doc = read_json(path)
    except json.JSONDecodeError as exc:
        raise MalformedFile(f"annotations file not parseable: {exc}") from exc
    if not isinstance(doc, dict):
        raise MalformedFile("annotations file must be a top-level object")
    return AnnotationSet.from_dict(doc)


@dataclass(frozen=True)
class ManifestEntry:
    bbox_id: str
    crop_path: str
    label: str
    class_index: int
    split: str | None  # "train" / "test", None before the split stage runs
    metadata: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DatasetManifest:
    """Preprocessing output: one entry per usable crop, plus provenance."""

    entries: tuple[ManifestEntry, ...]
    scheme: ClassScheme
    provenance: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for e in self.entries:
            if self.scheme.labels[e.class_index] != e.label:
                raise SchemaViolation(
                    "class index does not match label position", e.bbox_id, "class_index"
                )
            if e.split not in (None, "train", "test"):
                raise SchemaViolation(f"bad split tag '{e.split}'", e.bbox_id, "split")

    def with_split(self, assignment: Mapping[str, str]) -> "DatasetManifest":
        """Tag every entry from a bbox_id -> train/test mapping."""
        missing = [e.bbox_id for e in self.entries if e.bbox_id not in assignment]
        if missing:
            raise SchemaViolation(f"split assignment misses {len(missing)} entries", missing[0], "split")
        entries = tuple(replace(e, split=assignment[e.bbox_id]) for e in self.entries)
        return replace(self, entries=entries)

    def to_dict(self) -> dict:
        return {
            "scheme": {"name": self.scheme.name, "labels": list(self.scheme.labels)},
            "provenance": dict(self.provenance),
            "entries": [
                {
                    "bbox_id": e.bbox_id,
                    "crop_path": e.crop_path,
                    "label": e.label,
                    "class_index": e.class_index,
                    "split": e.split,
                    "metadata": dict(e.metadata),
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DatasetManifest":
        scheme = ClassScheme(doc["scheme"]["name"], tuple(doc["scheme"]["labels"]))
        entries = tuple(
            ManifestEntry(
                bbox_id=e["bbox_id"],
                crop_path=e["crop_path"],
                label=e["label"],
                class_index=int(e["class_index"]),
                split=e.get("split"),
                metadata=dict(e.get("metadata", {})),
            )
            for e in doc["entries"]
        )
        return cls(entries=entries, scheme=scheme, provenance=dict(doc.get("provenance", {})))


def write_manifest(manifest: DatasetManifest, path: Path) -> None:
    atomic_write_text(Path(path), dump_json(manifest.to_dict()))


def load_manifest(path: Path) -> DatasetManifest:
    try:
        doc = read_json(path)
        return DatasetManifest.from_dict(doc)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise MalformedFile(f"manifest not parseable: {exc}") from exc
