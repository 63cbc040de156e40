"""Confidence filtering, centroid square-cropping, and rescaling.

Geometry rules, pinned here because every test depends on them:
  - side = ceil(max(bbox_width_px, bbox_height_px)); never tighter than
    the detector box.
  - the square is centered on the bbox centroid in continuous pixel
    coordinates; left/top are floored to integers after any shift.
  - shift translates minimally per axis so the square lies inside the
    image without shrinking; each axis clamps independently.
  - pad keeps the centered square and records out-of-image margins as
    black-pixel pad amounts.
  - a square larger than the whole image cannot shift; the configurable
    fallback (default) pads that box instead.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import ExperimentConfig, fingerprint
from .data import (
    BboxRel,
    ClassScheme,
    DatasetManifest,
    Detection,
    ManifestEntry,
    load_annotations,
    load_detections,
    write_manifest,
)
from .errors import EmptyDataset, NonSquareInput, SquareExceedsImage
from .util import atomic_write_json, sanitize_filename

log = logging.getLogger(__name__)


def filter_confidence(detections: list[Detection], ct: float) -> list[Detection]:
    """Keep detections with confidence >= ct, order preserved."""
    if not 0.0 <= ct <= 1.0:
        raise ValueError(f"confidence threshold must be in [0,1], got {ct}")
    return [d for d in detections if d.confidence >= ct]


@dataclass(frozen=True)
class CropSpec:
    """A resolved square crop: rect in absolute pixels plus pad accounting.

    Under shift all pads are zero and the rect lies inside the image.
    Under pad the rect is the centered square (left/top may be negative)
    and the pads are the margins that fall outside the image.
    """

    bbox_id: str
    left: int
    top: int
    side: int
    strategy: str           # strategy actually used: "shift" or "pad"
    pad_left: int = 0
    pad_top: int = 0
    pad_right: int = 0
    pad_bottom: int = 0
    fallback_applied: bool = False

    @property
    def pads(self) -> tuple[int, int, int, int]:
        return (self.pad_left, self.pad_top, self.pad_right, self.pad_bottom)


def _pad_spec(bbox_id: str, left0: float, top0: float, side: int, W: int, H: int,
              fallback: bool) -> CropSpec:
    left = math.floor(left0)
    top = math.floor(top0)
    return CropSpec(
        bbox_id=bbox_id,
        left=left,
        top=top,
        side=side,
        strategy="pad",
        pad_left=max(0, -left),
        pad_top=max(0, -top),
        pad_right=max(0, left + side - W),
        pad_bottom=max(0, top + side - H),
        fallback_applied=fallback,
    )


def square_crop(
    bbox: BboxRel,
    image_dims: tuple[int, int],
    strategy: str = "shift",
    bbox_id: str = "",
    shift_fallback: str = "pad",
) -> CropSpec:
    """Compute the square crop around a relative bbox's centroid."""
    if strategy not in ("shift", "pad"):
        raise ValueError(f"unknown crop strategy: {strategy}")
    W, H = image_dims
    if W <= 0 or H <= 0:
        raise ValueError("image dimensions must be positive")
    x, y, w, h = bbox
    w_px = w * W
    h_px = h * H
    side = math.ceil(max(w_px, h_px))
    cx = (x + w / 2.0) * W
    cy = (y + h / 2.0) * H
    left0 = cx - side / 2.0
    top0 = cy - side / 2.0

    if strategy == "pad":
        return _pad_spec(bbox_id, left0, top0, side, W, H, fallback=False)

    if side > W or side > H:
        if shift_fallback == "pad":
            log.warning("crop square (%d px) exceeds image %dx%d for %s; padding instead",
                        side, W, H, bbox_id or "<bbox>")
            return _pad_spec(bbox_id, left0, top0, side, W, H, fallback=True)
        raise SquareExceedsImage(
            f"square side {side} exceeds image {W}x{H} for bbox {bbox_id or '<bbox>'}"
        )

    left = math.floor(min(max(left0, 0.0), float(W - side)))
    top = math.floor(min(max(top0, 0.0), float(H - side)))
    return CropSpec(bbox_id=bbox_id, left=left, top=top, side=side, strategy="shift")


def extract_crop(image: np.ndarray, spec: CropSpec) -> np.ndarray:
    """Cut the CropSpec square out of an HxWx3 uint8 array, padding with black."""
    H, W = image.shape[:2]
    out = np.zeros((spec.side, spec.side, 3), dtype=image.dtype)
    src_x0 = max(spec.left, 0)
    src_y0 = max(spec.top, 0)
    src_x1 = min(spec.left + spec.side, W)
    src_y1 = min(spec.top + spec.side, H)
    if src_x1 > src_x0 and src_y1 > src_y0:
        dst_x0 = src_x0 - spec.left
        dst_y0 = src_y0 - spec.top
        out[dst_y0 : dst_y0 + (src_y1 - src_y0), dst_x0 : dst_x0 + (src_x1 - src_x0)] = image[
            src_y0:src_y1, src_x0:src_x1
        ]
    return out


def rescale(crop: np.ndarray, target_dim: int) -> np.ndarray:
    """Bilinear-resample a square crop to target_dim x target_dim x 3."""
    if target_dim < 8:
        raise ValueError(f"target_dim must be >= 8, got {target_dim}")
    if crop.ndim != 3 or crop.shape[0] != crop.shape[1]:
        raise NonSquareInput(f"crop must be square HxWx3, got shape {crop.shape}")
    if crop.shape[0] == target_dim:
        return crop.copy()  # same-size bilinear resize is not guaranteed bit-exact
    img = Image.fromarray(crop)
    img = img.resize((target_dim, target_dim), Image.BILINEAR)
    return np.asarray(img)


def load_image_rgb(path: Path) -> np.ndarray:
    """Load any image as HxWx3 uint8; grayscale is replicated to 3 channels."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def run_preprocess(config: ExperimentConfig) -> DatasetManifest:
    """Full preprocessing: CT filter, drop unlabeled, crop, rescale, manifest.

    Writes crops under <output_dir>/crops/ (lossless PNG named by bbox_id)
    and the manifest to <output_dir>/manifest.json. Reruns with identical
    config produce byte-identical manifests. Detections with no usable
    label for the target scheme are counted and reported, not fatal.
    """
    io = config.io
    pp = config.preprocessing
    detections = load_detections(Path(io.detections_file))
    if not detections:
        raise EmptyDataset(f"detections file {io.detections_file} is empty")
    annotations = load_annotations(Path(io.annotations_file))
    annotations.validate_against(detections)
    scheme_name = config.training.target_scheme
    scheme: ClassScheme = annotations.scheme(scheme_name)

    kept = filter_confidence(detections, pp.confidence_threshold)
    out_dir = Path(io.output_dir)
    crops_dir = out_dir / "crops"
    crops_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    n_unlabeled = 0
    missing_ids: list[str] = []
    for det in kept:
        label = annotations.label_for(det.bbox_id, scheme_name)
        if label is None:
            if det.bbox_id in annotations.records:
                n_unlabeled += 1
            else:
                missing_ids.append(det.bbox_id)
            continue
        image = load_image_rgb(Path(io.data_dir) / det.image_path)
        H, W = image.shape[:2]
        spec = square_crop(
            det.bbox, (W, H), pp.crop_strategy, bbox_id=det.bbox_id,
            shift_fallback=pp.shift_fallback,
        )
        crop = rescale(extract_crop(image, spec), pp.target_dim)
        crop_name = sanitize_filename(det.bbox_id) + ".png"
        Image.fromarray(crop).save(crops_dir / crop_name, format="PNG")
        metadata = dict(annotations.metadata_for(det.bbox_id))
        entries.append(
            ManifestEntry(
                bbox_id=det.bbox_id,
                crop_path=str(Path("crops") / crop_name),
                label=label,
                class_index=scheme.index_of(label),
                split=None,
                metadata=metadata,
            )
        )

    if missing_ids:
        log.warning("%d detections above CT had no annotation record for scheme '%s'",
                    len(missing_ids), scheme_name)
    if not entries:
        raise EmptyDataset(
            f"no labeled detections above confidence threshold {pp.confidence_threshold}"
        )

    manifest = DatasetManifest(
        entries=tuple(entries),
        scheme=scheme,
        provenance={
            "config_fingerprint": fingerprint(config),
            "detections_file": str(io.detections_file),
            "annotations_file": str(io.annotations_file),
        },
    )
    write_manifest(manifest, out_dir / "manifest.json")
    atomic_write_json(
        out_dir / "preprocess_report.json",
        {
            "n_detections": len(detections),
            "n_below_confidence_threshold": len(detections) - len(kept),
            "n_unlabeled": n_unlabeled,
            "n_missing_annotation": len(missing_ids),
            "missing_annotation_ids": missing_ids,
            "n_entries": len(entries),
        },
    )
    return manifest
