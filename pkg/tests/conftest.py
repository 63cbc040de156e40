import numpy as np
import pytest
from PIL import Image

# one (status, name) entry per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, status in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"{status}  {name}")

from wildclass.config import config_from_dict
from wildclass.data import (
    AnnotationSet,
    ClassScheme,
    DatasetManifest,
    Detection,
    ManifestEntry,
    write_annotations,
    write_detections,
)


@pytest.fixture
def scheme():
    return ClassScheme("species", ("deer", "boar", "fox"))


def make_entries(labels, scheme, metadata=None, prefix="b"):
    """Manifest entries with sequential ids for split/metric fixtures."""
    entries = []
    for i, label in enumerate(labels):
        entries.append(
            ManifestEntry(
                bbox_id=f"{prefix}{i:04d}",
                crop_path=f"crops/{prefix}{i:04d}.png",
                label=label,
                class_index=scheme.labels.index(label),
                split=None,
                metadata=dict(metadata[i]) if metadata else {},
            )
        )
    return entries


def make_manifest(labels, scheme, metadata=None):
    return DatasetManifest(entries=tuple(make_entries(labels, scheme, metadata)), scheme=scheme)


def write_image(path, size=(60, 40), value=None, seed=0):
    """Small RGB PNG; random content unless a constant value is given."""
    rng = np.random.default_rng(seed)
    if value is None:
        arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    else:
        arr = np.full((size[1], size[0], 3), value, dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")
    return arr


@pytest.fixture
def small_dataset(tmp_path):
    """Images + detections + annotations for pipeline-level tests.

    20 detections over 10 images: 2 below the 0.9 confidence threshold and
    1 unlabeled, so preprocessing keeps exactly 17.
    """
    data_dir = tmp_path / "data"
    scheme = ClassScheme("age", ("adult", "juvenile"))
    detections = []
    records = {}
    rng = np.random.default_rng(11)
    for i in range(10):
        image_id = f"img{i:02d}"
        write_image(data_dir / f"{image_id}.png", size=(80, 60), seed=i)
        for j in range(2):
            bbox_id = f"{image_id}#{j}"
            k = i * 2 + j
            conf = 0.5 if k < 2 else float(rng.uniform(0.92, 0.99))
            detections.append(
                Detection(
                    bbox_id=bbox_id,
                    image_id=image_id,
                    image_path=f"{image_id}.png",
                    category=0,
                    bbox=(0.1 + 0.02 * j, 0.1, 0.35, 0.4),
                    confidence=conf,
                )
            )
            if k != 5:  # one detection above threshold left unlabeled
                records[bbox_id] = {"age": scheme.labels[k % 2]}
    write_detections(detections, data_dir / "detections.json")
    annotations = AnnotationSet(schemes=(scheme,), records=records)
    annotations = annotations.with_metadata("img02#0", {"season": "summer"})
    write_annotations(annotations, data_dir / "annotations.json")

    config = config_from_dict(
        {
            "io": {"data_dir": str(data_dir), "output_dir": str(tmp_path / "work")},
            "preprocessing": {"confidence_threshold": 0.9, "target_dim": 32},
            "training": {"target_scheme": "age", "seed": 3},
        }
    )
    return {"config": config, "data_dir": data_dir, "scheme": scheme, "detections": detections}
