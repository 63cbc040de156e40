"""Config-driven experimentation pipeline for camera-trap image classification."""

from .augment import AugmentationPolicy, augment
from .config import ExperimentConfig, fingerprint, load_config, save_config
from .data import (
    AnnotationSet,
    ClassScheme,
    DatasetManifest,
    Detection,
    ManifestEntry,
    load_annotations,
    load_detections,
    load_manifest,
    normalize_bbox,
    validate_detections,
    write_annotations,
    write_detections,
    write_manifest,
)
from .detect import (
    DetectorAdapter,
    ExternalProcessDetector,
    MetadataTable,
    ScriptedDetector,
    StubDetector,
    derive_season,
    enrich,
    run_detection,
)
from .evaluation import (
    ExperimentAggregate,
    MetricsReport,
    PredictionRecord,
    RunResult,
    aggregate_runs,
    apply_uncertainty_threshold,
    compute_metrics,
    record_review_sets,
    stratified_metrics,
    unknown_quality_adjustment,
)
from .models import ClassifierModel, build_model, predict
from .preprocess import CropSpec, filter_confidence, rescale, run_preprocess, square_crop
from .split import SplitAssignment, stratified_split, train_val_split
from .store import ExperimentStore
from .training import TrainRecord, train_run

__version__ = "0.1.0"

__all__ = [
    "AnnotationSet",
    "AugmentationPolicy",
    "ClassScheme",
    "ClassifierModel",
    "CropSpec",
    "DatasetManifest",
    "Detection",
    "DetectorAdapter",
    "ExperimentAggregate",
    "ExperimentConfig",
    "ExperimentStore",
    "ExternalProcessDetector",
    "ManifestEntry",
    "MetadataTable",
    "MetricsReport",
    "PredictionRecord",
    "RunResult",
    "ScriptedDetector",
    "SplitAssignment",
    "StubDetector",
    "TrainRecord",
    "aggregate_runs",
    "apply_uncertainty_threshold",
    "augment",
    "build_model",
    "compute_metrics",
    "derive_season",
    "enrich",
    "filter_confidence",
    "fingerprint",
    "load_annotations",
    "load_config",
    "load_detections",
    "load_manifest",
    "normalize_bbox",
    "predict",
    "record_review_sets",
    "rescale",
    "run_detection",
    "run_preprocess",
    "save_config",
    "square_crop",
    "stratified_metrics",
    "stratified_split",
    "train_run",
    "train_val_split",
    "unknown_quality_adjustment",
    "validate_detections",
    "write_annotations",
    "write_detections",
    "write_manifest",
]
