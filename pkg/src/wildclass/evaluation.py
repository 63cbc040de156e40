"""Weighted classification metrics, uncertainty handling, and aggregation.

Per-class precision/recall/F1 come from the confusion matrix with the
zero-fill rule (classes with a zero denominator score 0), and weighted
aggregates use true-class frequencies as weights. The weighted metrics
are computed in exact rational arithmetic and converted to float once,
which makes "weighted recall equals accuracy" hold bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import ClassScheme
from .errors import EmptyEvaluation, MissingAttribute, MixedConfig, UnknownLabel
from .util import round_half_up


@dataclass(frozen=True)
class PredictionRecord:
    """One test-set prediction with everything review needs."""

    bbox_id: str
    true_label: str
    predicted_label: str
    confidence: float
    certain: bool
    run_id: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)


def apply_uncertainty_threshold(
    records: Sequence[PredictionRecord], ut: float, exclude: bool = True
) -> tuple[list[PredictionRecord], list[PredictionRecord]]:
    """Split records into (certain, uncertain) at confidence >= ut.

    Flags are rewritten so certain <=> confidence >= ut always holds. The
    exclude flag is the caller's policy knob: with exclusion off, metrics
    are later computed over all records while uncertain ones still get
    logged for review.
    """
    if not 0.0 <= ut <= 1.0:
        raise ValueError(f"uncertainty threshold must be in [0,1], got {ut}")
    certain = [replace(r, certain=True) for r in records if r.confidence >= ut]
    uncertain = [replace(r, certain=False) for r in records if r.confidence < ut]
    return certain, uncertain


@dataclass(frozen=True)
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    labels: tuple[str, ...]
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    per_class: Mapping[str, PerClassMetrics]
    confusion: tuple[tuple[int, ...], ...]  # rows = true, columns = predicted
    n_certain: int
    n_uncertain: int
    mean_confidence_certain: float | None

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "per_class": {
                label: vars(m) for label, m in self.per_class.items()
            },
            "confusion": [list(row) for row in self.confusion],
            "n_certain": self.n_certain,
            "n_uncertain": self.n_uncertain,
            "mean_confidence_certain": self.mean_confidence_certain,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MetricsReport":
        return cls(
            labels=tuple(doc["labels"]),
            accuracy=doc["accuracy"],
            weighted_precision=doc["weighted_precision"],
            weighted_recall=doc["weighted_recall"],
            weighted_f1=doc["weighted_f1"],
            per_class={
                label: PerClassMetrics(**m) for label, m in doc["per_class"].items()
            },
            confusion=tuple(tuple(int(v) for v in row) for row in doc["confusion"]),
            n_certain=int(doc["n_certain"]),
            n_uncertain=int(doc["n_uncertain"]),
            mean_confidence_certain=doc.get("mean_confidence_certain"),
        )


def confusion_matrix(records: Sequence[PredictionRecord], scheme: ClassScheme) -> np.ndarray:
    matrix = np.zeros((len(scheme.labels), len(scheme.labels)), dtype=np.int64)
    index = {label: i for i, label in enumerate(scheme.labels)}
    for r in records:
        if r.true_label not in index:
            raise UnknownLabel(f"true label '{r.true_label}' not in scheme '{scheme.name}'")
        if r.predicted_label not in index:
            raise UnknownLabel(f"predicted label '{r.predicted_label}' not in scheme '{scheme.name}'")
        matrix[index[r.true_label], index[r.predicted_label]] += 1
    return matrix


def metrics_fractions(matrix: np.ndarray) -> dict:
    """Exact per-class and weighted metrics from a confusion matrix.

    Returns Fractions throughout; compute_metrics converts to float once.
    Kept separate so tests can compare against a definitional oracle in
    rational arithmetic.
    """
    g = matrix.shape[0]
    total = int(matrix.sum())
    row_sums = [int(matrix[k, :].sum()) for k in range(g)]
    col_sums = [int(matrix[:, k].sum()) for k in range(g)]
    zero = Fraction(0)
    precision, recall, f1 = [], [], []
    for k in range(g):
        tp = int(matrix[k, k])
        p = Fraction(tp, col_sums[k]) if col_sums[k] else zero
        r = Fraction(tp, row_sums[k]) if row_sums[k] else zero
        f = 2 * p * r / (p + r) if (p + r) else zero
        precision.append(p)
        recall.append(r)
        f1.append(f)
    weights = [Fraction(row_sums[k], total) for k in range(g)]
    return {
        "accuracy": Fraction(int(np.trace(matrix)), total),
        "weighted_precision": sum(w * p for w, p in zip(weights, precision)),
        "weighted_recall": sum(w * r for w, r in zip(weights, recall)),
        "weighted_f1": sum(w * f for w, f in zip(weights, f1)),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "support": row_sums,
    }


def compute_metrics(records: Sequence[PredictionRecord], scheme: ClassScheme) -> MetricsReport:
    """MetricsReport over the given records (normally the certain set)."""
    if not records:
        raise EmptyEvaluation("cannot compute metrics over zero records")
    matrix = confusion_matrix(records, scheme)
    m = metrics_fractions(matrix)
    certain = [r for r in records if r.certain]
    mean_conf = (sum(r.confidence for r in certain) / len(certain)) if certain else None
    per_class = {
        label: PerClassMetrics(
            precision=float(m["precision"][k]),
            recall=float(m["recall"][k]),
            f1=float(m["f1"][k]),
            support=m["support"][k],
        )
        for k, label in enumerate(scheme.labels)
    }
    return MetricsReport(
        labels=tuple(scheme.labels),
        accuracy=float(m["accuracy"]),
        weighted_precision=float(m["weighted_precision"]),
        weighted_recall=float(m["weighted_recall"]),
        weighted_f1=float(m["weighted_f1"]),
        per_class=per_class,
        confusion=tuple(tuple(int(v) for v in row) for row in matrix),
        n_certain=len(certain),
        n_uncertain=len(records) - len(certain),
        mean_confidence_certain=mean_conf,
    )


def stratified_metrics(
    records: Sequence[PredictionRecord],
    scheme: ClassScheme,
    attribute: str,
    value_fn: Callable[[PredictionRecord], str | None] | None = None,
) -> dict[str, MetricsReport]:
    """One MetricsReport per stratum of the attribute (e.g. season).

    value_fn defaults to reading the attribute from the record's metadata
    snapshot; pass a custom one to derive strata (season from timestamps).
    """
    fn = value_fn or (lambda r: r.metadata.get(attribute))
    strata: dict[str, list[PredictionRecord]] = {}
    missing = []
    for r in records:
        value = fn(r)
        if value is None:
            missing.append(r.bbox_id)
        else:
            strata.setdefault(str(value), []).append(r)
    if missing:
        raise MissingAttribute(attribute, missing)
    return {value: compute_metrics(strata[value], scheme) for value in sorted(strata)}


def record_review_sets(
    records: Sequence[PredictionRecord],
) -> tuple[list[PredictionRecord], list[PredictionRecord]]:
    """(error log, uncertainty log): certain-and-wrong, and all uncertain."""
    errors = [r for r in records if r.certain and r.predicted_label != r.true_label]
    uncertain = [r for r in records if not r.certain]
    return errors, uncertain


@dataclass(frozen=True)
class RunResult:
    """Everything produced by evaluating one trained run on the test set."""

    run_id: str
    scheme: ClassScheme
    metrics: MetricsReport
    uncertainty_threshold: float
    exclude_uncertain: bool
    n_certain: int
    n_excluded: int
    mean_confidence_certain: float | None
    experiment_fingerprint: str
    records: tuple[PredictionRecord, ...] = ()
    stratified: Mapping[str, MetricsReport] | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "scheme": {"name": self.scheme.name, "labels": list(self.scheme.labels)},
            "metrics": self.metrics.to_dict(),
            "uncertainty_threshold": self.uncertainty_threshold,
            "exclude_uncertain": self.exclude_uncertain,
            "n_certain": self.n_certain,
            "n_excluded": self.n_excluded,
            "mean_confidence_certain": self.mean_confidence_certain,
            "experiment_fingerprint": self.experiment_fingerprint,
            "stratified": (
                {k: v.to_dict() for k, v in self.stratified.items()}
                if self.stratified is not None
                else None
            ),
            "records": [
                {
                    "bbox_id": r.bbox_id,
                    "true_label": r.true_label,
                    "predicted_label": r.predicted_label,
                    "confidence": r.confidence,
                    "certain": r.certain,
                    "run_id": r.run_id,
                    "metadata": dict(r.metadata),
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunResult":
        return cls(
            run_id=doc["run_id"],
            scheme=ClassScheme(doc["scheme"]["name"], tuple(doc["scheme"]["labels"])),
            metrics=MetricsReport.from_dict(doc["metrics"]),
            uncertainty_threshold=float(doc["uncertainty_threshold"]),
            exclude_uncertain=bool(doc["exclude_uncertain"]),
            n_certain=int(doc["n_certain"]),
            n_excluded=int(doc["n_excluded"]),
            mean_confidence_certain=doc.get("mean_confidence_certain"),
            experiment_fingerprint=doc.get("experiment_fingerprint", ""),
            stratified=(
                {k: MetricsReport.from_dict(v) for k, v in doc["stratified"].items()}
                if doc.get("stratified") is not None
                else None
            ),
            records=tuple(
                PredictionRecord(
                    bbox_id=r["bbox_id"],
                    true_label=r["true_label"],
                    predicted_label=r["predicted_label"],
                    confidence=float(r["confidence"]),
                    certain=bool(r["certain"]),
                    run_id=r.get("run_id", ""),
                    metadata=dict(r.get("metadata", {})),
                )
                for r in doc.get("records", [])
            ),
        )


def evaluate_records(
    run_id: str,
    records: Sequence[PredictionRecord],
    scheme: ClassScheme,
    ut: float,
    exclude_uncertain: bool,
    experiment_fingerprint: str = "",
    stratify_attribute: str = "",
    value_fn: Callable[[PredictionRecord], str | None] | None = None,
) -> RunResult:
    """Assemble a RunResult: threshold, metrics, optional stratification."""
    certain, uncertain = apply_uncertainty_threshold(records, ut, exclude_uncertain)
    flagged = certain + uncertain
    scored = certain if exclude_uncertain else flagged
    if not scored:
        raise EmptyEvaluation(f"no records left to score at ut={ut}")
    metrics = compute_metrics(scored, scheme)
    stratified = None
    if stratify_attribute:
        stratified = stratified_metrics(scored, scheme, stratify_attribute, value_fn)
    mean_conf = (sum(r.confidence for r in certain) / len(certain)) if certain else None
    return RunResult(
        run_id=run_id,
        scheme=scheme,
        metrics=metrics,
        uncertainty_threshold=ut,
        exclude_uncertain=exclude_uncertain,
        n_certain=len(certain),
        n_excluded=len(uncertain),
        mean_confidence_certain=mean_conf,
        experiment_fingerprint=experiment_fingerprint,
        records=tuple(flagged),
        stratified=stratified,
    )


@dataclass(frozen=True)
class ExperimentAggregate:
    """Cross-run mean metrics and pooled confusion matrix (Table-2 shape)."""

    iterations: int
    accuracy: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    mean_n_certain: float
    mean_n_excluded: float
    mean_confidence_certain: float | None
    pooled_confusion: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "accuracy": self.accuracy,
            "weighted_precision": self.weighted_precision,
            "weighted_recall": self.weighted_recall,
            "weighted_f1": self.weighted_f1,
            "mean_n_certain": self.mean_n_certain,
            "mean_n_excluded": self.mean_n_excluded,
            "mean_confidence_certain": self.mean_confidence_certain,
            "pooled_confusion": [list(row) for row in self.pooled_confusion],
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentAggregate":
        return cls(
            iterations=int(doc["iterations"]),
            accuracy=float(doc["accuracy"]),
            weighted_precision=float(doc["weighted_precision"]),
            weighted_recall=float(doc["weighted_recall"]),
            weighted_f1=float(doc["weighted_f1"]),
            mean_n_certain=float(doc["mean_n_certain"]),
            mean_n_excluded=float(doc["mean_n_excluded"]),
            mean_confidence_certain=doc.get("mean_confidence_certain"),
            pooled_confusion=tuple(tuple(int(v) for v in row) for row in doc["pooled_confusion"]),
            labels=tuple(doc["labels"]),
        )


def aggregate_runs(results: Sequence[RunResult]) -> ExperimentAggregate:
    """Unweighted mean of per-run metrics plus the entrywise-summed matrix."""
    if not results:
        raise EmptyEvaluation("no run results to aggregate")
    fingerprints = {r.experiment_fingerprint for r in results}
    if len(fingerprints) > 1:
        raise MixedConfig(f"runs come from different configs: {sorted(fingerprints)}")
    labels = results[0].scheme.labels
    for r in results:
        if r.scheme.labels != labels:
            raise MixedConfig("runs disagree on the class scheme")
    n = len(results)
    pooled = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for r in results:
        pooled += np.asarray(r.metrics.confusion, dtype=np.int64)
    confidences = [r.mean_confidence_certain for r in results if r.mean_confidence_certain is not None]
    return ExperimentAggregate(
        iterations=n,
        accuracy=sum(r.metrics.accuracy for r in results) / n,
        weighted_precision=sum(r.metrics.weighted_precision for r in results) / n,
        weighted_recall=sum(r.metrics.weighted_recall for r in results) / n,
        weighted_f1=sum(r.metrics.weighted_f1 for r in results) / n,
        mean_n_certain=sum(r.n_certain for r in results) / n,
        mean_n_excluded=sum(r.n_excluded for r in results) / n,
        mean_confidence_certain=(sum(confidences) / len(confidences)) if confidences else None,
        pooled_confusion=tuple(tuple(int(v) for v in row) for row in pooled),
        labels=labels,
    )


@dataclass(frozen=True)
class AdjustedCounts:
    counts: Mapping[str, int]
    percentages: Mapping[str, float]


def unknown_quality_adjustment(
    class_counts: Mapping[str, int],
    unknown_label: str,
    poor_quality_fraction: float,
) -> AdjustedCounts:
    """Remove the poor-image-quality share of the unknown segment.

    The fraction is a user input from a manual audit; the unknown count is
    reduced by round(fraction * count) and percentages are renormalized.
    """
    if not 0.0 <= poor_quality_fraction <= 1.0:
        raise ValueError(f"fraction must be in [0,1], got {poor_quality_fraction}")
    if unknown_label not in class_counts:
        raise KeyError(f"'{unknown_label}' not in class counts")
    counts = dict(class_counts)
    removed = round_half_up(poor_quality_fraction * counts[unknown_label])
    counts[unknown_label] = counts[unknown_label] - removed
    total = sum(counts.values())
    percentages = {k: (100.0 * v / total if total else 0.0) for k, v in counts.items()}
    return AdjustedCounts(counts=counts, percentages=percentages)
