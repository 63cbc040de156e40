"""Local HTTP service backing the web UI.

Serves datasets, images/crops, annotation writes, and experiment results.
The server holds no state beyond the files on disk: every read goes to the
stores, every write is atomic, and a restart loses nothing. Annotation
writes use optimistic revision tokens; a stale write gets 409 and the
client must refresh.
"""

from __future__ import annotations

import io
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import RedirectResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .data import (
    AnnotationSet,
    ClassScheme,
    Detection,
    detection_to_record,
    load_annotations,
    load_detections,
    write_annotations,
)
from .errors import SchemaViolation
from .preprocess import extract_crop, load_image_rgb, square_crop
from .store import ExperimentStore
from .util import read_json

DEFAULT_PORT = 8501


class AnnotationWrite(BaseModel):
    labels: dict[str, str | None]
    revision: int


class SchemesWrite(BaseModel):
    schemes: list[dict]
    revision: int


class _Dataset:
    def __init__(self, dataset_id: str, path: Path):
        self.id = dataset_id
        self.path = path
        self.lock = threading.Lock()

    @property
    def detections_path(self) -> Path:
        return self.path / "detections.json"

    @property
    def annotations_path(self) -> Path:
        return self.path / "annotations.json"

    def detections(self) -> list[Detection]:
        return load_detections(self.detections_path)

    def annotations(self) -> AnnotationSet:
        if self.annotations_path.exists():
            return load_annotations(self.annotations_path)
        return AnnotationSet()


def _discover_datasets(data_root: Path) -> dict[str, _Dataset]:
    datasets: dict[str, _Dataset] = {}
    data_root = Path(data_root)
    if (data_root / "detections.json").exists():
        datasets[data_root.name] = _Dataset(data_root.name, data_root)
    if data_root.is_dir():
        for child in sorted(data_root.iterdir()):
            if child.is_dir() and (child / "detections.json").exists():
                datasets[child.name] = _Dataset(child.name, child)
    return datasets


def _paginate(items: list, page: int, page_size: int) -> dict:
    start = (page - 1) * page_size
    return {
        "total": len(items),
        "page": page,
        "page_size": page_size,
        "items": items[start : start + page_size],
    }


def create_app(
    data_root: Path,
    store_root: Path | None = None,
    frontend_dir: Path | None = None,
) -> FastAPI:
    app = FastAPI(title="wildclass", version="0.1.0")
    datasets = _discover_datasets(Path(data_root))
    store = ExperimentStore(Path(store_root)) if store_root else None

    if frontend_dir is None:
        candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
        frontend_dir = candidate if candidate.is_dir() else None

    def dataset_or_404(dataset_id: str) -> _Dataset:
        ds = datasets.get(dataset_id)
        if ds is None:
            raise HTTPException(404, f"unknown dataset '{dataset_id}'")
        return ds

    def store_or_404() -> ExperimentStore:
        if store is None:
            raise HTTPException(404, "no experiment store configured")
        return store

    @app.get("/api/health")
    def health():
        return {"status": "ok", "datasets": len(datasets)}

    @app.get("/datasets")
    def list_datasets():
        out = []
        for ds in datasets.values():
            detections = ds.detections()
            annotations = ds.annotations()
            target_schemes = [s.name for s in annotations.schemes]
            n_labeled = sum(
                1 for d in detections
                if any(annotations.label_for(d.bbox_id, s) for s in target_schemes)
            )
            out.append(
                {
                    "id": ds.id,
                    "path": str(ds.path),
                    "n_detections": len(detections),
                    "n_labeled": n_labeled,
                    "schemes": [{"name": s.name, "labels": list(s.labels)} for s in annotations.schemes],
                }
            )
        return out

    @app.get("/datasets/{dataset_id}/detections")
    def get_detections(dataset_id: str):
        ds = dataset_or_404(dataset_id)
        return [detection_to_record(d) for d in ds.detections()]

    @app.get("/datasets/{dataset_id}/annotations")
    def get_annotations(dataset_id: str):
        ds = dataset_or_404(dataset_id)
        return ds.annotations().to_dict()

    @app.get("/datasets/{dataset_id}/schemes")
    def get_schemes(dataset_id: str):
        ds = dataset_or_404(dataset_id)
        annotations = ds.annotations()
        return {
            "schemes": [{"name": s.name, "labels": list(s.labels)} for s in annotations.schemes],
            "revision": annotations.revision,
        }

    @app.put("/datasets/{dataset_id}/schemes")
    def put_schemes(dataset_id: str, body: SchemesWrite):
        ds = dataset_or_404(dataset_id)
        with ds.lock:
            annotations = ds.annotations()
            if body.revision != annotations.revision:
                raise HTTPException(409, "annotations changed; refresh and retry")
            merged = {s.name: s for s in annotations.schemes}
            for doc in body.schemes:
                try:
                    scheme = ClassScheme(str(doc["name"]), tuple(doc["labels"]))
                except (KeyError, TypeError, SchemaViolation) as exc:
                    raise HTTPException(422, f"bad scheme definition: {exc}") from exc
                old = merged.get(scheme.name)
                if old is not None:
                    removed = set(old.labels) - set(scheme.labels)
                    used = {
                        rec[scheme.name]
                        for rec in annotations.records.values()
                        if scheme.name in rec
                    }
                    conflict = removed & used
                    if conflict:
                        raise HTTPException(
                            409, f"labels in use cannot be removed: {sorted(conflict)}"
                        )
                merged[scheme.name] = scheme
            updated = annotations.with_schemes(merged.values())
            write_annotations(updated, ds.annotations_path)
            return {"revision": updated.revision}

    @app.put("/datasets/{dataset_id}/annotations/{bbox_id}")
    def put_annotation(dataset_id: str, bbox_id: str, body: AnnotationWrite):
        ds = dataset_or_404(dataset_id)
        with ds.lock:
            known = {d.bbox_id for d in ds.detections()}
            if bbox_id not in known:
                raise HTTPException(404, f"unknown bbox_id '{bbox_id}'")
            annotations = ds.annotations()
            if body.revision != annotations.revision:
                raise HTTPException(409, "annotations changed; refresh and retry")
            for scheme_name, label in body.labels.items():
                try:
                    annotations = annotations.with_label(bbox_id, scheme_name, label)
                except SchemaViolation as exc:
                    raise HTTPException(422, str(exc)) from exc
            write_annotations(annotations, ds.annotations_path)
            return {"revision": annotations.revision}

    @app.get("/images/{bbox_id}")
    def get_image(bbox_id: str, mode: str = Query("full", pattern="^(full|crop)$")):
        from PIL import Image

        for ds in datasets.values():
            for det in ds.detections():
                if det.bbox_id != bbox_id:
                    continue
                image_path = ds.path / det.image_path
                if not image_path.exists():
                    raise HTTPException(404, f"image file missing: {det.image_path}")
                headers = {
                    "X-Bbox": ",".join(f"{v:.6f}" for v in det.bbox),
                    "X-Confidence": f"{det.confidence:.4f}",
                    "X-Image-Id": det.image_id,
                }
                if mode == "full":
                    suffix = image_path.suffix.lower().lstrip(".")
                    media = {"jpg": "jpeg", "jpeg": "jpeg"}.get(suffix, suffix or "png")
                    return Response(image_path.read_bytes(), media_type=f"image/{media}",
                                    headers=headers)
                image = load_image_rgb(image_path)
                H, W = image.shape[:2]
                spec = square_crop(det.bbox, (W, H), "shift", bbox_id=bbox_id)
                crop = extract_crop(image, spec)
                buf = io.BytesIO()
                Image.fromarray(crop).save(buf, format="PNG")
                return Response(buf.getvalue(), media_type="image/png", headers=headers)
        raise HTTPException(404, f"unknown bbox_id '{bbox_id}'")

    @app.get("/experiments")
    def list_experiments(scheme: str | None = None):
        return store_or_404().list_experiments(scheme)

    @app.get("/experiments/{experiment_id}")
    def get_experiment(experiment_id: str):
        s = store_or_404()
        if experiment_id not in s.experiment_ids():
            raise HTTPException(404, f"unknown experiment '{experiment_id}'")
        record = s.load_record(experiment_id)
        config = s.load_experiment_config(experiment_id)
        aggregate = s.load_aggregate(experiment_id)
        results = {}
        for run_id in record.run_ids:
            try:
                result = s.load_result(experiment_id, run_id)
            except FileNotFoundError:
                continue
            results[run_id] = {
                "metrics": result.metrics.to_dict(),
                "n_certain": result.n_certain,
                "n_excluded": result.n_excluded,
                "mean_confidence_certain": result.mean_confidence_certain,
                "uncertainty_threshold": result.uncertainty_threshold,
                "stratified": (
                    {k: v.to_dict() for k, v in result.stratified.items()}
                    if result.stratified
                    else None
                ),
            }
        test_distribution: dict[str, int] = {}
        for run_id in record.run_ids[:1]:
            try:
                result = s.load_result(experiment_id, run_id)
            except FileNotFoundError:
                continue
            for rec in result.records:
                test_distribution[rec.true_label] = test_distribution.get(rec.true_label, 0) + 1
        return {
            "experiment_id": experiment_id,
            "created": record.created,
            "status": record.status,
            "scheme": config.training.target_scheme,
            "backbone": config.training.backbone,
            "run_ids": list(record.run_ids),
            "aggregate": aggregate.to_dict() if aggregate else None,
            "runs": results,
            "test_distribution": test_distribution,
        }

    @app.get("/experiments/{experiment_id}/runs/{run_id}/{review_kind}")
    def get_review(experiment_id: str, run_id: str, review_kind: str,
                   page: int = Query(1, ge=1), page_size: int = Query(24, ge=1, le=500),
                   predicted: str | None = None, stratum_attribute: str | None = None,
                   stratum: str | None = None):
        if review_kind not in ("errors", "uncertain"):
            raise HTTPException(404, "review kind must be 'errors' or 'uncertain'")
        s = store_or_404()
        path = s.run_dir(experiment_id, run_id) / f"{review_kind}.json"
        if not path.exists():
            raise HTTPException(404, f"no {review_kind} recorded for {experiment_id}/{run_id}")
        items = read_json(path)
        if predicted is not None:
            items = [r for r in items if r["predicted_label"] == predicted]
        if stratum_attribute and stratum is not None:
            items = [r for r in items if r.get("metadata", {}).get(stratum_attribute) == stratum]
        return _paginate(items, page, page_size)

    @app.get("/experiments/{experiment_id}/confusion")
    def get_confusion(experiment_id: str, run: str = "aggregate"):
        s = store_or_404()
        if run == "aggregate":
            aggregate = s.load_aggregate(experiment_id)
            if aggregate is None:
                raise HTTPException(404, f"no aggregate for '{experiment_id}'")
            return {"labels": list(aggregate.labels),
                    "matrix": [list(r) for r in aggregate.pooled_confusion],
                    "run": "aggregate"}
        try:
            result = s.load_result(experiment_id, run)
        except FileNotFoundError:
            raise HTTPException(404, f"unknown run '{run}'") from None
        return {"labels": list(result.metrics.labels),
                "matrix": [list(r) for r in result.metrics.confusion],
                "run": run}

    if frontend_dir is not None:
        app.mount("/ui", StaticFiles(directory=frontend_dir, html=True), name="ui")

        @app.get("/")
        def index():
            return RedirectResponse("/ui/")

    return app
