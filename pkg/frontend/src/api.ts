/**
 * Typed client for the wildclass HTTP API.
 *
 * The UI performs no metric computation: every number shown on a page is
 * fetched through this client and rendered as-is.
 */

export interface SchemeDto {
  name: string;
  labels: string[];
}

export interface DetectionDto {
  bbox_id: string;
  image_id: string;
  image_path: string;
  category: number;
  bbox: [number, number, number, number];
  confidence: number;
}

export interface AnnotationsDto {
  schemes: SchemeDto[];
  records: Record<string, Record<string, string>>;
  metadata: Record<string, Record<string, string>>;
  revision: number;
}

export interface DatasetSummaryDto {
  id: string;
  path: string;
  n_detections: number;
  n_labeled: number;
  schemes: SchemeDto[];
}

export interface MetricsDto {
  labels: string[];
  accuracy: number;
  weighted_precision: number;
  weighted_recall: number;
  weighted_f1: number;
  per_class: Record<string, { precision: number; recall: number; f1: number; support: number }>;
  confusion: number[][];
  n_certain: number;
  n_uncertain: number;
  mean_confidence_certain: number | null;
}

export interface AggregateDto {
  iterations: number;
  accuracy: number;
  weighted_precision: number;
  weighted_recall: number;
  weighted_f1: number;
  mean_n_certain: number;
  mean_n_excluded: number;
  mean_confidence_certain: number | null;
  pooled_confusion: number[][];
  labels: string[];
}

export interface ExperimentSummaryDto {
  experiment_id: string;
  created: string;
  status: string;
  scheme: string;
  backbone: string;
  config_fingerprint: string;
  run_ids: string[];
  aggregate: AggregateDto | null;
}

export interface RunDetailDto {
  metrics: MetricsDto;
  n_certain: number;
  n_excluded: number;
  mean_confidence_certain: number | null;
  uncertainty_threshold: number;
  stratified: Record<string, MetricsDto> | null;
}

export interface ExperimentDetailDto {
  experiment_id: string;
  created: string;
  status: string;
  scheme: string;
  backbone: string;
  run_ids: string[];
  aggregate: AggregateDto | null;
  runs: Record<string, RunDetailDto>;
  test_distribution: Record<string, number>;
}

export interface ReviewRecordDto {
  bbox_id: string;
  crop_path: string;
  true_label: string;
  predicted_label: string;
  confidence: number;
  run_id: string;
  metadata: Record<string, string>;
}

export interface ReviewPageDto {
  total: number;
  page: number;
  page_size: number;
  items: ReviewRecordDto[];
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  const resp = await fetch(url, init);
  if (!resp.ok) {
    let detail = resp.statusText;
    try {
      const body = (await resp.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(resp.status, detail);
  }
  return (await resp.json()) as T;
}

export class Api {
  constructor(public base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  listDatasets(): Promise<DatasetSummaryDto[]> {
    return request(this.url("/datasets"));
  }

  getDetections(datasetId: string): Promise<DetectionDto[]> {
    return request(this.url(`/datasets/${encodeURIComponent(datasetId)}/detections`));
  }

  getAnnotations(datasetId: string): Promise<AnnotationsDto> {
    return request(this.url(`/datasets/${encodeURIComponent(datasetId)}/annotations`));
  }

  putAnnotation(
    datasetId: string,
    bboxId: string,
    labels: Record<string, string | null>,
    revision: number,
  ): Promise<{ revision: number }> {
    return request(
      this.url(
        `/datasets/${encodeURIComponent(datasetId)}/annotations/${encodeURIComponent(bboxId)}`,
      ),
      {
        method: "PUT",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ labels, revision }),
      },
    );
  }

  putSchemes(datasetId: string, schemes: SchemeDto[], revision: number): Promise<{ revision: number }> {
    return request(this.url(`/datasets/${encodeURIComponent(datasetId)}/schemes`), {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ schemes, revision }),
    });
  }

  listExperiments(): Promise<ExperimentSummaryDto[]> {
    return request(this.url("/experiments"));
  }

  getExperiment(experimentId: string): Promise<ExperimentDetailDto> {
    return request(this.url(`/experiments/${encodeURIComponent(experimentId)}`));
  }

  getReview(
    experimentId: string,
    runId: string,
    kind: "errors" | "uncertain",
    page: number,
    pageSize: number,
    predicted?: string,
    stratumAttribute?: string,
    stratum?: string,
  ): Promise<ReviewPageDto> {
    const params = new URLSearchParams({ page: String(page), page_size: String(pageSize) });
    if (predicted) params.set("predicted", predicted);
    if (stratumAttribute && stratum) {
      params.set("stratum_attribute", stratumAttribute);
      params.set("stratum", stratum);
    }
    return request(
      this.url(
        `/experiments/${encodeURIComponent(experimentId)}/runs/${encodeURIComponent(runId)}/${kind}?` +
          params.toString(),
      ),
    );
  }

  imageUrl(bboxId: string, mode: "full" | "crop"): string {
    return this.url(`/images/${encodeURIComponent(bboxId)}?mode=${mode}`);
  }
}
