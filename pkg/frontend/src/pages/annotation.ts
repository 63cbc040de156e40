/**
 * Annotation page: full image with the current box highlighted, its crop,
 * one drop-down per class scheme, a scheme editor, and prev/next
 * navigation with a progress counter. Every selection is PUT to the API
 * immediately (write-before-navigate), so moving on never loses a label.
 */

import { AnnotationsDto, Api, DetectionDto } from "../api.js";
import { clear, el, statusLine } from "../dom.js";

export interface AnnotationState {
  datasetId: string | null;
  detections: DetectionDto[];
  annotations: AnnotationsDto | null;
  index: number;
}

export function labeledCount(state: AnnotationState): number {
  if (!state.annotations) return 0;
  const schemes = state.annotations.schemes.map((s) => s.name);
  return state.detections.filter((d) => {
    const rec = state.annotations!.records[d.bbox_id] ?? {};
    return schemes.length > 0 && schemes.every((s) => rec[s] !== undefined);
  }).length;
}

export function firstUnlabeledIndex(state: AnnotationState): number {
  if (!state.annotations) return 0;
  const schemes = state.annotations.schemes.map((s) => s.name);
  for (let i = 0; i < state.detections.length; i++) {
    const rec = state.annotations.records[state.detections[i].bbox_id] ?? {};
    if (!schemes.every((s) => rec[s] !== undefined)) return i;
  }
  return 0;
}

export class AnnotationPage {
  state: AnnotationState = { datasetId: null, detections: [], annotations: null, index: 0 };
  private root: HTMLElement | null = null;

  constructor(private api: Api) {}

  async mount(root: HTMLElement): Promise<void> {
    this.root = root;
    clear(root);
    root.append(el("h2", {}, ["Annotation"]));
    const picker = el("select", { id: "dataset-picker" });
    picker.append(el("option", { value: "" }, ["choose a dataset…"]));
    const datasets = await this.api.listDatasets();
    for (const ds of datasets) {
      picker.append(el("option", { value: ds.id }, [`${ds.id} (${ds.n_detections} boxes)`]));
    }
    picker.addEventListener("change", () => {
      if (picker.value) void this.selectDataset(picker.value);
    });
    root.append(el("div", { class: "toolbar" }, [picker]));
    root.append(el("div", { id: "annotation-body" }));
    document.addEventListener("keydown", this.onKey);
  }

  unmount(): void {
    document.removeEventListener("keydown", this.onKey);
  }

  private onKey = (event: KeyboardEvent): void => {
    if (!this.state.datasetId) return;
    if (event.target instanceof HTMLInputElement) return;
    if (event.key === "ArrowRight") void this.navigate(1);
    else if (event.key === "ArrowLeft") void this.navigate(-1);
    else if (/^[1-9]$/.test(event.key)) {
      const scheme = this.state.annotations?.schemes[0];
      if (!scheme) return;
      const label = scheme.labels[Number(event.key) - 1];
      if (label) void this.setLabel(scheme.name, label);
    }
  };

  async selectDataset(datasetId: string): Promise<void> {
    this.state.datasetId = datasetId;
    this.state.detections = await this.api.getDetections(datasetId);
    this.state.annotations = await this.api.getAnnotations(datasetId);
    this.state.index = firstUnlabeledIndex(this.state);
    this.renderCurrent();
  }

  async reload(): Promise<void> {
    if (!this.state.datasetId) return;
    this.state.annotations = await this.api.getAnnotations(this.state.datasetId);
    this.renderCurrent();
  }

  async navigate(step: number): Promise<void> {
    const n = this.state.detections.length;
    if (n === 0) return;
    const next = this.state.index + step;
    // moving past the last box wraps to the first box still missing a label
    this.state.index = next >= n ? firstUnlabeledIndex(this.state) : (next + n) % n;
    this.renderCurrent();
  }

  async setLabel(schemeName: string, label: string | null): Promise<void> {
    const { datasetId, annotations, detections, index } = this.state;
    if (!datasetId || !annotations) return;
    const bboxId = detections[index].bbox_id;
    try {
      const resp = await this.api.putAnnotation(datasetId, bboxId, { [schemeName]: label }, annotations.revision);
      annotations.revision = resp.revision;
      const rec = (annotations.records[bboxId] = annotations.records[bboxId] ?? {});
      if (label === null) delete rec[schemeName];
      else rec[schemeName] = label;
      this.renderCurrent();
    } catch (err) {
      this.surfaceWriteError(err);
    }
  }

  async addScheme(name: string, labels: string[]): Promise<void> {
    const { datasetId, annotations } = this.state;
    if (!datasetId || !annotations) return;
    try {
      await this.api.putSchemes(datasetId, [{ name, labels }], annotations.revision);
      await this.reload();
    } catch (err) {
      this.surfaceWriteError(err);
    }
  }

  private surfaceWriteError(err: unknown): void {
    const body = this.body();
    const detail = err instanceof Error ? err.message : String(err);
    statusLine(body, "error", `write rejected (${detail}) — reload to pick up the latest state`);
    const reload = el("button", { class: "reload-prompt" }, ["Reload annotations"]);
    reload.addEventListener("click", () => void this.reload());
    body.prepend(reload);
  }

  private body(): HTMLElement {
    return this.root!.querySelector("#annotation-body") as HTMLElement;
  }

  renderCurrent(): void {
    const body = this.body();
    clear(body);
    const { detections, annotations, index, datasetId } = this.state;
    if (!datasetId || !annotations) return;
    if (detections.length === 0) {
      body.append(el("p", {}, ["This dataset has no detections."]));
      return;
    }
    const det = detections[index];
    const rec = annotations.records[det.bbox_id] ?? {};

    const progress = el("div", { class: "progress", id: "progress" }, [
      `box ${index + 1} / ${detections.length} — ${labeledCount(this.state)} fully labeled`,
    ]);
    body.append(progress);

    const [x, y, w, h] = det.bbox;
    const highlight = el("div", {
      class: "bbox-highlight",
      style: `left:${x * 100}%;top:${y * 100}%;width:${w * 100}%;height:${h * 100}%;`,
    });
    const fullWrap = el("div", { class: "image-wrap" }, [
      el("img", { src: this.api.imageUrl(det.bbox_id, "full"), alt: det.image_id, class: "full-image" }),
      highlight,
    ]);
    const cropImg = el("img", {
      src: this.api.imageUrl(det.bbox_id, "crop"),
      alt: `${det.bbox_id} crop`,
      class: "crop-image",
    });
    body.append(el("div", { class: "annotation-images" }, [fullWrap, cropImg]));
    body.append(
      el("p", { class: "bbox-meta" }, [
        `${det.bbox_id} — detector confidence ${det.confidence.toFixed(3)}`,
      ]),
    );

    const controls = el("div", { class: "label-controls" });
    for (const scheme of annotations.schemes) {
      const select = el("select", { "data-scheme": scheme.name });
      select.append(el("option", { value: "" }, ["(unlabeled)"]));
      for (const label of scheme.labels) {
        const option = el("option", { value: label }, [label]);
        if (rec[scheme.name] === label) option.setAttribute("selected", "selected");
        select.append(option);
      }
      select.addEventListener("change", () => {
        void this.setLabel(scheme.name, select.value === "" ? null : select.value);
      });
      controls.append(el("label", { class: "scheme-label" }, [`${scheme.name}: `, select]));
    }
    body.append(controls);

    const prev = el("button", { id: "prev" }, ["◀ previous"]);
    prev.addEventListener("click", () => void this.navigate(-1));
    const next = el("button", { id: "next" }, ["next ▶"]);
    next.addEventListener("click", () => void this.navigate(1));
    body.append(el("div", { class: "nav" }, [prev, next]));

    const nameInput = el("input", { placeholder: "scheme name (e.g. age)", id: "scheme-name" });
    const labelsInput = el("input", {
      placeholder: "labels, comma-separated (e.g. adult, juvenile, unknown)",
      id: "scheme-labels",
    });
    const addButton = el("button", { id: "add-scheme" }, ["Save scheme"]);
    addButton.addEventListener("click", () => {
      const labels = labelsInput.value.split(",").map((s) => s.trim()).filter(Boolean);
      if (nameInput.value.trim() && labels.length > 0) {
        void this.addScheme(nameInput.value.trim(), labels);
      }
    });
    body.append(
      el("details", { class: "scheme-editor" }, [
        el("summary", {}, ["Define classes"]),
        nameInput,
        labelsInput,
        addButton,
      ]),
    );
  }
}
