/**
 * Error / Uncertainty viewing: paginated galleries of misclassified or
 * low-confidence crops with their true/predicted labels and confidence,
 * filterable by predicted class, each linked back to the full image.
 */

import { Api, ReviewPageDto } from "../api.js";
import { clear, el } from "../dom.js";

const PAGE_SIZE = 12;

export class ReviewPage {
  page = 1;
  predicted = "";
  stratumAttribute = "";
  stratum = "";
  experimentId = "";
  runId = "";
  private root: HTMLElement | null = null;

  constructor(private api: Api, private kind: "errors" | "uncertain") {}

  async mount(root: HTMLElement): Promise<void> {
    this.root = root;
    clear(root);
    const title = this.kind === "errors" ? "Error Viewing" : "Uncertainty Viewing";
    root.append(el("h2", {}, [title]));

    const experiments = await this.api.listExperiments();
    const expPicker = el("select", { id: "experiment-picker" });
    const runPicker = el("select", { id: "run-picker" });
    const predictedInput = el("input", { id: "predicted-filter", placeholder: "filter by predicted class" });
    const stratumAttrInput = el("input", { id: "stratum-attr-filter", placeholder: "stratum attribute (e.g. season)" });
    const stratumInput = el("input", { id: "stratum-filter", placeholder: "stratum value (e.g. winter)" });
    for (const summary of experiments) {
      expPicker.append(el("option", { value: summary.experiment_id }, [summary.experiment_id]));
    }
    const fillRuns = () => {
      clear(runPicker);
      const summary = experiments.find((e) => e.experiment_id === expPicker.value);
      for (const runId of summary?.run_ids ?? []) {
        runPicker.append(el("option", { value: runId }, [runId]));
      }
    };
    fillRuns();
    expPicker.addEventListener("change", () => {
      fillRuns();
      this.page = 1;
      void this.refresh();
    });
    runPicker.addEventListener("change", () => {
      this.page = 1;
      void this.refresh();
    });
    predictedInput.addEventListener("change", () => {
      this.predicted = predictedInput.value.trim();
      this.page = 1;
      void this.refresh();
    });
    const onStratumChange = () => {
      this.stratumAttribute = stratumAttrInput.value.trim();
      this.stratum = stratumInput.value.trim();
      this.page = 1;
      void this.refresh();
    };
    stratumAttrInput.addEventListener("change", onStratumChange);
    stratumInput.addEventListener("change", onStratumChange);
    root.append(
      el("div", { class: "toolbar" }, [expPicker, runPicker, predictedInput, stratumAttrInput, stratumInput]),
    );
    root.append(el("div", { id: "review-body" }));
    if (experiments.length > 0) {
      await this.refresh();
    } else {
      (root.querySelector("#review-body") as HTMLElement).append(
        el("p", {}, ["No experiments in the store yet."]),
      );
    }
  }

  async refresh(): Promise<void> {
    const root = this.root!;
    const expPicker = root.querySelector("#experiment-picker") as HTMLSelectElement;
    const runPicker = root.querySelector("#run-picker") as HTMLSelectElement;
    this.experimentId = expPicker.value;
    this.runId = runPicker.value;
    if (!this.experimentId || !this.runId) return;
    const body = root.querySelector("#review-body") as HTMLElement;
    clear(body);
    let data: ReviewPageDto;
    try {
      data = await this.api.getReview(
        this.experimentId, this.runId, this.kind, this.page, PAGE_SIZE,
        this.predicted || undefined,
        this.stratumAttribute || undefined,
        this.stratum || undefined,
      );
    } catch (err) {
      body.append(el("p", { class: "status status-error" }, [String(err)]));
      return;
    }
    this.renderGallery(body, data);
  }

  renderGallery(body: HTMLElement, data: ReviewPageDto): void {
    if (data.total === 0) {
      const what = this.kind === "errors" ? "errors" : "uncertain predictions";
      body.append(el("p", { class: "empty-state", id: "empty-state" }, [`No ${what} for this run.`]));
      return;
    }
    const gallery = el("div", { class: "gallery", id: "gallery" });
    for (const record of data.items) {
      const card = el("div", { class: "card", "data-bbox": record.bbox_id }, [
        el("a", { href: this.api.imageUrl(record.bbox_id, "full"), target: "_blank" }, [
          el("img", { src: this.api.imageUrl(record.bbox_id, "crop"), alt: record.bbox_id }),
        ]),
        el("div", { class: "card-caption" }, [
          el("div", {}, [`true: ${record.true_label}`]),
          el("div", {}, [`predicted: ${record.predicted_label}`]),
          el("div", { "data-value": String(record.confidence) }, [
            `confidence: ${record.confidence.toFixed(3)}`,
          ]),
        ]),
      ]);
      gallery.append(card);
    }
    body.append(gallery);

    const pages = Math.max(1, Math.ceil(data.total / data.page_size));
    const prev = el("button", { id: "page-prev" }, ["◀"]);
    const next = el("button", { id: "page-next" }, ["▶"]);
    if (this.page <= 1) prev.setAttribute("disabled", "disabled");
    if (this.page >= pages) next.setAttribute("disabled", "disabled");
    prev.addEventListener("click", () => {
      this.page -= 1;
      void this.refresh();
    });
    next.addEventListener("click", () => {
      this.page += 1;
      void this.refresh();
    });
    body.append(
      el("div", { class: "pager" }, [
        prev,
        el("span", { id: "page-info" }, [` page ${this.page} / ${pages} (${data.total} total) `]),
        next,
      ]),
    );
  }
}
