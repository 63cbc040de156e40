/**
 * Model Results page: one row per experiment with its aggregate metrics,
 * the test-set class distribution, and collapsible confusion matrices
 * (aggregate and per run). All numbers come straight from the API; the
 * exact value is kept in data-value on every metric cell.
 */

import { Api, ExperimentDetailDto, ExperimentSummaryDto } from "../api.js";
import { clear, el, metricCell } from "../dom.js";

const COLUMNS: [string, (a: NonNullable<ExperimentSummaryDto["aggregate"]>) => number | null][] = [
  ["accuracy", (a) => a.accuracy],
  ["precision", (a) => a.weighted_precision],
  ["recall", (a) => a.weighted_recall],
  ["F1", (a) => a.weighted_f1],
  ["mean confidence", (a) => a.mean_confidence_certain],
  ["mean uncertain", (a) => a.mean_n_excluded],
  ["iterations", (a) => a.iterations],
];

export function confusionTable(labels: string[], matrix: number[][]): HTMLTableElement {
  const table = el("table", { class: "confusion" });
  const header = el("tr", {}, [el("th", {}, ["true \\ predicted"])]);
  for (const label of labels) header.append(el("th", {}, [label]));
  table.append(header);
  matrix.forEach((row, i) => {
    const tr = el("tr", {}, [el("th", {}, [labels[i]])]);
    for (const value of row) {
      const td = el("td", {}, [String(value)]);
      td.dataset.value = String(value);
      tr.append(td);
    }
    table.append(tr);
  });
  return table;
}

export function distributionChart(distribution: Record<string, number>): HTMLElement {
  const wrap = el("div", { class: "distribution" });
  const total = Object.values(distribution).reduce((a, b) => a + b, 0);
  for (const [label, count] of Object.entries(distribution)) {
    const pct = total > 0 ? (100 * count) / total : 0;
    const bar = el("div", { class: "bar", style: `width:${pct.toFixed(1)}%` });
    const row = el("div", { class: "bar-row" }, [
      el("span", { class: "bar-label" }, [label]),
      bar,
      el("span", { class: "bar-count", "data-value": String(count) }, [String(count)]),
    ]);
    wrap.append(row);
  }
  return wrap;
}

export class ResultsPage {
  sortKey = "";
  private summaries: ExperimentSummaryDto[] = [];
  private root: HTMLElement | null = null;

  constructor(private api: Api) {}

  async mount(root: HTMLElement): Promise<void> {
    this.root = root;
    clear(root);
    root.append(el("h2", {}, ["Model Results"]));
    this.summaries = await this.api.listExperiments();
    await this.render();
  }

  sortBy(key: string): void {
    this.sortKey = key;
    const column = COLUMNS.find(([name]) => name === key);
    if (!column) return;
    this.summaries.sort((a, b) => {
      const va = a.aggregate ? column[1](a.aggregate) ?? -Infinity : -Infinity;
      const vb = b.aggregate ? column[1](b.aggregate) ?? -Infinity : -Infinity;
      return vb - va;
    });
  }

  async render(): Promise<void> {
    const root = this.root!;
    let container = root.querySelector("#results-body") as HTMLElement | null;
    if (!container) {
      container = el("div", { id: "results-body" });
      root.append(container);
    }
    clear(container);
    if (this.summaries.length === 0) {
      container.append(el("p", {}, ["No experiments in the store yet."]));
      return;
    }

    const table = el("table", { class: "results-table", id: "results-table" });
    const header = el("tr", {}, [el("th", {}, ["experiment"]), el("th", {}, ["scheme"]), el("th", {}, ["backbone"])]);
    for (const [name] of COLUMNS) {
      const suffix = this.sortKey === name ? " \u25BC" : "";
      const th = el("th", { class: "sortable", "data-sort": name }, [name + suffix]);
      th.addEventListener("click", () => {
        this.sortBy(name);
        void this.render();
      });
      header.append(th);
    }
    table.append(header);

    for (const summary of this.summaries) {
      const tr = el("tr", { "data-experiment": summary.experiment_id }, [
        el("td", {}, [summary.experiment_id]),
        el("td", {}, [summary.scheme]),
        el("td", {}, [summary.backbone]),
      ]);
      if (summary.aggregate) {
        for (const [name, pick] of COLUMNS) {
          const digits = name === "iterations" || name === "mean uncertain" ? 1 : 4;
          const td = el("td", {}, [metricCell(pick(summary.aggregate), name === "iterations" ? 0 : digits)]);
          tr.append(td);
        }
      } else {
        tr.append(el("td", { colspan: String(COLUMNS.length) }, ["(not evaluated)"]));
      }
      table.append(tr);
    }
    container.append(table);

    for (const summary of this.summaries) {
      if (!summary.aggregate) continue;
      const detail = await this.api.getExperiment(summary.experiment_id);
      container.append(this.renderDetail(detail));
    }
  }

  renderDetail(detail: ExperimentDetailDto): HTMLElement {
    const section = el("section", { class: "experiment-detail", "data-experiment": detail.experiment_id });
    section.append(el("h3", {}, [`${detail.experiment_id} — test-set class distribution`]));
    section.append(distributionChart(detail.test_distribution));

    if (detail.aggregate) {
      const agg = el("details", { class: "confusion-section", "data-run": "aggregate" }, [
        el("summary", {}, ["Aggregate confusion matrix"]),
        confusionTable(detail.aggregate.labels, detail.aggregate.pooled_confusion),
      ]);
      section.append(agg);
    }
    for (const [runId, run] of Object.entries(detail.runs)) {
      section.append(
        el("details", { class: "confusion-section", "data-run": runId }, [
          el("summary", {}, [`Confusion matrix — ${runId}`]),
          confusionTable(run.metrics.labels, run.metrics.confusion),
        ]),
      );
    }
    return section;
  }
}
