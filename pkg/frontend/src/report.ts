/** Benchmark report views: metric tables, comparison badges, timing bars. */

import { ApiClient, ApiError, METRIC_NAMES } from "./api.js";
import type { BenchmarkReport, Comparison, SystemReport } from "./api.js";
import { clear, el } from "./dom.js";

function formatScore(value: number | null | undefined): string {
  return value === null || value === undefined ? "n/a" : value.toFixed(3);
}

function flagSummary(flags: Record<string, boolean>): string {
  const parts: string[] = [];
  if (flags.baseline_mode) {
    parts.push("baseline");
  }
  for (const [key, on] of Object.entries(flags)) {
    if (on && key.startsWith("enable_")) {
      parts.push(key.slice("enable_".length));
    }
  }
  return parts.length > 0 ? parts.join(", ") : "all off";
}

export class ReportListView {
  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async init(): Promise<void> {
    const ids = await this.client.listReports();
    clear(this.root);
    this.root.append(el("h2", {}, ["Reports"]));
    if (ids.length === 0) {
      this.root.append(el("p", { class: "empty" }, ["No reports found."]));
      return;
    }
    const items = ids.map((id) =>
      el("li", {}, [el("a", { href: `#/reports/${encodeURIComponent(id)}` }, [id])]),
    );
    this.root.append(el("ul", { class: "report-list" }, items));
  }
}

export class ReportView {
  constructor(
    private readonly client: ApiClient,
    private readonly root: HTMLElement,
  ) {}

  async init(reportId: string): Promise<void> {
    let report: BenchmarkReport;
    try {
      report = await this.client.getReport(reportId);
    } catch (err) {
      if (err instanceof ApiError && err.status === 404) {
        clear(this.root);
        this.root.append(
          el("div", { class: "not-found" }, [`No report named "${reportId}" exists.`]),
        );
        return;
      }
      throw err;
    }
    this.render(reportId, report);
  }

  private render(reportId: string, report: BenchmarkReport): void {
    clear(this.root);
    this.root.append(
      el("h2", {}, [reportId]),
      el("p", { class: "report-meta" }, [
        `${report.dataset_size} questions, ${report.runs} run(s)`,
      ]),
      this.metricsTable(report),
    );
    for (const comparison of report.comparisons) {
      this.root.append(this.comparisonTable(comparison));
    }
    this.root.append(el("h3", {}, ["Step timings"]));
    for (const [name, system] of Object.entries(report.systems)) {
      this.root.append(this.timingBar(name, system));
    }
  }

  private metricsTable(report: BenchmarkReport): HTMLElement {
    const head = el("tr", {}, [
      el("th", {}, ["System"]),
      ...METRIC_NAMES.map((name) => el("th", {}, [name])),
      el("th", {}, ["Errors"]),
    ]);
    const rows = Object.entries(report.systems).map(([name, system]) =>
      el("tr", { class: "system-row" }, [
        el("td", {}, [
          el("div", { class: "system-name" }, [name]),
          el("div", { class: "system-flags" }, [flagSummary(system.flags)]),
        ]),
        ...METRIC_NAMES.map((metric) =>
          el("td", { class: "score" }, [formatScore(system.metric_means[metric])]),
        ),
        el("td", { class: "errors" }, [String(system.errors)]),
      ]),
    );
    return el("table", { class: "metrics" }, [
      el("thead", {}, [head]),
      el("tbody", {}, rows),
    ]);
  }

  private comparisonTable(comparison: Comparison): HTMLElement {
    const rows = comparison.metrics.map((m) => {
      const badge = m.significant
        ? el("span", { class: `badge ${m.magnitude}` }, [m.magnitude.charAt(0).toUpperCase()])
        : el("span", { class: "badge ns" }, ["ns"]);
      return el("tr", {}, [
        el("td", {}, [m.metric]),
        el("td", { class: "score" }, [m.a12.toFixed(3)]),
        el("td", { class: "score" }, [m.p_value.toFixed(4)]),
        el("td", {}, [badge]),
      ]);
    });
    return el("div", { class: "comparison" }, [
      el("h3", {}, [`${comparison.candidate} vs ${comparison.reference}`]),
      el("table", {}, [
        el("thead", {}, [
          el("tr", {}, [
            el("th", {}, ["Metric"]),
            el("th", {}, ["A12"]),
            el("th", {}, ["p-value"]),
            el("th", {}, ["Effect"]),
          ]),
        ]),
        el("tbody", {}, rows),
      ]),
    ]);
  }

  private timingBar(name: string, system: SystemReport): HTMLElement {
    const total = system.timings_ms.total ?? 0;
    const steps = Object.entries(system.timings_ms).filter(([step]) => step !== "total");
    const segments: HTMLElement[] = [];
    const labels: string[] = [];
    for (const [step, ms] of steps) {
      const pct = total > 0 ? (ms / total) * 100 : 0;
      segments.push(
        el("div", {
          class: `bar-segment step-${step}`,
          style: `width: ${pct.toFixed(2)}%`,
          "data-step": step,
          "data-pct": String(pct),
          title: `${step}: ${ms.toFixed(1)} ms`,
        }),
      );
      labels.push(`${step} ${pct.toFixed(1)}%`);
    }
    return el("div", { class: "timing-row" }, [
      el("div", { class: "timing-label" }, [`${name} (${total.toFixed(1)} ms)`]),
      el("div", { class: "timing-bar" }, segments),
      el("div", { class: "timing-steps" }, [labels.join(", ")]),
    ]);
  }
}
