// DOM layer: pair cards with hotkey labeling, session status, progress chart.
// All state changes round-trip the service; the only mutation path is the
// batch-atomic POST /session/labels.

import { SessionApi } from "./api.js";
import { BatchLabeling } from "./labeling.js";
import { buildProgressSeries, toPolylinePoints } from "./progress.js";
import type { BatchPair, SessionStatus } from "./types.js";

const CATEGORY_LABELS: Record<string, string> = {
  certain_positive: "certain / positive",
  certain_negative: "certain / negative",
  uncertain_positive: "uncertain / positive",
  uncertain_negative: "uncertain / negative",
};

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderPairCard(
  pair: BatchPair,
  columns: string[],
  label: 0 | 1 | undefined,
  onLabel: (pairId: string, label: 0 | 1) => void,
): HTMLElement {
  const card = el("div", "pair-card");
  card.dataset.pairId = pair.pair_id;

  const head = el("div", "pair-head");
  head.appendChild(el("span", `badge ${pair.category}`, CATEGORY_LABELS[pair.category] ?? pair.category));
  head.appendChild(el("span", "prob", `p=${pair.probability.toFixed(3)}`));
  card.appendChild(head);

  const table = el("table", "pair-table");
  const headerRow = el("tr");
  headerRow.appendChild(el("th", undefined, ""));
  for (const column of columns) headerRow.appendChild(el("th", undefined, column));
  table.appendChild(headerRow);
  for (const [rowId, values] of [
    [pair.left_id, pair.left_values],
    [pair.right_id, pair.right_values],
  ] as [string, string[]][]) {
    const row = el("tr");
    row.appendChild(el("th", undefined, rowId));
    for (const value of values) row.appendChild(el("td", undefined, value));
    table.appendChild(row);
  }
  card.appendChild(table);

  const controls = el("div", "controls");
  const dupBtn = el("button", "label-btn dup", "duplicate [1]");
  const nonBtn = el("button", "label-btn non", "not a duplicate [0]");
  dupBtn.addEventListener("click", () => onLabel(pair.pair_id, 1));
  nonBtn.addEventListener("click", () => onLabel(pair.pair_id, 0));
  if (label === 1) dupBtn.classList.add("selected");
  if (label === 0) nonBtn.classList.add("selected");
  controls.appendChild(dupBtn);
  controls.appendChild(nonBtn);
  card.appendChild(controls);
  return card;
}

export class LabelConsole {
  labeling: BatchLabeling | null = null;
  private activeIndex = 0;
  private bootstrapShown = false;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: SessionApi,
  ) {}

  async start(): Promise<void> {
    document.addEventListener("keydown", (event) => this.onKey(event));
    await this.refresh();
  }

  async refresh(): Promise<void> {
    let status: SessionStatus;
    try {
      status = await this.api.getSession();
    } catch (error) {
      this.renderRetry(`service unreachable: ${String(error)}`);
      return;
    }
    if (status.lifecycle === "done") {
      this.render(status, null);
      return;
    }
    try {
      const batch = await this.api.getBatch();
      this.labeling = new BatchLabeling(batch);
      this.activeIndex = 0;
      this.render(status, this.labeling);
    } catch (error) {
      this.renderRetry(`service unreachable: ${String(error)}`);
    }
  }

  onKey(event: KeyboardEvent): void {
    if (!this.labeling) return;
    if (event.key === "1" || event.key === "0") {
      const pairs = this.labeling.batch.pairs;
      if (this.activeIndex < pairs.length) {
        this.setLabel(pairs[this.activeIndex].pair_id, event.key === "1" ? 1 : 0);
      }
    } else if (event.key === "Enter" && this.labeling.allLabeled) {
      void this.submit();
    }
  }

  setLabel(pairId: string, label: 0 | 1): void {
    if (!this.labeling) return;
    this.labeling.setLabel(pairId, label);
    const pairs = this.labeling.batch.pairs;
    const next = pairs.findIndex((p) => this.labeling!.labelOf(p.pair_id) === undefined);
    this.activeIndex = next === -1 ? pairs.length : next;
    this.updateCards();
  }

  async submit(): Promise<void> {
    if (!this.labeling?.allLabeled) return;
    const submission = this.labeling.buildSubmission();
    const banner = this.root.querySelector(".state-banner");
    if (banner) banner.textContent = "retraining…";
    try {
      await this.api.postLabels(submission);
    } catch (error) {
      this.renderRetry(`label submission failed: ${String(error)}`);
      return;
    }
    await this.refresh();
  }

  private renderRetry(message: string): void {
    this.root.textContent = "";
    const banner = el("div", "retry-banner");
    banner.appendChild(el("span", undefined, message));
    const retry = el("button", "retry-btn", "retry");
    retry.addEventListener("click", () => void this.refresh());
    banner.appendChild(retry);
    this.root.appendChild(banner);
  }

  private renderChart(status: SessionStatus): HTMLElement {
    const wrap = el("div", "chart");
    wrap.appendChild(el("h3", undefined, "metrics per iteration"));
    const series = buildProgressSeries(status);
    const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
    svg.setAttribute("viewBox", "0 0 320 120");
    svg.setAttribute("class", "progress-svg");
    for (const [metric, color] of [
      ["f1", "#0a7"],
      ["precision", "#07a"],
      ["recall", "#a70"],
    ] as const) {
      const line = document.createElementNS("http://www.w3.org/2000/svg", "polyline");
      line.setAttribute("fill", "none");
      line.setAttribute("stroke", color);
      line.setAttribute("data-metric", metric);
      line.setAttribute("points", toPolylinePoints(series, metric, 320, 120));
      svg.appendChild(line);
    }
    wrap.appendChild(svg as unknown as HTMLElement);
    const last = series[series.length - 1];
    wrap.appendChild(
      el(
        "div",
        "chart-legend",
        last
          ? `iter ${last.iteration}: F1 ${last.f1.toFixed(3)} P ${last.precision.toFixed(3)} R ${last.recall.toFixed(3)}`
          : "no metrics yet (no test pairs supplied)",
      ),
    );
    return wrap;
  }

  private render(status: SessionStatus, labeling: BatchLabeling | null): void {
    this.root.textContent = "";
    const header = el("div", "session-header");
    header.appendChild(el("h2", undefined, `session ${status.session_id}`));
    header.appendChild(
      el(
        "div",
        "state-banner",
        `${status.lifecycle} · iteration ${status.iteration} · labeled +${status.pools.positive}/−${status.pools.negative} · pool ${status.pools.unlabeled}`,
      ),
    );
    this.root.appendChild(header);
    this.root.appendChild(this.renderChart(status));

    if (!this.bootstrapShown && status.bootstrap_positives.length > 0) {
      const panel = el("details", "bootstrap-panel");
      const summary = el("summary", undefined,
        `auto-labeled positives from bootstrap (${status.bootstrap_positives.length}) — review before trusting`);
      panel.appendChild(summary);
      const list = el("ul");
      for (const pair of status.bootstrap_positives) {
        list.appendChild(el("li", undefined, `${pair.left_id} ↔ ${pair.right_id}`));
      }
      panel.appendChild(list);
      this.root.appendChild(panel);
      this.bootstrapShown = true;
    }

    if (status.lifecycle === "done" || !labeling) {
      this.root.appendChild(el("div", "done-banner", "session complete"));
      return;
    }

    const cards = el("div", "cards");
    cards.id = "cards";
    this.root.appendChild(cards);
    const submit = el("button", "submit-btn", "submit batch");
    submit.id = "submit";
    submit.addEventListener("click", () => void this.submit());
    this.root.appendChild(submit);
    this.updateCards();
  }

  updateCards(): void {
    if (!this.labeling) return;
    const cards = this.root.querySelector("#cards");
    if (!cards) return;
    cards.textContent = "";
    this.labeling.batch.pairs.forEach((pair, index) => {
      const card = renderPairCard(
        pair,
        this.labeling!.batch.columns,
        this.labeling!.labelOf(pair.pair_id),
        (pairId, label) => this.setLabel(pairId, label),
      );
      if (index === this.activeIndex) card.classList.add("active");
      cards.appendChild(card);
    });
    const submit = this.root.querySelector<HTMLButtonElement>("#submit");
    if (submit) {
      submit.disabled = !this.labeling.allLabeled;
      submit.textContent = this.labeling.allLabeled
        ? "submit batch"
        : `submit batch (${this.labeling.labeledCount}/${this.labeling.size} labeled)`;
    }
  }
}
