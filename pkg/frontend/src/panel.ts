/**
 * The iterate panel: fetch the next proposed density, show its utility
 * curve, take the observed kill count, and re-render posteriors from the
 * server's answer. No undo: an observation is a physical event.
 */

import {
  ApiClient,
  ApiError,
  DesignResponse,
  ExperimentRecord,
  ModelMarginals,
  SessionHandle,
} from "./api.js";
import {
  marginalSketch,
  precisionSparkline,
  probabilityBars,
  utilityCurve,
} from "./charts.js";

interface Snapshot {
  iteration: number;
  marginals: ModelMarginals[];
}

export class IteratePanel {
  readonly element: HTMLElement;
  private readonly status: HTMLElement;
  private readonly error: HTMLElement;
  private readonly proposalBox: HTMLElement;
  private readonly observationBox: HTMLElement;
  private readonly probsBox: HTMLElement;
  private readonly marginalsBox: HTMLElement;
  private readonly snapshotSelect: HTMLSelectElement;
  private readonly sparklineBox: HTMLElement;
  private readonly historyBody: HTMLElement;

  private records: ExperimentRecord[] = [];
  private snapshots: Snapshot[] = [];
  private modelIds: number[] = [];
  private proposal: DesignResponse | null = null;
  private handle: SessionHandle | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly sessionId: string,
  ) {
    this.element = document.createElement("section");
    this.element.className = "panel";
    this.element.innerHTML = `
      <header>
        <h2>session <code class="session-id"></code></h2>
        <p class="status"></p>
      </header>
      <p class="error" role="alert"></p>
      <div class="proposal-box"></div>
      <div class="observation-box"></div>
      <div class="results">
        <div class="probs-box"></div>
        <div class="sparkline-box"></div>
      </div>
      <div class="snapshot-bar">
        <label>posterior snapshot
          <select class="snapshot-select"></select>
        </label>
      </div>
      <div class="marginals-box"></div>
      <table class="history">
        <thead>
          <tr><th>#</th><th>density</th><th>consumed</th><th>top model</th></tr>
        </thead>
        <tbody></tbody>
      </table>
    `;
    this.element.querySelector(".session-id")!.textContent = sessionId;
    this.status = this.element.querySelector(".status")!;
    this.error = this.element.querySelector(".error")!;
    this.proposalBox = this.element.querySelector(".proposal-box")!;
    this.observationBox = this.element.querySelector(".observation-box")!;
    this.probsBox = this.element.querySelector(".probs-box")!;
    this.marginalsBox = this.element.querySelector(".marginals-box")!;
    this.sparklineBox = this.element.querySelector(".sparkline-box")!;
    this.historyBody = this.element.querySelector("tbody")!;
    this.snapshotSelect = this.element.querySelector(".snapshot-select")!;
    this.snapshotSelect.addEventListener("change", () => this.renderMarginals());
  }

  /** Rebuild the whole view from server state (initial load or refresh). */
  async restore(): Promise<void> {
    const info = await this.api.getSession(this.sessionId);
    this.handle = info;
    this.modelIds = info.model_ids;
    const history = await this.api.getHistory(this.sessionId);
    this.records = history.records;
    this.snapshots = [];
    if (this.records.length > 0) {
      const { marginals } = await this.api.getMarginals(this.sessionId);
      this.snapshots.push({ iteration: this.records.length, marginals });
    }
    this.renderStatus(info.status);
    this.renderProbabilities(info.model_probabilities);
    this.renderHistory();
    this.renderSnapshotOptions();
    this.renderMarginals();
    this.renderSparkline();
    if (info.status === "awaiting-observation") {
      // a design was already proposed; fetching it again is idempotent
      this.proposal = await this.api.getDesign(this.sessionId);
      this.renderProposal();
    } else if (info.status === "awaiting-design") {
      this.renderProposeButton();
    }
  }

  private renderStatus(status: string): void {
    const n = this.handle?.n_experiments ?? 0;
    this.status.textContent =
      `${this.records.length} of ${n} experiments recorded - ${status}`;
    this.status.dataset.status = status;
  }

  private renderProposeButton(): void {
    this.proposalBox.innerHTML = "";
    this.observationBox.innerHTML = "";
    const button = document.createElement("button");
    button.className = "propose";
    button.textContent = "propose next design";
    button.addEventListener("click", () => void this.fetchDesign());
    this.proposalBox.appendChild(button);
  }

  private async fetchDesign(): Promise<void> {
    this.error.textContent = "";
    try {
      this.proposal = await this.api.getDesign(this.sessionId);
    } catch (err) {
      this.showError(err);
      return;
    }
    this.renderStatus("awaiting-observation");
    this.renderProposal();
  }

  private renderProposal(): void {
    const proposal = this.proposal;
    if (!proposal) return;
    this.proposalBox.innerHTML = "";
    const headline = document.createElement("p");
    headline.className = "proposal";
    headline.innerHTML =
      `experiment ${proposal.iteration}: use ` +
      `<strong class="proposal-value" data-proposal="${proposal.proposal}">` +
      `${proposal.proposal}</strong> prey`;
    this.proposalBox.appendChild(headline);
    if (proposal.surface) {
      this.proposalBox.appendChild(utilityCurve(proposal.surface));
    }
    this.renderObservationForm(proposal.proposal);
  }

  private renderObservationForm(design: number): void {
    this.observationBox.innerHTML = "";
    const form = document.createElement("form");
    form.className = "observation-form";
    const input = document.createElement("input");
    input.type = "number";
    input.name = "observed";
    input.min = "0";
    input.max = String(design);
    input.required = true;
    input.placeholder = `0-${design}`;
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "record observation";
    form.append(
      (() => {
        const label = document.createElement("label");
        label.textContent = `prey consumed out of ${design}: `;
        label.appendChild(input);
        return label;
      })(),
      submit,
    );
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const observed = Number(input.value);
      if (!Number.isInteger(observed) || observed < 0 || observed > design) {
        this.error.textContent =
          `observed count must be a whole number between 0 and ${design}`;
        return;
      }
      void this.submitObservation(design, observed);
    });
    this.observationBox.appendChild(form);
  }

  private async submitObservation(design: number, observed: number): Promise<void> {
    this.error.textContent = "";
    let response;
    try {
      response = await this.api.submitObservation(this.sessionId, design, observed);
    } catch (err) {
      this.showError(err);
      return;
    }
    this.records.push(response.record);
    this.snapshots.push({
      iteration: this.records.length,
      marginals: response.marginals,
    });
    this.proposal = null;
    this.renderStatus(response.status);
    this.renderProbabilities(response.model_probabilities);
    this.renderHistory();
    this.renderSnapshotOptions();
    this.renderMarginals();
    this.renderSparkline();
    for (const warning of response.warnings) {
      const note = document.createElement("p");
      note.className = "warning";
      note.textContent = warning;
      this.probsBox.prepend(note);
    }
    if (response.status === "awaiting-design") {
      this.renderProposeButton();
    } else {
      this.proposalBox.innerHTML = "<p class='done'>all experiments recorded</p>";
      this.observationBox.innerHTML = "";
    }
  }

  private renderProbabilities(probabilities: number[]): void {
    this.probsBox.innerHTML = "<h3>model probabilities</h3>";
    this.probsBox.appendChild(probabilityBars(this.modelIds, probabilities));
  }

  private renderSnapshotOptions(): void {
    this.snapshotSelect.innerHTML = "";
    for (const snap of this.snapshots) {
      const option = document.createElement("option");
      option.value = String(snap.iteration);
      option.textContent = `after experiment ${snap.iteration}`;
      this.snapshotSelect.appendChild(option);
    }
    if (this.snapshots.length > 0) {
      this.snapshotSelect.value = String(
        this.snapshots[this.snapshots.length - 1].iteration,
      );
    }
  }

  private renderMarginals(): void {
    this.marginalsBox.innerHTML = "";
    if (this.snapshots.length === 0) return;
    const wanted = Number(this.snapshotSelect.value);
    const snap =
      this.snapshots.find((s) => s.iteration === wanted) ??
      this.snapshots[this.snapshots.length - 1];
    for (const model of snap.marginals) {
      const card = document.createElement("div");
      card.className = "marginal-card";
      card.dataset.model = String(model.model);
      const title = document.createElement("h4");
      title.textContent = `model ${model.model}`;
      card.appendChild(title);
      for (const [coord, hist] of Object.entries(model.histograms)) {
        card.appendChild(marginalSketch(coord, hist));
      }
      this.marginalsBox.appendChild(card);
    }
  }

  private renderSparkline(): void {
    this.sparklineBox.innerHTML = "<h3>log precision (top model)</h3>";
    if (this.records.length === 0) return;
    const last = this.records[this.records.length - 1];
    const top = last.model_probs.indexOf(Math.max(...last.model_probs));
    const series = this.records.map((r) => r.log_precisions[top]);
    this.sparklineBox.appendChild(precisionSparkline(series));
  }

  private renderHistory(): void {
    this.historyBody.innerHTML = "";
    this.records.forEach((record) => {
      const row = document.createElement("tr");
      const top = record.model_probs.indexOf(Math.max(...record.model_probs));
      row.innerHTML =
        `<td>${record.index + 1}</td><td>${record.design}</td>` +
        `<td>${record.observed}</td>` +
        `<td>model ${this.modelIds[top]} (${record.model_probs[top].toFixed(3)})</td>`;
      this.historyBody.appendChild(row);
    });
  }

  private showError(err: unknown): void {
    if (err instanceof ApiError) {
      this.error.textContent = `${err.code}: ${err.message}`;
    } else {
      this.error.textContent = String(err);
    }
  }
}
