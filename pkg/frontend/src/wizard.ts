/**
 * Session creation form. Defaults mirror the engine's: densities 1..300,
 * 24-hour exposures, 25 experiments, vague log-normal priors.
 */

import { ApiClient, SessionCreateRequest, SessionHandle } from "./api.js";

interface ModelLayout {
  id: number;
  mech: string;
  obs: string;
  label: string;
}

const MODEL_LAYOUTS: ModelLayout[] = [
  { id: 1, mech: "type-ii", obs: "beta-binomial", label: "1: beta-binomial, type II" },
  { id: 2, mech: "type-iii", obs: "beta-binomial", label: "2: beta-binomial, type III" },
  { id: 3, mech: "type-ii", obs: "binomial", label: "3: binomial, type II" },
  { id: 4, mech: "type-iii", obs: "binomial", label: "4: binomial, type III" },
];

const PRIOR_COORDS = ["log_a", "log_th", "log_lambda"] as const;

function field(labelText: string, input: HTMLElement): HTMLElement {
  const wrap = document.createElement("label");
  wrap.className = "field";
  const span = document.createElement("span");
  span.textContent = labelText;
  wrap.append(span, input);
  return wrap;
}

function numberInput(name: string, value: number, step = "1"): HTMLInputElement {
  const input = document.createElement("input");
  input.type = "number";
  input.name = name;
  input.step = step;
  input.value = String(value);
  return input;
}

export class SessionWizard {
  readonly element: HTMLElement;
  private readonly error: HTMLElement;

  constructor(
    private readonly api: ApiClient,
    private readonly onCreated: (handle: SessionHandle) => void,
  ) {
    this.element = document.createElement("form");
    this.element.className = "wizard";
    this.element.innerHTML = "<h2>New session</h2>";

    const grid = document.createElement("div");
    grid.className = "wizard-grid";
    grid.append(
      field("first density", numberInput("d_min", 1)),
      field("last density", numberInput("d_max", 300)),
      field("exposure tau (h)", numberInput("tau", 24, "0.5")),
      field("experiments", numberInput("n_experiments", 25)),
      field("particles", numberInput("n_particles", 1000)),
      field("seed", numberInput("seed", 1)),
    );

    const utility = document.createElement("select");
    utility.name = "utility";
    for (const [value, text] of [
      ["te", "total entropy (dual purpose)"],
      ["pe", "parameter estimation"],
      ["md", "model discrimination"],
    ]) {
      const option = document.createElement("option");
      option.value = value;
      option.textContent = text;
      utility.appendChild(option);
    }
    grid.appendChild(field("utility", utility));
    this.element.appendChild(grid);

    const models = document.createElement("fieldset");
    models.className = "wizard-models";
    models.innerHTML = "<legend>candidate models</legend>";
    for (const layout of MODEL_LAYOUTS) {
      const label = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.name = `model_${layout.id}`;
      box.checked = true;
      label.append(box, document.createTextNode(` ${layout.label}`));
      models.appendChild(label);
    }
    this.element.appendChild(models);

    const priors = document.createElement("fieldset");
    priors.className = "wizard-priors";
    priors.innerHTML = "<legend>priors (normal on the log scale)</legend>";
    for (const coord of PRIOR_COORDS) {
      const row = document.createElement("div");
      row.className = "prior-row";
      row.append(
        field(`${coord} mean`, numberInput(`${coord}_mean`, -1.4, "0.05")),
        field(`${coord} sd`, numberInput(`${coord}_sd`, 1.35, "0.05")),
      );
      priors.appendChild(row);
    }
    this.element.appendChild(priors);

    this.error = document.createElement("p");
    this.error.className = "error";
    this.element.appendChild(this.error);

    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "create session";
    this.element.appendChild(submit);

    this.element.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submit();
    });
  }

  private value(name: string): number {
    const input = this.element.querySelector<HTMLInputElement>(`[name="${name}"]`);
    return Number(input?.value);
  }

  buildConfig(): SessionCreateRequest {
    const dMin = Math.round(this.value("d_min"));
    const dMax = Math.round(this.value("d_max"));
    if (!(dMin >= 1) || !(dMax >= dMin)) {
      throw new Error("density grid bounds must satisfy 1 <= first <= last");
    }
    for (const coord of PRIOR_COORDS) {
      if (!(this.value(`${coord}_sd`) > 0)) {
        throw new Error(`${coord} sd must be > 0`);
      }
    }
    const tau = this.value("tau");
    if (!(tau > 0)) throw new Error("tau must be > 0");

    const active = MODEL_LAYOUTS.filter(
      (layout) =>
        this.element.querySelector<HTMLInputElement>(`[name="model_${layout.id}"]`)
          ?.checked,
    );
    if (active.length === 0) throw new Error("keep at least one candidate model");

    const prior: Record<string, { mean: number; sd: number }> = {};
    for (const coord of PRIOR_COORDS) {
      prior[coord] = {
        mean: this.value(`${coord}_mean`),
        sd: this.value(`${coord}_sd`),
      };
    }
    const designs = [];
    for (let d = dMin; d <= dMax; d += 1) designs.push(d);

    const utility = this.element.querySelector<HTMLSelectElement>(
      '[name="utility"]',
    )!.value;
    return {
      designs,
      tau,
      n_experiments: Math.round(this.value("n_experiments")),
      n_particles: Math.round(this.value("n_particles")),
      seed: Math.round(this.value("seed")),
      utility,
      models: active.map((layout) => ({
        id: layout.id,
        mech: layout.mech,
        obs: layout.obs,
        prior,
        prior_model_prob: 1 / active.length,
      })),
    };
  }

  private async submit(): Promise<void> {
    this.error.textContent = "";
    let config: SessionCreateRequest;
    try {
      config = this.buildConfig();
    } catch (err) {
      this.error.textContent = (err as Error).message;
      return;
    }
    try {
      this.onCreated(await this.api.createSession(config));
    } catch (err) {
      this.error.textContent = (err as Error).message;
    }
  }
}
