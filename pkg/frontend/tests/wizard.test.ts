import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { SessionWizard } from "../src/wizard.js";

function buildWizard(): SessionWizard {
  const wizard = new SessionWizard(new ApiClient("http://unused"), () => {});
  document.body.innerHTML = "";
  document.body.appendChild(wizard.element);
  return wizard;
}

function setField(wizard: SessionWizard, name: string, value: string): void {
  wizard.element.querySelector<HTMLInputElement>(`[name="${name}"]`)!.value = value;
}

describe("SessionWizard", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("prefills the standard defaults", () => {
    const wizard = buildWizard();
    const config = wizard.buildConfig();
    expect(config.designs![0]).toBe(1);
    expect(config.designs![config.designs!.length - 1]).toBe(300);
    expect(config.designs).toHaveLength(300);
    expect(config.tau).toBe(24);
    expect(config.n_experiments).toBe(25);
    expect(config.models).toHaveLength(4);
  });

  it("blocks non-positive prior sds client-side", () => {
    const wizard = buildWizard();
    setField(wizard, "log_th_sd", "0");
    expect(() => wizard.buildConfig()).toThrow(/log_th sd/);
    setField(wizard, "log_th_sd", "-1");
    expect(() => wizard.buildConfig()).toThrow(/log_th sd/);
  });

  it("rejects a backwards density grid", () => {
    const wizard = buildWizard();
    setField(wizard, "d_min", "50");
    setField(wizard, "d_max", "10");
    expect(() => wizard.buildConfig()).toThrow(/grid bounds/);
  });

  it("lets models be excluded but never all of them", () => {
    const wizard = buildWizard();
    for (const id of [1, 2, 3]) {
      wizard.element.querySelector<HTMLInputElement>(
        `[name="model_${id}"]`,
      )!.checked = false;
    }
    const config = wizard.buildConfig();
    expect(config.models).toHaveLength(1);
    expect((config.models![0] as { id: number }).id).toBe(4);
    expect((config.models![0] as { prior_model_prob: number }).prior_model_prob).toBe(1);

    wizard.element.querySelector<HTMLInputElement>('[name="model_4"]')!.checked =
      false;
    expect(() => wizard.buildConfig()).toThrow(/at least one/);
  });

  it("splits prior probability equally over kept models", () => {
    const wizard = buildWizard();
    wizard.element.querySelector<HTMLInputElement>('[name="model_2"]')!.checked =
      false;
    const config = wizard.buildConfig();
    const probs = (config.models as { prior_model_prob: number }[]).map(
      (m) => m.prior_model_prob,
    );
    expect(probs).toEqual([1 / 3, 1 / 3, 1 / 3]);
  });
});
