/** Browser entry point: binds the explorer controller to the page. */

import { ApiClient, ServiceError } from "./api.js";
import { Explorer } from "./explorer.js";
import { renderCandidates, renderIssues, renderOverlay, renderTrajectory } from "./render.js";
import type { TherapyAction } from "./types.js";

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function actionFromForm(): TherapyAction {
  const chemo = byId<HTMLSelectElement>("chemo").value;
  const radio = byId<HTMLSelectElement>("radio").value;
  return {
    chemo,
    chemo_dose: chemo === "none" ? 0 : Number(byId<HTMLInputElement>("chemo-dose").value),
    chemo_cycles: chemo === "none" ? 0 : Number(byId<HTMLInputElement>("chemo-cycles").value),
    radio,
    radio_dose: radio === "none" ? 0 : Number(byId<HTMLInputElement>("radio-dose").value),
    brachy: byId<HTMLInputElement>("brachy").checked,
    immuno: byId<HTMLSelectElement>("immuno").value,
    add: byId<HTMLSelectElement>("add").value,
    interval_days: Number(byId<HTMLInputElement>("interval").value),
  };
}

async function boot(): Promise<void> {
  const base = (document.body.dataset.serviceUrl ?? "http://127.0.0.1:8420").replace(/\/$/, "");
  const api = new ApiClient(base);
  const explorer = new Explorer(api, (state) => {
    renderTrajectory(byId("trajectory"), state, (nodeId) => explorer.fork(nodeId));
    renderOverlay(byId("overlay"), state.overlay);
    if (state.cursorId) {
      const view = explorer.view();
      renderCandidates(byId("candidates"), view.candidates, (index) => {
        explorer.commitBranch(state.cursorId!, index).catch(showError);
      });
      byId("stage-label").textContent = `stage S${view.stageIndex}`;
    }
  });

  const banner = byId("banner");
  function showError(err: unknown): void {
    if (err instanceof ServiceError) {
      const fields = (err.body as { fields?: { field: string; message: string }[] })?.fields;
      if (fields) {
        renderIssues(byId("issues"), fields);
        return;
      }
      banner.textContent = `service error ${err.status}; retry when the service is reachable`;
    } else {
      banner.textContent = String(err);
    }
    banner.classList.remove("hidden");
  }

  try {
    const grammar = await api.grammar();
    for (const [id, options] of [
      ["chemo", grammar.chemo_options],
      ["radio", grammar.radio_options],
      ["immuno", grammar.immuno_options],
      ["add", grammar.add_options],
    ] as const) {
      const select = byId<HTMLSelectElement>(id);
      select.replaceChildren(
        ...options.map((value) => {
          const opt = document.createElement("option");
          opt.value = value;
          opt.textContent = value;
          return opt;
        }),
      );
    }
  } catch (err) {
    byId<HTMLFieldSetElement>("action-form").disabled = true;
    banner.textContent = "grammar unavailable: action form disabled until the service responds";
    banner.classList.remove("hidden");
  }

  byId<HTMLButtonElement>("load-patient").addEventListener("click", async () => {
    try {
      const raw = JSON.parse(byId<HTMLTextAreaElement>("patient-json").value);
      const issues = await explorer.loadPatient(raw);
      renderIssues(byId("issues"), issues);
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("score-candidates").addEventListener("click", async () => {
    try {
      const dt = Number(byId<HTMLInputElement>("dt").value);
      await explorer.exploreStage(explorer.cursor.id, dt, [actionFromForm()]);
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("auto-plan").addEventListener("click", async () => {
    try {
      await explorer.autoPlan(Number(byId<HTMLInputElement>("dt").value));
    } catch (err) {
      showError(err);
    }
  });

  byId<HTMLButtonElement>("clear-overlay").addEventListener("click", () => {
    explorer.clearOverlay();
  });

  const demo = byId<HTMLButtonElement>("load-demo");
  demo.addEventListener("click", async () => {
    try {
      const response = await fetch("./fixtures/demo_patient.json");
      byId<HTMLTextAreaElement>("patient-json").value = JSON.stringify(await response.json());
    } catch (err) {
      showError(err);
    }
  });
}

boot().catch((err) => {
  console.error(err);
});
