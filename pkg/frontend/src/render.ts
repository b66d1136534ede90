/** DOM rendering helpers. Risk values render to 4 decimals with a monotone
 * color scale; scores are relative, so no clinical units are implied. */

import type { StageNode, ExplorerState } from "./state.js";
import { trajectoryOf } from "./state.js";
import type { ScoredCandidate, TherapyAction, PlanResponse } from "./types.js";

export function formatRisk(risk: number): string {
  return risk.toFixed(4);
}

export function describeAction(action: TherapyAction): string {
  const parts: string[] = [];
  if (action.chemo !== "none") {
    parts.push(`${action.chemo} d${action.chemo_dose} x${action.chemo_cycles}`);
  }
  if (action.radio !== "none") parts.push(`${action.radio} d${action.radio_dose}`);
  if (action.brachy) parts.push("brachytherapy");
  if (action.immuno !== "none") parts.push(action.immuno);
  if (action.add !== "none") parts.push(action.add);
  return `${parts.join(" + ")} / every ${action.interval_days}d`;
}

/** Monotone green->red scale across the candidate list's risk range. */
export function riskColor(risk: number, low: number, high: number): string {
  const t = high > low ? (risk - low) / (high - low) : 0;
  const hue = 130 - 130 * Math.min(1, Math.max(0, t));
  return `hsl(${hue.toFixed(0)}, 70%, 42%)`;
}

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderCandidates(
  container: HTMLElement,
  candidates: ScoredCandidate[],
  onCommit: (index: number) => void,
): void {
  container.replaceChildren();
  if (candidates.length === 0) {
    container.append(el("p", "empty", "no candidates scored yet"));
    return;
  }
  const risks = candidates.map((c) => c.risk);
  const lo = Math.min(...risks);
  const hi = Math.max(...risks);
  candidates.forEach((candidate, index) => {
    const row = el("div", "candidate dashed");
    const badge = el("span", "risk", formatRisk(candidate.risk));
    (badge as HTMLElement).style.color = riskColor(candidate.risk, lo, hi);
    row.append(badge);
    row.append(el("span", "p1y", `p1y ${candidate.p_1y.toFixed(4)}`));
    row.append(el("span", "action", describeAction(candidate.action)));
    const commit = el("button", "commit", "commit") as HTMLButtonElement;
    commit.addEventListener("click", () => onCommit(index));
    row.append(commit);
    container.append(row);
  });
}

export function renderTrajectory(
  container: HTMLElement,
  state: ExplorerState,
  onFork: (nodeId: string) => void,
): void {
  container.replaceChildren();
  if (!state.cursorId) return;
  const lane = trajectoryOf(state, state.cursorId);
  lane.forEach((node: StageNode) => {
    const row = el("div", "stage solid");
    row.append(el("span", "stage-label", `S${node.stageIndex}`));
    row.append(el("span", "t", `${node.tDays.toFixed(0)}d`));
    if (node.committedAction) {
      row.append(el("span", "risk", formatRisk(node.committedAction.risk)));
      row.append(el("span", "action", describeAction(node.committedAction.action)));
    } else {
      row.append(el("span", "action", "baseline observation"));
    }
    const fork = el("button", "fork", "fork from here") as HTMLButtonElement;
    fork.addEventListener("click", () => onFork(node.id));
    row.append(fork);
    container.append(row);
  });
}

export function renderOverlay(container: HTMLElement, plan: PlanResponse | null): void {
  container.replaceChildren();
  if (!plan) return;
  container.append(el("h3", "", "planner suggestion"));
  container.append(
    el("div", "overlay-best",
       `${describeAction(plan.best_action)}  risk ${formatRisk(plan.best_risk)}`),
  );
  container.append(
    el("div", "overlay-meta",
       `${plan.iterations_run} iterations, ${plan.candidate_count} candidates scored`),
  );
  const list = el("ol", "overlay-trace");
  plan.best_risk_trace.forEach((risk, i) => {
    list.append(el("li", "", `round ${i}: best ${formatRisk(risk)}`));
  });
  container.append(list);
}

export function renderIssues(container: HTMLElement, issues: { field: string; message: string }[]): void {
  container.replaceChildren();
  issues.forEach((issue) => {
    container.append(el("div", "issue", `${issue.field}: ${issue.message}`));
  });
}
