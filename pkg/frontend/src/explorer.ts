/** Headless explorer controller: mediates the API and the event-sourced
 * state so the UI layer only renders. All scores come from service
 * responses; the controller never computes one. */

import { ApiClient } from "./api.js";
import {
  ExplorerEvent,
  ExplorerState,
  initialState,
  reduce,
  StageNode,
  stageView,
  StateError,
} from "./state.js";
import type { GrammarInfo, ScoredCandidate, TherapyAction } from "./types.js";
import { validatePatientRecord, type FieldIssue } from "./validate.js";

export class Explorer {
  state: ExplorerState = initialState();
  readonly events: ExplorerEvent[] = [];

  constructor(
    private api: ApiClient,
    private onChange: (state: ExplorerState) => void = () => {},
  ) {}

  private dispatch(event: ExplorerEvent): void {
    this.state = reduce(this.state, event);
    this.events.push(event);
    this.onChange(this.state);
  }

  get grammar(): GrammarInfo {
    if (!this.state.grammar) throw new StateError("no patient loaded");
    return this.state.grammar;
  }

  node(nodeId: string): StageNode {
    const node = this.state.nodes[nodeId];
    if (!node) throw new StateError(`unknown stage ${nodeId}`);
    return node;
  }

  get cursor(): StageNode {
    if (!this.state.cursorId) throw new StateError("no patient loaded");
    return this.node(this.state.cursorId);
  }

  /** Fetch the grammar, validate the pasted record, and render stage S0. */
  async loadPatient(raw: unknown): Promise<FieldIssue[]> {
    const grammar = await this.api.grammar();
    const { record, issues } = validatePatientRecord(raw, grammar);
    if (issues.length > 0 || !record) return issues;
    this.dispatch({ kind: "patient_loaded", record, grammar });
    return [];
  }

  /** Score candidate actions at a stage; branches arrive risk-ascending. */
  async exploreStage(
    nodeId: string,
    dtDays: number,
    actions: TherapyAction[],
  ): Promise<ScoredCandidate[]> {
    const node = this.node(nodeId);
    const profile = this.state.patient!.profile;
    const response = await this.api.candidates(node.latent, profile, dtDays, actions);
    const ordered = [...response.candidates].sort((a, b) => a.risk - b.risk);
    this.dispatch({ kind: "candidates_loaded", nodeId, dtDays, candidates: ordered });
    return ordered;
  }

  /** Commit one displayed branch: a single-step rollout extends the lane. */
  async commitBranch(nodeId: string, candidateIndex: number): Promise<StageNode> {
    const node = this.node(nodeId);
    if (!node.candidates || node.candidateDt === null) {
      throw new StateError("no candidates displayed at this stage");
    }
    const chosen = node.candidates[candidateIndex];
    if (!chosen) throw new StateError(`candidate ${candidateIndex} out of range`);
    const profile = this.state.patient!.profile;
    const response = await this.api.rollout(node.latent, profile, [
      { t_days: node.candidateDt, action: chosen.action },
    ]);
    const step = response.trajectory[response.trajectory.length - 1];
    if (!step) throw new StateError("rollout returned an empty trajectory");
    this.dispatch({
      kind: "branch_committed",
      nodeId,
      candidateIndex,
      step: { ...step, t_days: node.tDays + step.t_days },
    });
    return this.cursor;
  }

  /** Fork: move the cursor to an earlier committed stage. */
  fork(nodeId: string): void {
    this.dispatch({ kind: "cursor_moved", nodeId });
  }

  /** One-click planner overlay from the current stage. */
  async autoPlan(dtDays: number, seed = 0): Promise<void> {
    const node = this.cursor;
    const profile = this.state.patient!.profile;
    const plan = await this.api.plan(node.latent, profile, dtDays, { seed });
    this.dispatch({ kind: "overlay_loaded", plan });
  }

  clearOverlay(): void {
    this.dispatch({ kind: "overlay_cleared" });
  }

  view(nodeId?: string) {
    return stageView(this.state, nodeId ?? this.state.cursorId!);
  }
}
