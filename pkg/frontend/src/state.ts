/** Event-sourced explorer state.
 *
 * Every mutation is an event; the view state is a pure fold over the event
 * log, so any session is reproducible from its recorded interactions. The
 * trajectory is a tree: committing a branch appends a child stage, and
 * forking moves the cursor to an earlier stage without touching committed
 * nodes.
 */

import type {
  GrammarInfo,
  PatientRecord,
  PlanResponse,
  ScoredCandidate,
  TrajectoryStep,
} from "./types.js";

export interface StageNode {
  id: string;
  parentId: string | null;
  stageIndex: number;
  tDays: number;
  latent: number[][];
  /** action that produced this stage (null at the root observation) */
  committedAction: ScoredCandidate | null;
  /** candidate branches last displayed at this stage, in service order */
  candidates: ScoredCandidate[] | null;
  candidateDt: number | null;
  childIds: string[];
}

export type ExplorerEvent =
  | { kind: "patient_loaded"; record: PatientRecord; grammar: GrammarInfo }
  | { kind: "candidates_loaded"; nodeId: string; dtDays: number; candidates: ScoredCandidate[] }
  | { kind: "branch_committed"; nodeId: string; candidateIndex: number; step: TrajectoryStep }
  | { kind: "cursor_moved"; nodeId: string }
  | { kind: "overlay_loaded"; plan: PlanResponse }
  | { kind: "overlay_cleared" };

export interface ExplorerState {
  grammar: GrammarInfo | null;
  patient: PatientRecord | null;
  nodes: Record<string, StageNode>;
  rootId: string | null;
  cursorId: string | null;
  overlay: PlanResponse | null;
  nextNodeSeq: number;
}

export interface StageView {
  stageIndex: number;
  committedAction: ScoredCandidate | null;
  candidates: ScoredCandidate[];
  riskTrajectory: number[];
}

export function initialState(): ExplorerState {
  return {
    grammar: null,
    patient: null,
    nodes: {},
    rootId: null,
    cursorId: null,
    overlay: null,
    nextNodeSeq: 0,
  };
}

export class StateError extends Error {}

function requireNode(state: ExplorerState, nodeId: string): StageNode {
  const node = state.nodes[nodeId];
  if (!node) throw new StateError(`unknown stage node ${nodeId}`);
  return node;
}

export function reduce(state: ExplorerState, event: ExplorerEvent): ExplorerState {
  switch (event.kind) {
    case "patient_loaded": {
      const visits = event.record.visits;
      const last = visits[visits.length - 1];
      if (!last) throw new StateError("patient record has no visits");
      const rootId = "s0";
      const root: StageNode = {
        id: rootId,
        parentId: null,
        stageIndex: 0,
        tDays: 0,
        latent: last.tokens,
        committedAction: null,
        candidates: null,
        candidateDt: null,
        childIds: [],
      };
      return {
        grammar: event.grammar,
        patient: event.record,
        nodes: { [rootId]: root },
        rootId,
        cursorId: rootId,
        overlay: null,
        nextNodeSeq: 1,
      };
    }
    case "candidates_loaded": {
      const node = requireNode(state, event.nodeId);
      const updated: StageNode = {
        ...node,
        candidates: event.candidates,
        candidateDt: event.dtDays,
      };
      return { ...state, nodes: { ...state.nodes, [node.id]: updated } };
    }
    case "branch_committed": {
      const node = requireNode(state, event.nodeId);
      if (!node.candidates) {
        throw new StateError("cannot commit before candidates are displayed");
      }
      const chosen = node.candidates[event.candidateIndex];
      if (!chosen) {
        throw new StateError(`candidate index ${event.candidateIndex} out of range`);
      }
      const childId = `s${state.nextNodeSeq}`;
      const child: StageNode = {
        id: childId,
        parentId: node.id,
        stageIndex: node.stageIndex + 1,
        tDays: event.step.t_days,
        latent: event.step.latent,
        committedAction: { action: chosen.action, risk: event.step.risk, p_1y: event.step.p_1y },
        candidates: null,
        candidateDt: null,
        childIds: [],
      };
      const parent: StageNode = { ...node, childIds: [...node.childIds, childId] };
      return {
        ...state,
        nodes: { ...state.nodes, [node.id]: parent, [childId]: child },
        cursorId: childId,
        nextNodeSeq: state.nextNodeSeq + 1,
      };
    }
    case "cursor_moved": {
      requireNode(state, event.nodeId);
      return { ...state, cursorId: event.nodeId };
    }
    case "overlay_loaded":
      return { ...state, overlay: event.plan };
    case "overlay_cleared":
      return { ...state, overlay: null };
  }
}

export function replay(events: ExplorerEvent[]): ExplorerState {
  return events.reduce(reduce, initialState());
}

/** Path of stage nodes from the root to the given node. */
export function trajectoryOf(state: ExplorerState, nodeId: string): StageNode[] {
  const path: StageNode[] = [];
  let current: StageNode | null = requireNode(state, nodeId);
  while (current) {
    path.push(current);
    current = current.parentId ? requireNode(state, current.parentId) : null;
  }
  return path.reverse();
}

export function stageView(state: ExplorerState, nodeId: string): StageView {
  const node = requireNode(state, nodeId);
  const path = trajectoryOf(state, nodeId);
  return {
    stageIndex: node.stageIndex,
    committedAction: node.committedAction,
    candidates: node.candidates ?? [],
    riskTrajectory: path.slice(1).map((n) => n.committedAction!.risk),
  };
}

/** Nodes shared between two trajectories (fork prefix). */
export function sharedPrefix(state: ExplorerState, a: string, b: string): StageNode[] {
  const pa = trajectoryOf(state, a);
  const pb = trajectoryOf(state, b);
  const shared: StageNode[] = [];
  for (let i = 0; i < Math.min(pa.length, pb.length); i++) {
    if (pa[i]!.id === pb[i]!.id) shared.push(pa[i]!);
    else break;
  }
  return shared;
}
