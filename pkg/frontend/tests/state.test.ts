import { describe, expect, it } from "vitest";

import {
  initialState,
  reduce,
  replay,
  sharedPrefix,
  stageView,
  StateError,
  trajectoryOf,
  type ExplorerEvent,
} from "../src/state.js";
import { FIXTURE_PATIENT, GRAMMAR } from "./mock_service.js";
import type { ScoredCandidate, TrajectoryStep } from "../src/types.js";

const CANDIDATES: ScoredCandidate[] = [
  {
    action: { chemo: "tmz", chemo_dose: 2, chemo_cycles: 3, radio: "none", radio_dose: 0,
              brachy: false, immuno: "none", add: "none", interval_days: 28 },
    risk: -0.12,
    p_1y: 0.45,
  },
  {
    action: { chemo: "ccnu", chemo_dose: 2, chemo_cycles: 3, radio: "none", radio_dose: 0,
              brachy: false, immuno: "none", add: "none", interval_days: 28 },
    risk: 0.08,
    p_1y: 0.52,
  },
];

function step(tDays: number, risk: number): TrajectoryStep {
  return {
    t_days: tDays,
    risk,
    p_1y: 0.5,
    action: CANDIDATES[0]!.action,
    latent: [[0, 0, 0], [0, 0, 0]],
  };
}

function loaded(): ExplorerEvent[] {
  return [{ kind: "patient_loaded", record: FIXTURE_PATIENT, grammar: GRAMMAR }];
}

describe("event-sourced state", () => {
  it("loads a patient into stage S0 with an empty trajectory", () => {
    const state = replay(loaded());
    expect(state.rootId).toBe("s0");
    const view = stageView(state, state.rootId!);
    expect(view.stageIndex).toBe(0);
    expect(view.riskTrajectory).toEqual([]);
    expect(state.nodes["s0"]!.latent).toEqual(
      FIXTURE_PATIENT.visits[FIXTURE_PATIENT.visits.length - 1]!.tokens,
    );
  });

  it("commit extends the trajectory by exactly one stage", () => {
    const events: ExplorerEvent[] = [
      ...loaded(),
      { kind: "candidates_loaded", nodeId: "s0", dtDays: 90, candidates: CANDIDATES },
      { kind: "branch_committed", nodeId: "s0", candidateIndex: 0, step: step(90, -0.12) },
    ];
    const state = replay(events);
    const lane = trajectoryOf(state, state.cursorId!);
    expect(lane).toHaveLength(2);
    expect(stageView(state, state.cursorId!).riskTrajectory).toEqual([-0.12]);
  });

  it("committed action must come from the displayed candidates", () => {
    const state = replay([
      ...loaded(),
      { kind: "candidates_loaded", nodeId: "s0", dtDays: 90, candidates: CANDIDATES },
    ]);
    expect(() =>
      reduce(state, { kind: "branch_committed", nodeId: "s0", candidateIndex: 5, step: step(90, 0) }),
    ).toThrow(StateError);
    const bare = replay(loaded());
    expect(() =>
      reduce(bare, { kind: "branch_committed", nodeId: "s0", candidateIndex: 0, step: step(90, 0) }),
    ).toThrow(StateError);
  });

  it("fork shares committed prefix stages and leaves them untouched", () => {
    const base: ExplorerEvent[] = [
      ...loaded(),
      { kind: "candidates_loaded", nodeId: "s0", dtDays: 60, candidates: CANDIDATES },
      { kind: "branch_committed", nodeId: "s0", candidateIndex: 0, step: step(60, -0.12) },
      { kind: "candidates_loaded", nodeId: "s1", dtDays: 60, candidates: CANDIDATES },
      { kind: "branch_committed", nodeId: "s1", candidateIndex: 1, step: step(120, 0.08) },
    ];
    let state = replay(base);
    const firstLane = state.cursorId!;
    const s1 = trajectoryOf(state, firstLane)[1]!;
    const frozen = JSON.parse(JSON.stringify(state.nodes[s1.id]));
    state = reduce(state, { kind: "cursor_moved", nodeId: s1.id });
    state = reduce(state, {
      kind: "candidates_loaded", nodeId: s1.id, dtDays: 30, candidates: CANDIDATES,
    });
    state = reduce(state, {
      kind: "branch_committed", nodeId: s1.id, candidateIndex: 1, step: step(90, 0.08),
    });
    const secondLane = state.cursorId!;
    expect(secondLane).not.toBe(firstLane);
    const shared = sharedPrefix(state, firstLane, secondLane);
    expect(shared.map((n) => n.stageIndex)).toEqual([0, 1]);
    // committed stage content unchanged by the fork (besides child bookkeeping)
    const after = state.nodes[s1.id]!;
    expect(after.committedAction).toEqual(frozen.committedAction);
    expect(after.tDays).toEqual(frozen.tDays);
    expect(after.latent).toEqual(frozen.latent);
  });

  it("replay is deterministic", () => {
    const events: ExplorerEvent[] = [
      ...loaded(),
      { kind: "candidates_loaded", nodeId: "s0", dtDays: 45, candidates: CANDIDATES },
      { kind: "branch_committed", nodeId: "s0", candidateIndex: 1, step: step(45, 0.08) },
      { kind: "overlay_loaded", plan: {
        best_action: CANDIDATES[0]!.action, best_risk: -0.2, best_p_1y: 0.4,
        iterations_run: 3, candidate_count: 10, best_risk_trace: [-0.1, -0.2],
        feedback: [],
      } },
    ];
    expect(replay(events)).toEqual(replay(events));
  });

  it("overlay loads and clears without touching the trajectory", () => {
    const events: ExplorerEvent[] = [
      ...loaded(),
      { kind: "candidates_loaded", nodeId: "s0", dtDays: 45, candidates: CANDIDATES },
      { kind: "branch_committed", nodeId: "s0", candidateIndex: 0, step: step(45, -0.12) },
    ];
    let state = replay(events);
    const laneBefore = trajectoryOf(state, state.cursorId!);
    state = reduce(state, {
      kind: "overlay_loaded",
      plan: {
        best_action: CANDIDATES[1]!.action, best_risk: 0.05, best_p_1y: 0.51,
        iterations_run: 2, candidate_count: 9, best_risk_trace: [0.07, 0.05], feedback: [],
      },
    });
    expect(state.overlay?.best_risk).toBe(0.05);
    state = reduce(state, { kind: "overlay_cleared" });
    expect(state.overlay).toBeNull();
    expect(trajectoryOf(state, state.cursorId!)).toEqual(laneBefore);
  });
});
