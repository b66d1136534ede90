"""Therapy proposal agent, safety constraints, and schedule perturbation.

The constraint set is declarative (forbidden pairs, cumulative dose caps,
named history rules) so it can ship as a JSON table next to a checkpoint.
The rule-based agent is the reference implementation of the proposal
interface; an external (hosted-model) agent only needs to satisfy
:class:`TherapyAgent`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, runtime_checkable

import numpy as np

from .grammar import (
    ADD_OPTIONS,
    CHEMO_OPTIONS,
    CYCLES_MAX,
    CYCLES_MIN,
    DOSE_LEVELS,
    IMMUNO_OPTIONS,
    INTERVAL_MAX,
    INTERVAL_MIN,
    RADIO_OPTIONS,
    SCHEDULE_GRID,
    ClinicalProfile,
    TherapyAction,
    enumerate_actions,
    serialize_action,
)

__all__ = [
    "ConstraintSet",
    "DEFAULT_CONSTRAINTS",
    "PolicyExhaustedError",
    "FeedbackEntry",
    "FeedbackLog",
    "TherapyAgent",
    "RuleBasedAgent",
    "check_constraints",
    "perturb",
    "neighbors",
    "propose_rulebased",
    "sample_grammar_action",
    "format_feedback",
]

_RADIO_MODALITIES = frozenset(m for m in RADIO_OPTIONS if m != "none")
_HISTORY_RULE_NAMES = ("no_reirradiation",)


class PolicyExhaustedError(RuntimeError):
    """Every candidate was filtered out by the safety constraints."""

    def __init__(self, message: str, feedback: "FeedbackLog | None" = None):
        super().__init__(message)
        self.feedback = feedback


@dataclass(frozen=True)
class ConstraintSet:
    """Medical-safety rules every proposed action must satisfy.

    ``forbidden_pairs`` are unordered drug/modality identifier pairs;
    ``dose_caps`` bound cumulative dose_level*cycles per chemo drug;
    ``history_rules`` name predicates over the patient's treatment history.
    """

    forbidden_pairs: tuple[frozenset, ...] = ()
    dose_caps: Mapping[str, float] = field(default_factory=dict)
    history_rules: tuple[str, ...] = ()

    def __post_init__(self):
        pairs = []
        for pair in self.forbidden_pairs:
            fs = frozenset(pair)
            if len(fs) != 2:
                raise ValueError(f"forbidden pair must have two distinct members, got {pair}")
            pairs.append(fs)
        object.__setattr__(self, "forbidden_pairs", tuple(pairs))
        caps = dict(self.dose_caps)
        for drug, cap in caps.items():
            if cap <= 0:
                raise ValueError(f"dose cap for {drug} must be positive, got {cap}")
        object.__setattr__(self, "dose_caps", caps)
        for rule in self.history_rules:
            if rule not in _HISTORY_RULE_NAMES:
                raise ValueError(f"unknown history rule {rule!r}; known: {_HISTORY_RULE_NAMES}")
        object.__setattr__(self, "history_rules", tuple(self.history_rules))

    def to_dict(self) -> dict:
        return {
            "forbidden_pairs": sorted(sorted(p) for p in self.forbidden_pairs),
            "dose_caps": {k: self.dose_caps[k] for k in sorted(self.dose_caps)},
            "history_rules": list(self.history_rules),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ConstraintSet":
        return cls(
            forbidden_pairs=tuple(frozenset(p) for p in d.get("forbidden_pairs", ())),
            dose_caps=dict(d.get("dose_caps", {})),
            history_rules=tuple(d.get("history_rules", ())),
        )


DEFAULT_CONSTRAINTS = ConstraintSet(
    forbidden_pairs=(frozenset({"tmz", "bevacizumab"}),),
    dose_caps={"tmz": 15, "ccnu": 15},
    history_rules=("no_reirradiation",),
)


def check_constraints(
    action: TherapyAction,
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
    profile: ClinicalProfile | None = None,
) -> list[str]:
    """Every violated rule, not only the first. Empty list means valid.

    History-aware rules are skipped when no profile is supplied.
    """
    action.validate()
    violations: list[str] = []
    active = set(action.active_components())
    for pair in constraints.forbidden_pairs:
        if pair <= active:
            a, b = sorted(pair)
            violations.append(f"forbidden co-administration: {a} with {b}")
    if action.chemo in constraints.dose_caps:
        cap = constraints.dose_caps[action.chemo]
        cumulative = action.chemo_dose * action.chemo_cycles
        if cumulative > cap:
            violations.append(
                f"cumulative dose cap exceeded for {action.chemo}: "
                f"{action.chemo_dose}x{action.chemo_cycles}={cumulative} > {cap:g}"
            )
    if profile is not None and "no_reirradiation" in constraints.history_rules:
        prior_radio = _RADIO_MODALITIES & set(profile.treatment_history)
        gives_radio = action.radio != "none" or action.brachy
        if prior_radio and gives_radio:
            violations.append(
                f"re-irradiation not allowed: prior {'+'.join(sorted(prior_radio))} in history"
            )
    return violations


def perturb(action: TherapyAction) -> list[TherapyAction]:
    """Minor single-field variations: dose +-1, cycles +-1, interval +-25%.

    Out-of-bounds variants are dropped (boundary clip); the original is never
    included, and every returned variant is grammar-valid.
    """
    action.validate()
    variants: list[TherapyAction] = []
    if action.chemo != "none":
        for delta in (-1, 1):
            dose = action.chemo_dose + delta
            if DOSE_LEVELS[0] <= dose <= DOSE_LEVELS[-1]:
                variants.append(action.with_changes(chemo_dose=dose))
        for delta in (-1, 1):
            cycles = action.chemo_cycles + delta
            if CYCLES_MIN <= cycles <= CYCLES_MAX:
                variants.append(action.with_changes(chemo_cycles=cycles))
    for factor in (0.75, 1.25):
        interval = int(round(action.interval_days * factor))
        interval = max(INTERVAL_MIN, min(INTERVAL_MAX, interval))
        if interval != action.interval_days:
            variants.append(action.with_changes(interval_days=interval))
    return variants


def neighbors(action: TherapyAction) -> list[TherapyAction]:
    """Perturbation set plus single-component swaps (drug identities,
    modality toggles, and guideline schedule steps)."""
    out = perturb(action)
    for interval in SCHEDULE_GRID:
        if interval != action.interval_days:
            out.append(action.with_changes(interval_days=interval))
    for chemo in CHEMO_OPTIONS:
        if chemo == action.chemo:
            continue
        if chemo == "none":
            candidate = action.with_changes(chemo="none", chemo_dose=0, chemo_cycles=0)
        else:
            dose = action.chemo_dose if action.chemo != "none" else 2
            cycles = action.chemo_cycles if action.chemo != "none" else 3
            candidate = action.with_changes(chemo=chemo, chemo_dose=dose, chemo_cycles=cycles)
        if not candidate.violations():
            out.append(candidate)
    for radio in RADIO_OPTIONS:
        if radio == action.radio:
            continue
        if radio == "none":
            candidate = action.with_changes(radio="none", radio_dose=0)
        else:
            rdose = action.radio_dose if action.radio != "none" else 2
            candidate = action.with_changes(radio=radio, radio_dose=rdose)
        if not candidate.violations():
            out.append(candidate)
    for candidate in (
        action.with_changes(brachy=not action.brachy),
        action.with_changes(immuno="none" if action.immuno != "none" else IMMUNO_OPTIONS[1]),
        action.with_changes(add="none" if action.add != "none" else ADD_OPTIONS[1]),
    ):
        if not candidate.violations():
            out.append(candidate)
    seen: set[str] = {serialize_action(action)}
    unique = []
    for candidate in out:
        key = serialize_action(candidate)
        if key not in seen:
            seen.add(key)
            unique.append(candidate)
    return unique


@dataclass(frozen=True)
class FeedbackEntry:
    action: TherapyAction
    risk: float
    p_1y: float
    iteration: int


class FeedbackLog:
    """Append-only record of scored candidates across planner iterations."""

    def __init__(self):
        self._entries: list[FeedbackEntry] = []
        self._best_trace: list[float] = []

    @property
    def entries(self) -> tuple[FeedbackEntry, ...]:
        return tuple(self._entries)

    @property
    def best_trace(self) -> tuple[float, ...]:
        return tuple(self._best_trace)

    def __len__(self) -> int:
        return len(self._entries)

    def append_iteration(self, entries: Iterable[FeedbackEntry]) -> None:
        batch = list(entries)
        if not batch:
            raise ValueError("an iteration must score at least one candidate")
        self._entries.extend(batch)
        best = min(e.risk for e in self._entries)
        if self._best_trace and best > self._best_trace[-1] + 1e-15:
            raise AssertionError("best-so-far risk increased; log corrupted")
        self._best_trace.append(best)

    def best(self) -> FeedbackEntry | None:
        """Minimum risk; ties keep the earliest-scored candidate."""
        if not self._entries:
            return None
        return min(enumerate(self._entries), key=lambda ie: (ie[1].risk, ie[0]))[1]

    def scored_keys(self) -> set[str]:
        return {serialize_action(e.action) for e in self._entries}


def format_feedback(log: FeedbackLog) -> str:
    """Canonical text rendering, risk ascending; consumable as agent context."""
    lines = ["# scored therapy candidates (risk ascending)"]
    ordered = sorted(log.entries, key=lambda e: (e.risk, serialize_action(e.action)))
    for e in ordered:
        lines.append(f"risk={e.risk:.4f} p1y={e.p_1y:.4f} action: {serialize_action(e.action)}")
    return "\n".join(lines)


@runtime_checkable
class TherapyAgent(Protocol):
    """Proposal interface; implementations must emit 1..m grammar-valid,
    constraint-satisfying actions."""

    def propose(
        self,
        goal: str,
        profile: ClinicalProfile,
        feedback: FeedbackLog,
        m: int,
    ) -> list[TherapyAction]: ...


def _stratified_designs() -> list[TherapyAction]:
    """Seed designs covering every chemo and radio option at least once.

    Guideline-style induction dosing (top dose, cap-respecting cycles) seeds
    the search near the intensity frontier; later iterations walk down from
    there when lower intensity scores better.
    """
    designs: list[TherapyAction] = []
    intervals = (7, 28, 56, 14, 42, 21)
    i = 0
    for chemo in CHEMO_OPTIONS:
        for radio in RADIO_OPTIONS:
            dose, cycles = (3, 5) if chemo != "none" else (0, 0)
            rdose = 3 if radio != "none" else 0
            action = TherapyAction(
                chemo=chemo,
                chemo_dose=dose,
                chemo_cycles=cycles,
                radio=radio,
                radio_dose=rdose,
                brachy=i % 2 == 1,
                immuno=IMMUNO_OPTIONS[i % len(IMMUNO_OPTIONS)],
                add="none",
                interval_days=intervals[i % len(intervals)],
            )
            i += 1
            if not action.violations():
                designs.append(action)
    return designs


def sample_grammar_action(rng: np.random.Generator) -> TherapyAction:
    """Uniform-ish draw from the grammar (guideline schedule grid intervals)."""
    chemo = CHEMO_OPTIONS[int(rng.integers(0, len(CHEMO_OPTIONS)))]
    radio = RADIO_OPTIONS[int(rng.integers(0, len(RADIO_OPTIONS)))]
    action = TherapyAction(
        chemo=chemo,
        chemo_dose=int(rng.integers(DOSE_LEVELS[0], DOSE_LEVELS[-1] + 1)) if chemo != "none" else 0,
        chemo_cycles=int(rng.integers(CYCLES_MIN, CYCLES_MAX + 1)) if chemo != "none" else 0,
        radio=radio,
        radio_dose=int(rng.integers(DOSE_LEVELS[0], DOSE_LEVELS[-1] + 1)) if radio != "none" else 0,
        brachy=bool(rng.integers(0, 2)),
        immuno=IMMUNO_OPTIONS[int(rng.integers(0, len(IMMUNO_OPTIONS)))],
        add=ADD_OPTIONS[int(rng.integers(0, len(ADD_OPTIONS)))],
        interval_days=int(SCHEDULE_GRID[int(rng.integers(0, len(SCHEDULE_GRID)))]),
    )
    if action.violations():
        # Only the all-inactive draw can land here; fall back to a common regimen.
        return TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3, interval_days=28)
    return action


def propose_rulebased(
    goal: str,
    profile: ClinicalProfile,
    feedback: FeedbackLog,
    m: int,
    seed: int,
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
) -> list[TherapyAction]:
    """Reference proposal policy.

    Iteration 0 stratifies over the chemo/radio options; later iterations keep
    the top-ceil(m/2) scored actions and fill with unexplored neighbors of the
    best action. Constraint-violating candidates are never emitted. The goal
    text is carried for external agents and only logged here.
    """
    if m < 1:
        raise ValueError(f"proposal count must be >= 1, got {m}")
    # Purity: the stream depends only on (seed, feedback length), not on call order.
    rng = np.random.default_rng((seed, len(feedback), 0x7A9E))
    picked: list[TherapyAction] = []
    seen: set[str] = set()

    def admit(candidate: TherapyAction) -> bool:
        if len(picked) >= m:
            return False
        if candidate.violations() or check_constraints(candidate, constraints, profile):
            return False
        key = serialize_action(candidate)
        if key in seen:
            return False
        seen.add(key)
        picked.append(candidate)
        return True

    if len(feedback) == 0:
        for action in _stratified_designs():
            admit(action)
        attempts = 0
        while len(picked) < m and attempts < 60 * m:
            admit(sample_grammar_action(rng))
            attempts += 1
    else:
        ordered = sorted(
            feedback.entries, key=lambda e: (e.risk, serialize_action(e.action))
        )
        keep = max(1, math.ceil(m / 2))
        for entry in ordered[:keep]:
            admit(entry.action)
        explored = feedback.scored_keys()
        best = ordered[0].action
        for candidate in neighbors(best):
            if serialize_action(candidate) in explored:
                continue
            admit(candidate)
        # Widen with neighbors of the runners-up, then random exploration.
        for entry in ordered[1:keep]:
            for candidate in neighbors(entry.action):
                if serialize_action(candidate) in explored:
                    continue
                admit(candidate)
        attempts = 0
        while len(picked) < m and attempts < 60 * m:
            admit(sample_grammar_action(rng))
            attempts += 1
    if not picked:
        raise PolicyExhaustedError(
            "no constraint-satisfying candidates could be proposed", feedback
        )
    return picked


@dataclass
class RuleBasedAgent:
    """Deterministic reference agent; the test double for hosted models."""

    seed: int = 0
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS
    exhaustive: bool = False

    def propose(
        self,
        goal: str,
        profile: ClinicalProfile,
        feedback: FeedbackLog,
        m: int,
    ) -> list[TherapyAction]:
        if self.exhaustive and len(feedback) == 0:
            picked = []
            for action in enumerate_actions():
                if check_constraints(action, self.constraints, profile):
                    continue
                picked.append(action)
                if len(picked) >= m:
                    break
            if not picked:
                raise PolicyExhaustedError("grammar exhausted by constraints", feedback)
            return picked
        return propose_rulebased(goal, profile, feedback, m, self.seed, self.constraints)
