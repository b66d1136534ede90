"""Iterative minimum-risk action search and policy-conditioned rollout.

The search loop alternates agent proposals, schedule perturbation, safety
filtering, and model scoring, accumulating every scored candidate; the final
action is the risk argmin over the whole union. Rollout recursively applies
the transition model along a user-supplied schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .actor import ActorModel, LatentState, SurvivalOutput, Tensor, score_action, transition
from .autodiff import ConfigError
from .grammar import ClinicalProfile, TherapyAction, ValidationError, serialize_action
from .policy import (
    DEFAULT_CONSTRAINTS,
    ConstraintSet,
    FeedbackEntry,
    FeedbackLog,
    PolicyExhaustedError,
    TherapyAgent,
    check_constraints,
    perturb,
)

__all__ = [
    "PlanConfig",
    "PlanResult",
    "Schedule",
    "ScheduleStep",
    "TrajectoryPoint",
    "inverse_evaluate",
    "rollout",
]

DEFAULT_GOAL = "minimize the predicted risk score"


@dataclass(frozen=True)
class PlanConfig:
    """Search budget: iterations, early-stop threshold, proposals per round."""

    max_iterations: int = 3
    epsilon: float = 1e-4
    proposals_per_iteration: int = 8
    seed: int = 0
    goal: str = DEFAULT_GOAL
    plan_horizon_days: float | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.proposals_per_iteration < 1:
            raise ConfigError("proposals_per_iteration must be >= 1")


@dataclass(frozen=True)
class PlanResult:
    best_action: TherapyAction
    best_risk: float
    best_p_1y: float
    feedback: FeedbackLog
    iterations_run: int
    candidate_count: int

    def __post_init__(self):
        scored = {serialize_action(e.action) for e in self.feedback.entries}
        if serialize_action(self.best_action) not in scored:
            raise AssertionError("best action missing from the scored union")
        best = min(e.risk for e in self.feedback.entries)
        if abs(best - self.best_risk) > 1e-12:
            raise AssertionError("best risk is not the minimum over the union")


def _score_batch(
    candidates: Sequence[TherapyAction],
    z_pre: LatentState,
    profile: ClinicalProfile,
    dt: float,
    model: ActorModel,
    iteration: int,
) -> list[FeedbackEntry]:
    entries = []
    for action in candidates:
        out = score_action(z_pre, profile, dt, action, model)
        entries.append(
            FeedbackEntry(action=action, risk=out.risk, p_1y=out.p_1y, iteration=iteration)
        )
    return entries


def inverse_evaluate(
    z_pre: LatentState,
    profile: ClinicalProfile,
    dt: float,
    agent: TherapyAgent,
    model: ActorModel,
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
    config: PlanConfig | None = None,
) -> PlanResult:
    """Iterative risk-minimizing search over agent proposals.

    Seed round: the agent's initial set is scored directly. Each subsequent
    iteration proposes from accumulated feedback, expands every candidate
    with schedule perturbations, drops constraint violators, scores the
    survivors, and appends them to the feedback. Stops early when the best
    risk improves by less than ``epsilon`` (never on the first iteration);
    returns the argmin over everything scored.
    """
    config = config or PlanConfig()
    feedback = FeedbackLog()
    scored: set[str] = set()

    def fresh(candidates: Sequence[TherapyAction]) -> list[TherapyAction]:
        out = []
        for action in candidates:
            key = serialize_action(action)
            if key in scored:
                continue
            scored.add(key)
            out.append(action)
        return out

    initial = agent.propose(config.goal, profile, feedback, config.proposals_per_iteration)
    initial = [a for a in initial if not check_constraints(a, constraints, profile)]
    if not initial:
        raise PolicyExhaustedError("agent produced no valid initial candidates", feedback)
    to_score = fresh(initial)
    if to_score:
        feedback.append_iteration(
            _score_batch(to_score, z_pre, profile, dt, model, iteration=0)
        )

    iterations_run = 0
    for k in range(1, config.max_iterations + 1):
        proposals = agent.propose(config.goal, profile, feedback, config.proposals_per_iteration)
        expanded: list[TherapyAction] = []
        for action in proposals:
            expanded.append(action)
            expanded.extend(perturb(action))
        survivors = [a for a in expanded if not check_constraints(a, constraints, profile)]
        if not survivors:
            raise PolicyExhaustedError(f"iteration {k}: all candidates violate constraints", feedback)
        best_before = min(e.risk for e in feedback.entries)
        to_score = fresh(survivors)
        if to_score:
            feedback.append_iteration(
                _score_batch(to_score, z_pre, profile, dt, model, iteration=k)
            )
        iterations_run = k
        best_after = min(e.risk for e in feedback.entries)
        if k >= 2 and best_before - best_after < config.epsilon:
            break

    best = feedback.best()
    return PlanResult(
        best_action=best.action,
        best_risk=best.risk,
        best_p_1y=best.p_1y,
        feedback=feedback,
        iterations_run=iterations_run,
        candidate_count=len(scored),
    )


@dataclass(frozen=True)
class ScheduleStep:
    """Observation time (days from the starting state) after applying the action
    over the preceding interval."""

    t_days: float
    action: TherapyAction


@dataclass(frozen=True)
class Schedule:
    steps: tuple[ScheduleStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ValidationError(["a schedule needs at least one step"])
        times = [s.t_days for s in self.steps]
        if times[0] <= 0:
            raise ValidationError([f"first decision point must be > 0, got {times[0]}"])
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValidationError([f"schedule times must strictly increase, got {times}"])
        for s in self.steps:
            s.action.validate()

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[float, TherapyAction]]) -> "Schedule":
        return cls(steps=tuple(ScheduleStep(t_days=float(t), action=a) for t, a in pairs))


@dataclass(frozen=True)
class TrajectoryPoint:
    t_days: float
    latent: LatentState
    p_1y: float
    risk: float
    action: TherapyAction


def rollout(
    z0: LatentState,
    profile: ClinicalProfile,
    schedule: Schedule,
    model: ActorModel,
) -> list[TrajectoryPoint]:
    """Recursive what-if projection along a treatment schedule.

    Each step predicts the state at the step's decision point from the
    previous state under the step's action; survival outputs are per-step
    (pre -> post of that transition). A one-step schedule reproduces
    ``score_action`` exactly.
    """
    params = model.as_tensors()
    trajectory: list[TrajectoryPoint] = []
    current = z0
    t_prev = 0.0
    for step in schedule.steps:
        dt = step.t_days - t_prev
        z_hat, p_1y, risk = transition(current, profile, dt, step.action, model, params=params)
        current = LatentState(z_hat.data, timestamp=step.t_days)
        trajectory.append(
            TrajectoryPoint(
                t_days=step.t_days,
                latent=current,
                p_1y=p_1y.item(),
                risk=risk.item(),
                action=step.action,
            )
        )
        t_prev = step.t_days
    return trajectory
