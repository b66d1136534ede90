"""HTTP service exposing scoring, planning, and rollout over a fixed model.

The checkpoint is loaded once at startup and never mutated; every endpoint
is a pure function of the request body and the snapshot, so concurrent
identical requests return identical bodies. Validation failures return 400
with field-level messages; constraint exhaustion returns 422.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .actor import ActorModel, LatentState, score_action
from .autodiff import ConfigError
from .grammar import (
    ADD_OPTIONS,
    BIOMARKER_NAMES,
    CHEMO_OPTIONS,
    CYCLES_MAX,
    CYCLES_MIN,
    DOSE_LEVELS,
    IMMUNO_OPTIONS,
    INTERVAL_MAX,
    INTERVAL_MIN,
    RADIO_OPTIONS,
    SCHEDULE_GRID,
    SEX_OPTIONS,
    ClinicalProfile,
    TherapyAction,
    ValidationError,
)
from .planner import PlanConfig, Schedule, inverse_evaluate, rollout
from .policy import DEFAULT_CONSTRAINTS, ConstraintSet, PolicyExhaustedError, RuleBasedAgent
from .training import checkpoint_hash, load_checkpoint

__all__ = ["ServiceConfig", "create_app", "serve"]


@dataclass(frozen=True)
class ServiceConfig:
    checkpoint_path: str
    host: str = "127.0.0.1"
    port: int = 8420
    constraints_path: str | None = None
    max_body_bytes: int = 8_000_000
    log_level: str = "info"

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text("utf-8"))
        return cls(**doc)


class LatentPayload(BaseModel):
    tokens: list[list[float]] = Field(description="latent grid, tokens x width")


class ProfilePayload(BaseModel):
    age: float
    sex: str = "unknown"
    biomarkers: dict[str, float] = Field(default_factory=dict)
    treatment_history: list[str] = Field(default_factory=list)


class ActionPayload(BaseModel):
    chemo: str = "none"
    chemo_dose: int = 0
    chemo_cycles: int = 0
    radio: str = "none"
    radio_dose: int = 0
    brachy: bool = False
    immuno: str = "none"
    add: str = "none"
    interval_days: int = 28


class ScoreRequest(BaseModel):
    latent: LatentPayload
    profile: ProfilePayload
    dt_days: float
    action: ActionPayload


class CandidatesRequest(BaseModel):
    latent: LatentPayload
    profile: ProfilePayload
    dt_days: float
    actions: list[ActionPayload]


class PlanRequest(BaseModel):
    latent: LatentPayload
    profile: ProfilePayload
    dt_days: float
    max_iterations: int = 3
    proposals_per_iteration: int = 8
    seed: int = 0


class ScheduleStepPayload(BaseModel):
    t_days: float
    action: ActionPayload


class RolloutRequest(BaseModel):
    latent: LatentPayload
    profile: ProfilePayload
    schedule: list[ScheduleStepPayload]


def _to_latent(payload: LatentPayload, model: ActorModel) -> LatentState:
    arr = np.asarray(payload.tokens, dtype=np.float64)
    expected = (model.config.latent_tokens, model.config.width)
    if arr.ndim != 2 or arr.shape != expected:
        raise ValidationError(
            [f"latent.tokens must have shape {list(expected)}, got {list(arr.shape)}"]
        )
    return LatentState(arr)


def _to_profile(payload: ProfilePayload) -> ClinicalProfile:
    return ClinicalProfile(
        age=payload.age,
        sex=payload.sex,
        biomarkers=payload.biomarkers,
        treatment_history=tuple(payload.treatment_history),
    )


def _to_action(payload: ActionPayload) -> TherapyAction:
    return TherapyAction(**payload.model_dump()).validate()


def _survival_body(p_1y: float, risk: float) -> dict:
    return {"p_1y": p_1y, "risk": risk}


def create_app(
    model: ActorModel,
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
    checkpoint_sha: str = "unsaved",
    max_body_bytes: int = 8_000_000,
) -> FastAPI:
    app = FastAPI(title="oncoplan service", version=__version__)

    @app.exception_handler(RequestValidationError)
    async def on_request_validation(request: Request, exc: RequestValidationError):
        errors = [
            {"field": ".".join(str(p) for p in e["loc"]), "message": e["msg"]}
            for e in exc.errors()
        ]
        return JSONResponse(status_code=400, content={"error": "validation", "fields": errors})

    @app.exception_handler(ValidationError)
    async def on_domain_validation(request: Request, exc: ValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": "validation", "fields": [{"field": "", "message": v} for v in exc.violations]},
        )

    @app.exception_handler(PolicyExhaustedError)
    async def on_exhausted(request: Request, exc: PolicyExhaustedError):
        return JSONResponse(status_code=422, content={"error": "constraints_exhausted", "message": str(exc)})

    @app.middleware("http")
    async def limit_body(request: Request, call_next):
        length = request.headers.get("content-length")
        if length is not None and int(length) > max_body_bytes:
            return JSONResponse(
                status_code=413,
                content={"error": "payload_too_large", "limit_bytes": max_body_bytes},
            )
        return await call_next(request)

    @app.get("/v1/health")
    def health() -> dict:
        return {
            "status": "ok",
            "version": __version__,
            "checkpoint_hash": checkpoint_sha,
            "latent_tokens": model.config.latent_tokens,
            "latent_width": model.config.width,
            "trained": model.trained,
        }

    @app.get("/v1/grammar")
    def grammar() -> dict:
        return {
            "chemo_options": list(CHEMO_OPTIONS),
            "radio_options": list(RADIO_OPTIONS),
            "immuno_options": list(IMMUNO_OPTIONS),
            "add_options": list(ADD_OPTIONS),
            "dose_levels": list(DOSE_LEVELS),
            "cycles_range": [CYCLES_MIN, CYCLES_MAX],
            "interval_range": [INTERVAL_MIN, INTERVAL_MAX],
            "schedule_grid": list(SCHEDULE_GRID),
            "biomarkers": list(BIOMARKER_NAMES),
            "sex_options": list(SEX_OPTIONS),
            "constraints": constraints.to_dict(),
            "latent_tokens": model.config.latent_tokens,
            "latent_width": model.config.width,
        }

    @app.post("/v1/score")
    def score(req: ScoreRequest) -> dict:
        z = _to_latent(req.latent, model)
        out = score_action(z, _to_profile(req.profile), req.dt_days, _to_action(req.action), model)
        return _survival_body(out.p_1y, out.risk)

    @app.post("/v1/candidates")
    def candidates(req: CandidatesRequest) -> dict:
        z = _to_latent(req.latent, model)
        profile = _to_profile(req.profile)
        results = []
        for payload in req.actions:
            action = _to_action(payload)
            out = score_action(z, profile, req.dt_days, action, model)
            results.append(
                {"action": action.to_dict(), **_survival_body(out.p_1y, out.risk)}
            )
        return {"candidates": results}

    @app.post("/v1/plan")
    def plan(req: PlanRequest) -> dict:
        z = _to_latent(req.latent, model)
        profile = _to_profile(req.profile)
        agent = RuleBasedAgent(seed=req.seed, constraints=constraints)
        plan_cfg = PlanConfig(
            max_iterations=req.max_iterations,
            proposals_per_iteration=req.proposals_per_iteration,
            seed=req.seed,
        )
        result = inverse_evaluate(z, profile, req.dt_days, agent, model, constraints, plan_cfg)
        return {
            "best_action": result.best_action.to_dict(),
            "best_risk": result.best_risk,
            "best_p_1y": result.best_p_1y,
            "iterations_run": result.iterations_run,
            "candidate_count": result.candidate_count,
            "best_risk_trace": list(result.feedback.best_trace),
            "feedback": [
                {
                    "action": e.action.to_dict(),
                    "risk": e.risk,
                    "p_1y": e.p_1y,
                    "iteration": e.iteration,
                }
                for e in result.feedback.entries
            ],
        }

    @app.post("/v1/rollout")
    def run_rollout(req: RolloutRequest) -> dict:
        z = _to_latent(req.latent, model)
        profile = _to_profile(req.profile)
        schedule = Schedule.from_pairs(
            [(s.t_days, _to_action(s.action)) for s in req.schedule]
        )
        trajectory = rollout(z, profile, schedule, model)
        return {
            "trajectory": [
                {
                    "t_days": p.t_days,
                    "p_1y": p.p_1y,
                    "risk": p.risk,
                    "action": p.action.to_dict(),
                    "latent": p.latent.tokens.tolist(),
                }
                for p in trajectory
            ]
        }

    return app


def app_from_config(config: ServiceConfig) -> FastAPI:
    path = Path(config.checkpoint_path)
    if not path.exists():
        raise ConfigError(f"checkpoint not found: {path}")
    model = load_checkpoint(path)
    constraints = DEFAULT_CONSTRAINTS
    if config.constraints_path:
        constraints = ConstraintSet.from_dict(
            json.loads(Path(config.constraints_path).read_text("utf-8"))
        )
    return create_app(
        model,
        constraints,
        checkpoint_sha=checkpoint_hash(path),
        max_body_bytes=config.max_body_bytes,
    )


def serve(config: ServiceConfig) -> None:  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    app = app_from_config(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level=config.log_level)
