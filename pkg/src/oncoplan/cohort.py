"""Synthetic longitudinal cohorts with known dynamics and hazards.

The generator produces linear-Gaussian latent trajectories whose treatment
response is built from per-component effect axes, so the hazard-optimal
action is exactly computable (:func:`true_optimal_action`). The same
line-delimited file format doubles as the ingestion contract for externally
extracted cohorts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .actor import LatentState
from .autodiff import ConfigError
from .grammar import ClinicalProfile, TherapyAction, ValidationError, enumerate_actions
from .policy import (
    DEFAULT_CONSTRAINTS,
    ConstraintSet,
    PolicyExhaustedError,
    check_constraints,
    sample_grammar_action,
)

__all__ = [
    "SCHEMA_VERSION",
    "DEFAULT_PLAN_HORIZON",
    "SurvivalLabel",
    "PatientRecord",
    "Cohort",
    "SyntheticDynamics",
    "generate_cohort",
    "true_optimal_action",
    "oracle_hazard",
    "export_cohort",
    "import_cohort",
    "validate_cohort_file",
    "visit_pairs",
    "VisitPair",
]

SCHEMA_VERSION = 1
ONE_YEAR_DAYS = 365.0
DEFAULT_PLAN_HORIZON = 90.0

_COMPONENT_AXES = ("tmz", "ccnu", "radio_std", "radio_hypo", "brachy", "immuno", "bev")


@dataclass(frozen=True)
class SurvivalLabel:
    """Observed time (days from the final visit), event flag, one-year label."""

    time_days: float
    event: int
    one_year: int
    one_year_valid: bool

    def __post_init__(self):
        if self.time_days <= 0:
            raise ValidationError([f"survival time must be positive, got {self.time_days}"])
        if self.event not in (0, 1):
            raise ValidationError([f"event indicator must be 0/1, got {self.event}"])
        if self.one_year not in (0, 1):
            raise ValidationError([f"one-year label must be 0/1, got {self.one_year}"])

    @classmethod
    def from_time_event(cls, time_days: float, event: int) -> "SurvivalLabel":
        one_year = 1 if (event == 1 and time_days <= ONE_YEAR_DAYS) else 0
        valid = bool(time_days > ONE_YEAR_DAYS or (event == 1 and time_days <= ONE_YEAR_DAYS))
        return cls(time_days=float(time_days), event=int(event), one_year=one_year, one_year_valid=valid)

    def to_dict(self) -> dict:
        return {
            "time_days": self.time_days,
            "event": self.event,
            "one_year": self.one_year,
            "one_year_valid": self.one_year_valid,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SurvivalLabel":
        return cls(
            time_days=float(d["time_days"]),
            event=int(d["event"]),
            one_year=int(d["one_year"]),
            one_year_valid=bool(d["one_year_valid"]),
        )


@dataclass(frozen=True, eq=False)
class PatientRecord:
    patient_id: str
    profile: ClinicalProfile
    visits: tuple[LatentState, ...]
    actions: tuple[TherapyAction, ...]
    label: SurvivalLabel

    def __post_init__(self):
        object.__setattr__(self, "visits", tuple(self.visits))
        object.__setattr__(self, "actions", tuple(self.actions))
        if len(self.visits) < 1:
            raise ValidationError(["a patient record needs at least one visit"])
        if len(self.actions) != len(self.visits) - 1:
            raise ValidationError(
                [f"actions count {len(self.actions)} != visits count {len(self.visits)} - 1"]
            )
        times = [v.timestamp for v in self.visits]
        if any(t is None for t in times):
            raise ValidationError(["every visit needs a timestamp"])
        if any(t1 >= t2 for t1, t2 in zip(times, times[1:])):
            raise ValidationError([f"visit timestamps must strictly increase, got {times}"])

    @property
    def final_visit(self) -> LatentState:
        return self.visits[-1]


@dataclass
class Cohort:
    records: list[PatientRecord]
    latent_tokens: int
    width: int

    def __post_init__(self):
        for rec in self.records:
            for v in rec.visits:
                if v.tokens.shape != (self.latent_tokens, self.width):
                    raise ValidationError(
                        [
                            f"patient {rec.patient_id}: latent shape {v.tokens.shape} != "
                            f"({self.latent_tokens}, {self.width})"
                        ]
                    )

    def __len__(self) -> int:
        return len(self.records)

    def patient_ids(self) -> list[str]:
        return [r.patient_id for r in self.records]

    def subset(self, ids: Iterable[str]) -> "Cohort":
        wanted = set(ids)
        return Cohort(
            records=[r for r in self.records if r.patient_id in wanted],
            latent_tokens=self.latent_tokens,
            width=self.width,
        )


@dataclass(frozen=True)
class SyntheticDynamics:
    """Ground-truth world: per-action linear maps, drifts, and hazards.

    The transition matrix and drift for an action are assembled from fixed
    orthonormal effect axes (one per treatment component plus a growth
    direction) scaled by the action's component strengths, so both the
    transition and the hazard of any action reduce to a handful of scalars.
    """

    latent_tokens: int = 4
    width: int = 16
    seed: int = 7
    decay: float = 1.0
    mixing_scale: float = 0.002
    growth_rate: float = 0.9
    shrink: Mapping[str, float] = field(
        default_factory=lambda: {
            "tmz": 0.12,
            "ccnu": 0.12,
            "radio_std": 0.10,
            "radio_hypo": 0.10,
            "brachy": 0.08,
            "immuno": 0.07,
            "bev": 0.07,
        }
    )
    drift: Mapping[str, float] = field(
        default_factory=lambda: {
            "tmz": 0.30,
            "ccnu": 0.30,
            "radio_std": 0.24,
            "radio_hypo": 0.24,
            "brachy": 0.15,
            "immuno": 0.12,
            "bev": 0.12,
        }
    )
    iso_shrink: Mapping[str, float] = field(default_factory=dict)
    offset_scale: float = 0.55
    hazard_scale: float = 1.3
    hazard_offset: float = -3.7
    noise_scale: float = 0.0
    survival_scale_days: float = 480.0

    def __post_init__(self):
        if self.latent_tokens < 1 or self.width < 1:
            raise ConfigError("latent grid dims must be positive")
        if self.state_dim < len(_COMPONENT_AXES) + 1:
            raise ConfigError(
                f"state dim {self.state_dim} too small for {len(_COMPONENT_AXES) + 1} effect axes"
            )
        if self.noise_scale < 0:
            raise ConfigError(f"noise scale must be non-negative, got {self.noise_scale}")
        for table_name in ("shrink", "drift", "iso_shrink"):
            table = getattr(self, table_name)
            unknown = set(table) - set(_COMPONENT_AXES)
            if unknown:
                raise ConfigError(f"{table_name} names unknown components: {sorted(unknown)}")
            object.__setattr__(self, table_name, dict(table))
        radius = self._max_spectral_radius()
        if radius > 1.05:
            raise ConfigError(
                f"spectral radius bound violated: {radius:.4f} > 1.05; trajectories would blow up"
            )

    @property
    def state_dim(self) -> int:
        return self.latent_tokens * self.width

    @cached_property
    def _axes(self) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(self.seed)
        raw = rng.standard_normal((self.state_dim, len(_COMPONENT_AXES) + 2))
        q, _ = np.linalg.qr(raw)
        names = ("growth",) + _COMPONENT_AXES + ("spread",)
        return {name: q[:, i].copy() for i, name in enumerate(names)}

    @cached_property
    def mixing(self) -> np.ndarray:
        rng = np.random.default_rng((self.seed, 1))
        return rng.standard_normal((self.state_dim, self.state_dim)) * (
            self.mixing_scale / np.sqrt(self.state_dim)
        )

    @cached_property
    def hazard_weights(self) -> np.ndarray:
        a = self._axes
        w = 0.9 * a["growth"] + 0.25 * a["spread"]
        for name in ("tmz", "ccnu", "radio_std", "radio_hypo"):
            w = w + 0.55 * a[name]
        for name in ("brachy", "immuno", "bev"):
            w = w + 0.40 * a[name]
        return self.hazard_scale * w

    @cached_property
    def clinical_offsets(self) -> dict[str, np.ndarray]:
        a = self._axes
        s = self.offset_scale
        return {
            "mgmt_methylation=1": s * a["tmz"],
            "mgmt_methylation=0": s * a["ccnu"],
            "idh_mutation=1": s * a["radio_std"],
            "idh_mutation=0": s * a["radio_hypo"],
            "codeletion_1p19q=1": 0.6 * s * a["brachy"],
            "atrx_loss=1": 0.6 * s * a["immuno"],
        }

    def strengths(self, action: TherapyAction) -> dict[str, float]:
        """Per-component treatment strength; schedule density scales them all."""
        action.validate()
        eta = float(np.sqrt(28.0 / action.interval_days))
        s: dict[str, float] = {}
        if action.chemo != "none":
            s[action.chemo] = (action.chemo_dose / 3.0) ** 0.8 * (action.chemo_cycles / 6.0) * eta
        if action.radio != "none":
            key = "radio_std" if action.radio == "ebrt_standard" else "radio_hypo"
            s[key] = (action.radio_dose / 3.0) ** 0.8 * eta
        if action.brachy:
            s["brachy"] = eta
        if action.immuno != "none":
            s["immuno"] = eta
        if action.add != "none":
            s["bev"] = eta
        return s

    def transition_matrix(self, action: TherapyAction) -> np.ndarray:
        s = self.strengths(action)
        diag = self.decay - sum(self.iso_shrink.get(c, 0.0) * v for c, v in s.items())
        a_mat = diag * np.eye(self.state_dim) + self.mixing
        for c, v in s.items():
            kappa = self.shrink.get(c, 0.0)
            if kappa:
                e = self._axes[c]
                a_mat -= v * kappa * np.outer(e, e)
        return a_mat

    def drift_vector(self, action: TherapyAction) -> np.ndarray:
        """Per-year drift; callers scale by dt/365."""
        s = self.strengths(action)
        b = self.growth_rate * self._axes["growth"].copy()
        for c, v in s.items():
            beta = self.drift.get(c, 0.0)
            if beta:
                b -= v * beta * self._axes[c]
        return b

    def clinical_offset(self, profile: ClinicalProfile) -> np.ndarray:
        out = np.zeros(self.state_dim)
        for name, value in profile.biomarkers.items():
            key = f"{name}={value:g}"
            vec = self.clinical_offsets.get(key)
            if vec is not None:
                out = out + vec
        return out

    def step(
        self,
        z: np.ndarray,
        action: TherapyAction,
        dt_days: float,
        profile: ClinicalProfile,
        rng: np.random.Generator | None = None,
    ) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        if z.shape != (self.state_dim,):
            raise ConfigError(f"state dim {z.shape} != {self.state_dim}")
        out = self.transition_matrix(action) @ z
        out = out + self.drift_vector(action) * (dt_days / 365.0)
        out = out + self.clinical_offset(profile)
        if self.noise_scale > 0:
            if rng is None:
                raise ConfigError("noise requested but no rng supplied")
            out = out + self.noise_scale * rng.standard_normal(self.state_dim)
        return out

    def hazard(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        return float(self.hazard_weights @ z + self.hazard_offset)

    def sample_survival_days(self, z_final: np.ndarray, rng: np.random.Generator) -> float:
        rate = np.exp(self.hazard(z_final))
        return float(rng.exponential(1.0) / rate * self.survival_scale_days)

    def _max_spectral_radius(self) -> float:
        probes = [
            TherapyAction(radio="ebrt_standard", radio_dose=1, interval_days=56),
            TherapyAction(
                chemo="tmz",
                chemo_dose=3,
                chemo_cycles=6,
                radio="ebrt_standard",
                radio_dose=3,
                brachy=True,
                immuno="pembrolizumab",
                add="none",
                interval_days=7,
            ),
            TherapyAction(
                chemo="ccnu",
                chemo_dose=3,
                chemo_cycles=6,
                radio="ebrt_hypofractionated",
                radio_dose=3,
                brachy=True,
                immuno="pembrolizumab",
                add="bevacizumab",
                interval_days=7,
            ),
        ]
        radius = 0.0
        for action in probes:
            eigs = np.linalg.eigvals(self.transition_matrix(action))
            radius = max(radius, float(np.max(np.abs(eigs))))
        return radius


def _sample_profile(rng: np.random.Generator) -> ClinicalProfile:
    age = float(np.round(rng.uniform(25, 80), 1))
    sex = "female" if rng.integers(0, 2) == 0 else "male"
    biomarkers = {name: float(rng.integers(0, 2)) for name in
                  ("idh_mutation", "atrx_loss", "codeletion_1p19q", "mgmt_methylation")}
    history: tuple[str, ...] = ()
    draw = rng.uniform()
    if draw < 0.20:
        history = ("ebrt_standard",)
    elif draw < 0.30:
        history = ("tmz",)
    return ClinicalProfile(age=age, sex=sex, biomarkers=biomarkers, treatment_history=history)


def _sample_valid_action(
    rng: np.random.Generator,
    profile: ClinicalProfile,
    constraints: ConstraintSet,
) -> TherapyAction:
    for _ in range(200):
        action = sample_grammar_action(rng)
        if not check_constraints(action, constraints, profile):
            return action
    raise ConfigError("could not sample a constraint-satisfying action after 200 tries")


def generate_cohort(
    n_patients: int,
    dynamics: SyntheticDynamics | None = None,
    seed: int = 0,
    censor_window: tuple[float, float] | None = (250.0, 1600.0),
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
) -> Cohort:
    """Pure function of (n, dynamics, seed): profiles, trajectories, labels.

    Administered actions are sampled from the constraint-satisfying part of
    the grammar so the training support matches what the planner may propose.
    """
    if n_patients < 5:
        raise ConfigError(f"need at least 5 patients, got {n_patients}")
    dyn = dynamics if dynamics is not None else SyntheticDynamics()
    if not isinstance(dyn, SyntheticDynamics):
        raise ConfigError(f"invalid dynamics object: {type(dyn)!r}")
    records: list[PatientRecord] = []
    seeds = np.random.SeedSequence(seed).spawn(n_patients)
    for idx in range(n_patients):
        rng = np.random.default_rng(seeds[idx])
        profile = _sample_profile(rng)
        z = 0.22 * rng.standard_normal(dyn.state_dim) + dyn.clinical_offset(profile)
        n_visits = int(rng.integers(2, 5))
        t = 0.0
        visits = [LatentState(z.reshape(dyn.latent_tokens, dyn.width), timestamp=t)]
        actions: list[TherapyAction] = []
        for _ in range(n_visits - 1):
            action = _sample_valid_action(rng, profile, constraints)
            dt = float(rng.integers(30, 366))
            z = dyn.step(z, action, dt, profile, rng)
            t += dt
            visits.append(LatentState(z.reshape(dyn.latent_tokens, dyn.width), timestamp=t))
            actions.append(action)
        t_true = dyn.sample_survival_days(z, rng)
        if censor_window is not None:
            censor = float(rng.uniform(*censor_window))
        else:
            censor = np.inf
        observed = min(t_true, censor)
        event = int(t_true <= censor)
        label = SurvivalLabel.from_time_event(max(observed, 1e-6), event)
        records.append(
            PatientRecord(
                patient_id=f"p{idx:04d}",
                profile=profile,
                visits=tuple(visits),
                actions=tuple(actions),
                label=label,
            )
        )
    return Cohort(records=records, latent_tokens=dyn.latent_tokens, width=dyn.width)


def _noise_free(dynamics: SyntheticDynamics) -> SyntheticDynamics:
    if dynamics.noise_scale == 0:
        return dynamics
    from dataclasses import replace

    return replace(dynamics, noise_scale=0.0)


def oracle_hazard(
    patient: PatientRecord,
    dynamics: SyntheticDynamics,
    action: TherapyAction,
    dt_days: float = DEFAULT_PLAN_HORIZON,
) -> float:
    """Noise-free hazard of the post-treatment state from the final visit."""
    quiet = _noise_free(dynamics)
    z = patient.final_visit.flat()
    z_post = quiet.step(z, action, dt_days, patient.profile, rng=None)
    return quiet.hazard(z_post)


def true_optimal_action(
    patient: PatientRecord,
    dynamics: SyntheticDynamics,
    dt_days: float = DEFAULT_PLAN_HORIZON,
    constraints: ConstraintSet = DEFAULT_CONSTRAINTS,
) -> TherapyAction:
    """Argmin of the noise-free hazard over the constraint-satisfying grammar.

    The search honors the same safety constraints as the planner; an optimum
    outside the feasible set would be unreachable by construction.
    """
    quiet = _noise_free(dynamics)
    z = patient.final_visit.flat()
    w_h = quiet.hazard_weights
    base_state = quiet.decay * (w_h @ z) + w_h @ (quiet.mixing @ z)
    growth_term = quiet.growth_rate * (w_h @ quiet._axes["growth"]) * (dt_days / 365.0)
    offset_term = w_h @ quiet.clinical_offset(patient.profile) + quiet.hazard_offset
    axis_wz = {c: float(quiet._axes[c] @ z) for c in _COMPONENT_AXES}
    axis_wh = {c: float(w_h @ quiet._axes[c]) for c in _COMPONENT_AXES}
    wz = float(w_h @ z)

    best: TherapyAction | None = None
    best_h = np.inf
    for action in enumerate_actions():
        if check_constraints(action, constraints, patient.profile):
            continue
        s = quiet.strengths(action)
        h = base_state + growth_term + offset_term
        for c, v in s.items():
            h -= v * quiet.iso_shrink.get(c, 0.0) * wz
            h -= v * quiet.shrink.get(c, 0.0) * axis_wh[c] * axis_wz[c]
            h -= v * quiet.drift.get(c, 0.0) * axis_wh[c] * (dt_days / 365.0)
        if h < best_h:
            best_h = h
            best = action
    if best is None:
        raise PolicyExhaustedError(
            f"no constraint-satisfying action exists for patient {patient.patient_id}"
        )
    return best


# ---------------------------------------------------------------------------
# file format


def _record_to_dict(rec: PatientRecord) -> dict:
    return {
        "kind": "patient",
        "patient_id": rec.patient_id,
        "profile": rec.profile.to_dict(),
        "visits": [
            {"t": v.timestamp, "tokens": v.tokens.tolist()} for v in rec.visits
        ],
        "actions": [a.to_dict() for a in rec.actions],
        "label": rec.label.to_dict(),
    }


def _record_from_dict(d: Mapping, line_no: int) -> PatientRecord:
    try:
        visits = tuple(
            LatentState(np.asarray(v["tokens"], dtype=np.float64), timestamp=float(v["t"]))
            for v in d["visits"]
        )
        return PatientRecord(
            patient_id=str(d["patient_id"]),
            profile=ClinicalProfile.from_dict(d["profile"]),
            visits=visits,
            actions=tuple(TherapyAction.from_dict(a) for a in d["actions"]),
            label=SurvivalLabel.from_dict(d["label"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError([f"line {line_no}: malformed patient record: {e}"]) from None


def export_cohort(cohort: Cohort, path: str | Path) -> None:
    """Line-delimited: one header line, then one patient per line."""
    path = Path(path)
    header = {
        "kind": "cohort_header",
        "schema_version": SCHEMA_VERSION,
        "latent_tokens": cohort.latent_tokens,
        "latent_width": cohort.width,
        "n_patients": len(cohort.records),
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in cohort.records:
            fh.write(json.dumps(_record_to_dict(rec), sort_keys=True) + "\n")


def import_cohort(path: str | Path) -> Cohort:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValidationError([f"{path}: empty cohort file"])
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ValidationError([f"line 1: malformed header: {e}"]) from None
    if header.get("kind") != "cohort_header":
        raise ValidationError(["line 1: missing cohort_header"])
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValidationError(
            [f"schema version mismatch: file has {version!r}, reader supports {SCHEMA_VERSION}"]
        )
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as e:
            raise ValidationError([f"line {i}: malformed record: {e}"]) from None
        records.append(_record_from_dict(d, i))
    expected = int(header.get("n_patients", len(records)))
    if expected != len(records):
        raise ValidationError(
            [f"line {len(lines)}: cohort truncated: header declares {expected} patients, found {len(records)}"]
        )
    return Cohort(
        records=records,
        latent_tokens=int(header["latent_tokens"]),
        width=int(header["latent_width"]),
    )


def validate_cohort_file(path: str | Path) -> dict:
    """Parse + invariant-check a cohort file; returns summary statistics."""
    cohort = import_cohort(path)
    n_visits = sum(len(r.visits) for r in cohort.records)
    n_events = sum(r.label.event for r in cohort.records)
    return {
        "n_patients": len(cohort.records),
        "n_visits": n_visits,
        "n_events": n_events,
        "latent_tokens": cohort.latent_tokens,
        "latent_width": cohort.width,
    }


@dataclass(frozen=True)
class VisitPair:
    """One training sample: consecutive visits plus the administered action."""

    patient_id: str
    profile: ClinicalProfile
    z_pre: LatentState
    z_post: LatentState
    action: TherapyAction
    dt_days: float
    time_days: float
    event: int
    one_year: float
    one_year_valid: bool


def visit_pairs(record: PatientRecord) -> list[VisitPair]:
    """Consecutive-visit samples; survival times re-anchored per pair.

    The patient label's clock starts at the final visit, so a pair ending at
    an earlier visit adds the remaining in-study time to the observed time.
    """
    pairs: list[VisitPair] = []
    t_last = record.visits[-1].timestamp
    for pre, post, action in zip(record.visits, record.visits[1:], record.actions):
        time_from_post = record.label.time_days + (t_last - post.timestamp)
        event = record.label.event
        one_year = 1.0 if (event == 1 and time_from_post <= ONE_YEAR_DAYS) else 0.0
        valid = bool(
            time_from_post > ONE_YEAR_DAYS or (event == 1 and time_from_post <= ONE_YEAR_DAYS)
        )
        pairs.append(
            VisitPair(
                patient_id=record.patient_id,
                profile=record.profile,
                z_pre=pre,
                z_post=post,
                action=action,
                dt_days=post.timestamp - pre.timestamp,
                time_days=time_from_post,
                event=event,
                one_year=one_year,
                one_year_valid=valid,
            )
        )
    return pairs
