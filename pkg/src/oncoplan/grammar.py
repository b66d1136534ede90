"""Structured therapy actions and clinical profiles.

The action grammar is finite: categorical drug/modality choices with bounded
dose, cycle, and schedule parameters. Canonical text serialization is part of
the external contract — exact token order, lowercase keys — and must round-trip
through :func:`parse_action`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping

__all__ = [
    "ValidationError",
    "TherapyAction",
    "ClinicalProfile",
    "CHEMO_OPTIONS",
    "RADIO_OPTIONS",
    "IMMUNO_OPTIONS",
    "ADD_OPTIONS",
    "DOSE_LEVELS",
    "CYCLES_MIN",
    "CYCLES_MAX",
    "INTERVAL_MIN",
    "INTERVAL_MAX",
    "SCHEDULE_GRID",
    "BIOMARKER_NAMES",
    "SEX_OPTIONS",
    "serialize_action",
    "parse_action",
    "enumerate_actions",
    "serialize_profile",
]

CHEMO_OPTIONS = ("none", "tmz", "ccnu")
RADIO_OPTIONS = ("none", "ebrt_standard", "ebrt_hypofractionated")
IMMUNO_OPTIONS = ("none", "pembrolizumab")
ADD_OPTIONS = ("none", "bevacizumab")
DOSE_LEVELS = (1, 2, 3)
CYCLES_MIN, CYCLES_MAX = 1, 6
# Any integer interval in [INTERVAL_MIN, INTERVAL_MAX] is valid; SCHEDULE_GRID
# lists the guideline re-imaging intervals used for sampling and enumeration.
INTERVAL_MIN, INTERVAL_MAX = 7, 56
SCHEDULE_GRID = (7, 14, 21, 28, 42, 56)

BIOMARKER_NAMES = ("idh_mutation", "atrx_loss", "codeletion_1p19q", "mgmt_methylation")
SEX_OPTIONS = ("female", "male", "unknown")

_ACTION_KEYS = (
    "chemo",
    "chemo_dose",
    "chemo_cycles",
    "radio",
    "radio_dose",
    "brachy",
    "immuno",
    "add",
    "interval_days",
    "active",
)


class ValidationError(ValueError):
    """One or more grammar bounds are violated; carries every violation."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class TherapyAction:
    """One treatment configuration over the five intervention components.

    Inactive components carry zeroed parameters so that serialization stays
    injective over the grammar.
    """

    chemo: str = "none"
    chemo_dose: int = 0
    chemo_cycles: int = 0
    radio: str = "none"
    radio_dose: int = 0
    brachy: bool = False
    immuno: str = "none"
    add: str = "none"
    interval_days: int = 28

    def violations(self) -> list[str]:
        errs: list[str] = []
        if self.chemo not in CHEMO_OPTIONS:
            errs.append(f"chemo must be one of {CHEMO_OPTIONS}, got {self.chemo!r}")
        elif self.chemo == "none":
            if self.chemo_dose != 0 or self.chemo_cycles != 0:
                errs.append("chemo inactive but dose/cycles nonzero")
        else:
            if self.chemo_dose not in DOSE_LEVELS:
                errs.append(f"chemo_dose must be in {DOSE_LEVELS}, got {self.chemo_dose}")
            if not CYCLES_MIN <= self.chemo_cycles <= CYCLES_MAX:
                errs.append(
                    f"chemo_cycles must be in [{CYCLES_MIN}, {CYCLES_MAX}], got {self.chemo_cycles}"
                )
        if self.radio not in RADIO_OPTIONS:
            errs.append(f"radio must be one of {RADIO_OPTIONS}, got {self.radio!r}")
        elif self.radio == "none":
            if self.radio_dose != 0:
                errs.append("radio inactive but dose nonzero")
        elif self.radio_dose not in DOSE_LEVELS:
            errs.append(f"radio_dose must be in {DOSE_LEVELS}, got {self.radio_dose}")
        if self.immuno not in IMMUNO_OPTIONS:
            errs.append(f"immuno must be one of {IMMUNO_OPTIONS}, got {self.immuno!r}")
        if self.add not in ADD_OPTIONS:
            errs.append(f"add must be one of {ADD_OPTIONS}, got {self.add!r}")
        if not isinstance(self.interval_days, int) or isinstance(self.interval_days, bool):
            errs.append(f"interval_days must be an integer, got {self.interval_days!r}")
        elif not INTERVAL_MIN <= self.interval_days <= INTERVAL_MAX:
            errs.append(
                f"interval_days must be in [{INTERVAL_MIN}, {INTERVAL_MAX}], got {self.interval_days}"
            )
        if not errs and not self.active_components():
            errs.append("at least one component must be active")
        return errs

    def validate(self) -> "TherapyAction":
        errs = self.violations()
        if errs:
            raise ValidationError(errs)
        return self

    def active_components(self) -> tuple[str, ...]:
        """Identifiers of the active drugs/modalities, in canonical order."""
        active = []
        if self.chemo != "none":
            active.append(self.chemo)
        if self.radio != "none":
            active.append(self.radio)
        if self.brachy:
            active.append("brachytherapy")
        if self.immuno != "none":
            active.append(self.immuno)
        if self.add != "none":
            active.append(self.add)
        return tuple(active)

    def to_dict(self) -> dict:
        return {
            "chemo": self.chemo,
            "chemo_dose": self.chemo_dose,
            "chemo_cycles": self.chemo_cycles,
            "radio": self.radio,
            "radio_dose": self.radio_dose,
            "brachy": self.brachy,
            "immuno": self.immuno,
            "add": self.add,
            "interval_days": self.interval_days,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TherapyAction":
        try:
            action = cls(
                chemo=str(d.get("chemo", "none")),
                chemo_dose=int(d.get("chemo_dose", 0)),
                chemo_cycles=int(d.get("chemo_cycles", 0)),
                radio=str(d.get("radio", "none")),
                radio_dose=int(d.get("radio_dose", 0)),
                brachy=bool(d.get("brachy", False)),
                immuno=str(d.get("immuno", "none")),
                add=str(d.get("add", "none")),
                interval_days=int(d.get("interval_days", 28)),
            )
        except (TypeError, ValueError) as e:
            raise ValidationError([f"malformed action mapping: {e}"]) from None
        return action.validate()

    def with_changes(self, **kwargs) -> "TherapyAction":
        return replace(self, **kwargs)


def serialize_action(a: TherapyAction) -> str:
    """Canonical single-line text form; token order fixed, keys lowercase."""
    a.validate()
    active = "+".join(a.active_components())
    return (
        f"chemo={a.chemo} chemo_dose={a.chemo_dose} chemo_cycles={a.chemo_cycles} "
        f"radio={a.radio} radio_dose={a.radio_dose} brachy={'yes' if a.brachy else 'no'} "
        f"immuno={a.immuno} add={a.add} interval_days={a.interval_days} active={active}"
    )


def parse_action(text: str) -> TherapyAction:
    tokens = text.strip().split()
    if len(tokens) != len(_ACTION_KEYS):
        raise ValidationError(
            [f"expected {len(_ACTION_KEYS)} tokens, got {len(tokens)}: {text!r}"]
        )
    values: dict[str, str] = {}
    for token, key in zip(tokens, _ACTION_KEYS):
        k, sep, v = token.partition("=")
        if not sep or k != key:
            raise ValidationError([f"expected token {key}=..., got {token!r}"])
        values[k] = v
    try:
        action = TherapyAction(
            chemo=values["chemo"],
            chemo_dose=int(values["chemo_dose"]),
            chemo_cycles=int(values["chemo_cycles"]),
            radio=values["radio"],
            radio_dose=int(values["radio_dose"]),
            brachy={"yes": True, "no": False}[values["brachy"]],
            immuno=values["immuno"],
            add=values["add"],
            interval_days=int(values["interval_days"]),
        )
    except (KeyError, ValueError) as e:
        raise ValidationError([f"malformed action text: {e}"]) from None
    action.validate()
    declared = "+".join(action.active_components())
    if values["active"] != declared:
        raise ValidationError(
            [f"active summary {values['active']!r} inconsistent with components {declared!r}"]
        )
    return action


def enumerate_actions(intervals: tuple[int, ...] = SCHEDULE_GRID) -> Iterator[TherapyAction]:
    """Every grammar action over the guideline schedule grid, canonical order."""
    for chemo in CHEMO_OPTIONS:
        chemo_params = (
            [(0, 0)]
            if chemo == "none"
            else [(d, c) for d in DOSE_LEVELS for c in range(CYCLES_MIN, CYCLES_MAX + 1)]
        )
        for dose, cycles in chemo_params:
            for radio in RADIO_OPTIONS:
                radio_params = [0] if radio == "none" else list(DOSE_LEVELS)
                for rdose in radio_params:
                    for brachy in (False, True):
                        for immuno in IMMUNO_OPTIONS:
                            for add in ADD_OPTIONS:
                                for interval in intervals:
                                    a = TherapyAction(
                                        chemo=chemo,
                                        chemo_dose=dose,
                                        chemo_cycles=cycles,
                                        radio=radio,
                                        radio_dose=rdose,
                                        brachy=brachy,
                                        immuno=immuno,
                                        add=add,
                                        interval_days=interval,
                                    )
                                    if a.violations():
                                        continue
                                    yield a


@dataclass(frozen=True)
class ClinicalProfile:
    """Demographics, molecular biomarkers, and prior-treatment summary.

    ``biomarkers`` maps names from :data:`BIOMARKER_NAMES` to values (0/1 for
    the molecular flags). ``treatment_history`` lists identifiers of previously
    administered drugs/modalities (same vocabulary as action components).
    """

    age: float
    sex: str = "unknown"
    biomarkers: Mapping[str, float] = field(default_factory=dict)
    treatment_history: tuple[str, ...] = ()

    def __post_init__(self):
        errs = []
        if self.age < 0:
            errs.append(f"age must be non-negative, got {self.age}")
        if self.sex not in SEX_OPTIONS:
            errs.append(f"sex must be one of {SEX_OPTIONS}, got {self.sex!r}")
        for name in self.biomarkers:
            if name not in BIOMARKER_NAMES:
                errs.append(f"unknown biomarker {name!r}; declared: {BIOMARKER_NAMES}")
        if errs:
            raise ValidationError(errs)
        object.__setattr__(self, "biomarkers", dict(self.biomarkers))
        object.__setattr__(self, "treatment_history", tuple(self.treatment_history))

    def to_dict(self) -> dict:
        return {
            "age": self.age,
            "sex": self.sex,
            "biomarkers": {k: self.biomarkers[k] for k in sorted(self.biomarkers)},
            "treatment_history": list(self.treatment_history),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ClinicalProfile":
        try:
            return cls(
                age=float(d["age"]),
                sex=str(d.get("sex", "unknown")),
                biomarkers={str(k): float(v) for k, v in dict(d.get("biomarkers", {})).items()},
                treatment_history=tuple(str(x) for x in d.get("treatment_history", ())),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError([f"malformed profile mapping: {e}"]) from None


def serialize_profile(p: ClinicalProfile) -> str:
    """Canonical text form for embedding: fixed key order, lowercase.

    Age is coarsened to its decade so the token vocabulary stays small and
    shared across patients.
    """
    decade = int(p.age // 10) * 10
    parts = [f"age={decade}s", f"sex={p.sex}"]
    for name in BIOMARKER_NAMES:
        value = p.biomarkers.get(name)
        if value is None:
            parts.append(f"{name}=na")
        else:
            parts.append(f"{name}={value:g}")
    history = "+".join(p.treatment_history) if p.treatment_history else "none"
    parts.append(f"history={history}")
    return " ".join(parts)
