import pytest
from hypothesis import given, settings, strategies as st

from oncoplan.grammar import (
    BIOMARKER_NAMES,
    SCHEDULE_GRID,
    ClinicalProfile,
    TherapyAction,
    ValidationError,
    enumerate_actions,
    parse_action,
    serialize_action,
    serialize_profile,
)


def test_grammar_is_finite_and_nonempty():
    actions = list(enumerate_actions())
    assert len(actions) == 12426
    assert len({serialize_action(a) for a in actions}) == len(actions)


def test_round_trip_exhaustive_over_grammar():
    for action in enumerate_actions():
        assert parse_action(serialize_action(action)) == action


def test_default_action_is_valid():
    TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3).validate()


def test_all_none_rejected():
    with pytest.raises(ValidationError, match="at least one component"):
        TherapyAction().validate()


def test_inactive_chemo_with_dose_rejected():
    with pytest.raises(ValidationError, match="inactive"):
        TherapyAction(chemo="none", chemo_dose=2, radio="ebrt_standard", radio_dose=1).validate()


def test_out_of_range_reports_every_violation():
    action = TherapyAction(chemo="tmz", chemo_dose=9, chemo_cycles=0, interval_days=1000)
    with pytest.raises(ValidationError) as exc:
        action.validate()
    assert len(exc.value.violations) >= 3


def test_unknown_drug_rejected():
    with pytest.raises(ValidationError, match="chemo must be one of"):
        TherapyAction(chemo="cisplatin", chemo_dose=1, chemo_cycles=1).validate()


def test_parse_rejects_inconsistent_active_summary():
    a = TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3)
    text = serialize_action(a).replace("active=tmz", "active=ccnu")
    with pytest.raises(ValidationError, match="inconsistent"):
        parse_action(text)


def test_parse_rejects_reordered_tokens():
    a = TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3)
    tokens = serialize_action(a).split()
    tokens[0], tokens[1] = tokens[1], tokens[0]
    with pytest.raises(ValidationError):
        parse_action(" ".join(tokens))


def test_serialization_lowercase_fixed_order():
    a = TherapyAction(chemo="ccnu", chemo_dose=1, chemo_cycles=2, brachy=True, interval_days=14)
    text = serialize_action(a)
    assert text == text.lower()
    keys = [tok.split("=")[0] for tok in text.split()]
    assert keys == [
        "chemo", "chemo_dose", "chemo_cycles", "radio", "radio_dose",
        "brachy", "immuno", "add", "interval_days", "active",
    ]


def test_active_components_order():
    a = TherapyAction(
        chemo="tmz", chemo_dose=1, chemo_cycles=1,
        radio="ebrt_standard", radio_dose=1, brachy=True,
        immuno="pembrolizumab", add="bevacizumab",
    )
    assert a.active_components() == (
        "tmz", "ebrt_standard", "brachytherapy", "pembrolizumab", "bevacizumab",
    )


interval_strategy = st.integers(7, 56)
chemo_strategy = st.sampled_from(["none", "tmz", "ccnu"])


@given(chemo=chemo_strategy, dose=st.integers(1, 3), cycles=st.integers(1, 6),
       interval=interval_strategy, brachy=st.booleans())
@settings(max_examples=200, deadline=None)
def test_round_trip_property_with_offgrid_intervals(chemo, dose, cycles, interval, brachy):
    a = TherapyAction(
        chemo=chemo,
        chemo_dose=dose if chemo != "none" else 0,
        chemo_cycles=cycles if chemo != "none" else 0,
        brachy=brachy,
        interval_days=interval,
    )
    if not a.active_components():
        return
    assert parse_action(serialize_action(a)) == a


class TestClinicalProfile:
    def test_basic_profile(self):
        p = ClinicalProfile(age=61.5, sex="female", biomarkers={"idh_mutation": 1.0})
        assert p.biomarkers["idh_mutation"] == 1.0

    def test_negative_age_rejected(self):
        with pytest.raises(ValidationError):
            ClinicalProfile(age=-1.0)

    def test_unknown_biomarker_rejected(self):
        with pytest.raises(ValidationError, match="unknown biomarker"):
            ClinicalProfile(age=50, biomarkers={"her2": 1.0})

    def test_unknown_sex_rejected(self):
        with pytest.raises(ValidationError):
            ClinicalProfile(age=50, sex="x")

    def test_serialization_fixed_key_order(self):
        p = ClinicalProfile(
            age=63.0,
            sex="male",
            biomarkers={"mgmt_methylation": 1.0, "idh_mutation": 0.0},
            treatment_history=("tmz",),
        )
        text = serialize_profile(p)
        assert text == (
            "age=60s sex=male idh_mutation=0 atrx_loss=na "
            "codeletion_1p19q=na mgmt_methylation=1 history=tmz"
        )

    def test_round_trip_dict(self):
        p = ClinicalProfile(age=40.0, sex="female", biomarkers={"atrx_loss": 1.0},
                            treatment_history=("ebrt_standard",))
        assert ClinicalProfile.from_dict(p.to_dict()) == p

    def test_age_decade_bucketing_shared_tokens(self):
        a = serialize_profile(ClinicalProfile(age=61.0))
        b = serialize_profile(ClinicalProfile(age=69.9))
        assert a == b


def test_schedule_grid_within_interval_bounds():
    for g in SCHEDULE_GRID:
        TherapyAction(chemo="tmz", chemo_dose=1, chemo_cycles=1, interval_days=g).validate()


def test_biomarker_vocabulary_is_declared():
    assert set(BIOMARKER_NAMES) == {
        "idh_mutation", "atrx_loss", "codeletion_1p19q", "mgmt_methylation",
    }
