import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oncoplan.autodiff import ConfigError, Tape, Tensor
from oncoplan.encoders import (
    DomainError,
    HashTextEmbedder,
    TemporalConfig,
    embed_action,
    embed_clinical,
    encode_time,
)
from oncoplan.grammar import ClinicalProfile, TherapyAction, enumerate_actions


class TestTemporal:
    def test_dt_zero_identity(self):
        out = encode_time(0.0, TemporalConfig(8))
        assert np.array_equal(out[0::2], np.zeros(4))
        assert np.array_equal(out[1::2], np.ones(4))

    @given(st.floats(0, 3650))
    @settings(max_examples=100, deadline=None)
    def test_pythagorean_identity(self, dt):
        out = encode_time(dt, TemporalConfig(16))
        assert np.allclose(out[0::2] ** 2 + out[1::2] ** 2, 1.0, atol=1e-12)

    def test_hand_case_dt1_d4(self):
        out = encode_time(1.0, TemporalConfig(4))
        w1 = 10000.0 ** -0.5
        w2 = 10000.0 ** -1.0
        expected = [math.sin(w1), math.cos(w1), math.sin(w2), math.cos(w2)]
        assert np.allclose(out, expected, atol=1e-15)
        assert out[0] == pytest.approx(0.0099998, abs=1e-6)
        assert out[1] == pytest.approx(0.99995, abs=1e-5)
        assert out[2] == pytest.approx(1.0e-4, abs=1e-9)

    def test_negative_dt_rejected(self):
        with pytest.raises(DomainError):
            encode_time(-1.0, TemporalConfig(4))

    def test_odd_dim_rejected(self):
        with pytest.raises(ConfigError):
            TemporalConfig(5)

    def test_injective_on_day_grid(self):
        cfg = TemporalConfig(16)
        grid = np.arange(0, 3651, dtype=np.float64)
        encoded = np.stack([encode_time(d, cfg) for d in grid])
        # nearest-neighbor distinctness: every pair of consecutive days differs
        diffs = np.abs(encoded[1:] - encoded[:-1]).max(axis=1)
        assert np.all(diffs > 1e-9)
        # and a coarse global uniqueness check via hashing rounded vectors
        keys = {tuple(np.round(v, 9)) for v in encoded}
        assert len(keys) == grid.size


class TestHashEmbedder:
    def test_deterministic_bitwise(self):
        e = HashTextEmbedder(64)
        a = e.embed("temozolomide three cycles")
        b = HashTextEmbedder(64).embed("temozolomide three cycles")
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        e = HashTextEmbedder(128)
        v = e.embed("radiation weekly schedule")
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-9)

    def test_self_cosine_is_one(self):
        e = HashTextEmbedder(64)
        v = e.embed("abc def")
        assert float(v @ v) == pytest.approx(1.0, abs=1e-12)

    def test_empty_text_rejected(self):
        with pytest.raises(DomainError):
            HashTextEmbedder(64).embed("   ")

    def test_case_and_whitespace_normalization(self):
        e = HashTextEmbedder(64)
        assert np.array_equal(e.embed("Dose  Three"), e.embed("dose three"))

    def test_disjoint_vocabulary_near_orthogonal(self):
        e = HashTextEmbedder(256)
        rng = np.random.default_rng(42)
        words = [f"w{idx}" for idx in range(2000)]
        worst = 0.0
        for _ in range(100):
            lhs = " ".join(rng.choice(words[:1000], size=8, replace=False))
            rhs = " ".join(rng.choice(words[1000:], size=8, replace=False))
            cos = float(e.embed(lhs) @ e.embed(rhs))
            worst = max(worst, abs(cos))
        assert worst < 0.2

    def test_seed_changes_vectors(self):
        a = HashTextEmbedder(64, seed=1).embed("alpha beta")
        b = HashTextEmbedder(64, seed=2).embed("alpha beta")
        assert not np.allclose(a, b)


class TestActionEmbedding:
    def test_identical_actions_identical_vectors(self):
        e = HashTextEmbedder(64)
        a = TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3)
        assert np.array_equal(embed_action(a, e), embed_action(a, e))

    def test_unit_norm_over_whole_grammar_sample(self):
        e = HashTextEmbedder(64)
        for i, action in enumerate(enumerate_actions()):
            if i % 997 == 0:
                assert np.linalg.norm(embed_action(action, e)) == pytest.approx(1.0, abs=1e-9)

    def test_dose_change_closer_than_drug_change(self):
        e = HashTextEmbedder(64)
        base = TherapyAction(chemo="tmz", chemo_dose=2, chemo_cycles=3,
                             radio="ebrt_standard", radio_dose=1)
        dose_variant = base.with_changes(chemo_dose=3)
        drug_variant = base.with_changes(chemo="ccnu")
        v = embed_action(base, e)
        cos_dose = float(v @ embed_action(dose_variant, e))
        cos_drug = float(v @ embed_action(drug_variant, e))
        assert cos_dose > cos_drug

    def test_invalid_action_rejected(self):
        e = HashTextEmbedder(64)
        with pytest.raises(Exception):
            embed_action(TherapyAction(chemo="tmz", chemo_dose=7, chemo_cycles=1), e)


class TestClinicalEmbedding:
    def _mlp(self, tape, d, d_c, zero=False, seed=0):
        rng = np.random.default_rng(seed)
        make = (lambda s: np.zeros(s)) if zero else (lambda s: rng.normal(0, 0.3, s))
        return {
            "clin_mlp.w1": tape.param("clin_mlp.w1", make((d, d))),
            "clin_mlp.b1": tape.param("clin_mlp.b1", np.zeros(d)),
            "clin_mlp.w2": tape.param("clin_mlp.w2", make((d, d_c))),
            "clin_mlp.b2": tape.param("clin_mlp.b2", np.full(d_c, 0.25) if zero else np.zeros(d_c)),
        }

    def test_identical_profiles_identical_outputs(self):
        e = HashTextEmbedder(16)
        p = ClinicalProfile(age=55, sex="male", biomarkers={"idh_mutation": 1.0})
        t = Tape()
        params = self._mlp(t, 16, 8)
        a = embed_clinical(p, e, params)
        b = embed_clinical(p, e, params)
        assert np.array_equal(a.data, b.data)

    def test_zero_weights_yield_bias(self):
        e = HashTextEmbedder(16)
        t = Tape()
        params = self._mlp(t, 16, 8, zero=True)
        for age in (30, 50, 70):
            out = embed_clinical(ClinicalProfile(age=age), e, params)
            assert np.allclose(out.data, 0.25)

    def test_output_width_matches_config(self):
        e = HashTextEmbedder(16)
        rng = np.random.default_rng(3)
        for d_c in (4, 8, 12):
            t = Tape()
            params = self._mlp(t, 16, d_c, seed=int(rng.integers(1e6)))
            out = embed_clinical(ClinicalProfile(age=44, sex="female"), e, params)
            assert out.shape == (d_c,)
