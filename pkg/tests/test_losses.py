import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oncoplan.autodiff import NumericError, ShapeError, Tape, Tensor, backward, finite_diff_check, tensor_sum
from oncoplan.losses import (
    CoxDegenerateBatch,
    DomainError,
    LossWeights,
    SurvivalBatchLabels,
    brier,
    cox_partial,
    latent_l1,
    soft_contrastive,
    total_loss,
)


class TestLatentL1:
    def test_equal_inputs_zero(self):
        z = Tensor(np.random.default_rng(0).normal(size=(4, 8)))
        assert latent_l1(z, z).item() == 0.0

    def test_constant_offset_is_one(self):
        z = np.random.default_rng(1).normal(size=(3, 5))
        assert latent_l1(Tensor(z + 1.0), Tensor(z)).item() == pytest.approx(1.0, abs=1e-12)

    def test_sign_flip_hand_case(self):
        z = np.full((2, 2), 0.5)
        assert latent_l1(Tensor(-z), Tensor(z)).item() == pytest.approx(1.0, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            latent_l1(Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3))))

    def test_gradient_matches_fd(self):
        target = np.random.default_rng(2).normal(size=(2, 3))

        def f(p):
            return latent_l1(p["z"], Tensor(target))

        err = finite_diff_check(f, {"z": target + 0.7}, eps=1e-6)
        assert err < 1e-5


class TestSoftContrastive:
    def test_uniform_case_closed_form(self):
        z = [Tensor(np.ones(6)) for _ in range(3)]
        u = [np.ones(4) for _ in range(3)]
        loss = soft_contrastive(z, u, 0.1, 0.1).item()
        assert loss == pytest.approx(6.0 * math.log(2.0), abs=1e-9)

    @given(st.integers(3, 7), st.floats(0.1, 2.0), st.floats(0.1, 2.0))
    @settings(max_examples=20, deadline=None)
    def test_uniform_case_any_temperature(self, b, t1, t2):
        z = [Tensor(np.ones(5)) for _ in range(b)]
        u = [np.ones(3) for _ in range(b)]
        loss = soft_contrastive(z, u, t1, t2).item()
        assert loss == pytest.approx(2.0 * b * math.log(b - 1.0), rel=1e-9)

    def test_two_items_forced_to_zero(self):
        z = [Tensor(np.ones(4)), Tensor(np.arange(1.0, 5.0))]
        u = [np.ones(3), np.array([1.0, -1.0, 0.5])]
        assert soft_contrastive(z, u, 0.3, 0.7).item() == pytest.approx(0.0, abs=1e-12)

    def test_matched_distributions_is_local_minimum_over_q(self):
        # p == q when latents and embeddings share the geometry; perturbing
        # any latent increases the q-side cross-entropy part.
        rng = np.random.default_rng(5)
        base = [rng.normal(size=6) for _ in range(4)]
        z = [Tensor(v) for v in base]
        u = [v.copy() for v in base]
        tau = 0.8
        loss0 = soft_contrastive(z, u, tau, tau).item()
        entropy_bound = loss0 / 2.0
        for trial in range(6):
            bumped = [v.copy() for v in base]
            bumped[trial % 4] = bumped[trial % 4] + rng.normal(scale=0.05, size=6)
            loss1 = soft_contrastive([Tensor(v) for v in bumped], u, tau, tau).item()
            # cross-entropy >= entropy: the p->q term can only grow
            assert loss1 > entropy_bound - 1e-9

    def test_batch_of_one_rejected(self):
        with pytest.raises(DomainError):
            soft_contrastive([Tensor(np.ones(3))], [np.ones(3)], 0.1, 0.1)

    def test_zero_vector_rejected(self):
        with pytest.raises(DomainError):
            soft_contrastive(
                [Tensor(np.zeros(3)), Tensor(np.ones(3))], [np.ones(3), np.ones(3)], 0.1, 0.1
            )

    def test_symmetry_under_role_swap(self):
        rng = np.random.default_rng(9)
        latents = [rng.normal(size=5) for _ in range(4)]
        embeds = [rng.normal(size=5) for _ in range(4)]
        t1, t2 = 0.4, 0.9
        a = soft_contrastive([Tensor(v) for v in latents], embeds, t1, t2).item()
        b = soft_contrastive([Tensor(v) for v in embeds], latents, t2, t1).item()
        assert a == pytest.approx(b, rel=1e-12)

    def test_gradient_matches_fd(self):
        rng = np.random.default_rng(3)
        us = [rng.normal(size=4) for _ in range(3)]

        def f(p):
            rows = [p["z0"], p["z1"], p["z2"]]
            return soft_contrastive(rows, us, 0.5, 0.7)

        params = {f"z{i}": rng.normal(size=4) for i in range(3)}
        assert finite_diff_check(f, params, eps=1e-6) < 1e-5


class TestBrier:
    def test_perfect_prediction_zero(self):
        assert brier(Tensor([1.0, 0.0]), [1.0, 0.0]).item() == 0.0

    def test_half_probability_quarter(self):
        assert brier(Tensor([0.5]), [1.0]).item() == 0.25
        assert brier(Tensor([0.5]), [0.0]).item() == 0.25

    def test_hand_case(self):
        assert brier(Tensor([0.8]), [0.0]).item() == pytest.approx(0.64, abs=1e-12)

    def test_masked_mean(self):
        p = Tensor([0.8, 0.3])
        out = brier(p, [0.0, 1.0], valid=[1.0, 0.0])
        assert out.item() == pytest.approx(0.64, abs=1e-12)

    def test_out_of_range_probability_rejected(self):
        with pytest.raises(DomainError):
            brier(Tensor([1.2]), [1.0])

    def test_bad_label_rejected(self):
        with pytest.raises(DomainError):
            brier(Tensor([0.5]), [0.3])

    def test_gradient_matches_fd(self):
        from oncoplan.autodiff import sigmoid

        def f(p):
            return brier(sigmoid(p["logits"]), [1.0, 0.0, 1.0])

        assert finite_diff_check(f, {"logits": np.array([0.2, -1.0, 2.0])}, eps=1e-6) < 1e-6


class TestCoxPartial:
    def test_two_patient_hand_case(self):
        loss = cox_partial(Tensor([0.0, 0.0]), np.array([1.0, 2.0]), np.array([1, 0]))
        assert loss.item() == pytest.approx(math.log(2.0), abs=1e-12)

    @given(st.floats(-20, 20))
    @settings(max_examples=50, deadline=None)
    def test_shift_invariance(self, c):
        rng = np.random.default_rng(11)
        r = rng.normal(size=7)
        t = rng.uniform(1, 100, size=7)
        e = (rng.uniform(size=7) < 0.6).astype(int)
        if e.sum() == 0:
            e[0] = 1
        a = cox_partial(Tensor(r), t, e).item()
        b = cox_partial(Tensor(r + c), t, e).item()
        assert a == pytest.approx(b, abs=1e-9 * max(1.0, abs(a)))

    def test_risk_ordering_beats_anti_ordering(self):
        t = np.array([1.0, 2.0, 3.0])
        e = np.array([1, 1, 1])
        good = cox_partial(Tensor([2.0, 1.0, 0.0]), t, e).item()
        bad = cox_partial(Tensor([0.0, 1.0, 2.0]), t, e).item()
        assert good < bad

    def test_no_events_warns_and_returns_zero(self):
        with pytest.warns(CoxDegenerateBatch):
            out = cox_partial(Tensor([1.0, 2.0]), np.array([1.0, 2.0]), np.array([0, 0]))
        assert out.item() == 0.0

    def test_breslow_ties_share_risk_set(self):
        # two events at the same time: both terms use the full risk set
        r = np.array([0.3, -0.2, 0.8])
        t = np.array([5.0, 5.0, 9.0])
        e = np.array([1, 1, 0])
        lse = math.log(sum(math.exp(x) for x in r))
        expected = -(r[0] - lse) - (r[1] - lse)
        out = cox_partial(Tensor(r), t, e).item()
        assert out == pytest.approx(expected, abs=1e-12)

    def test_descent_recovers_event_order(self):
        rng = np.random.default_rng(4)
        n = 8
        t = np.sort(rng.uniform(1, 100, size=n))
        e = np.ones(n, dtype=int)
        r = rng.normal(scale=0.01, size=n)
        lr = 0.05
        for _ in range(500):
            tape = Tape()
            rt = tape.param("r", r)
            loss = cox_partial(rt, t, e)
            g = backward(tape, loss)["r"]
            r = r - lr * g
        # earlier event -> larger risk
        from scipy.stats import spearmanr

        rho = spearmanr(r, t).statistic
        assert rho < -0.9

    def test_gradient_matches_fd(self):
        t = np.array([3.0, 1.0, 4.0, 2.0])
        e = np.array([1, 1, 0, 1])

        def f(p):
            return cox_partial(p["r"], t, e)

        assert finite_diff_check(f, {"r": np.array([0.5, -0.3, 0.2, 0.9])}, eps=1e-6) < 1e-5


class TestTotalLoss:
    def test_all_zero(self):
        assert total_loss(0.0, 0.0, 0.0, 0.0, LossWeights()).item() == 0.0

    def test_latent_weighting_five(self):
        assert total_loss(1.0, 0.0, 0.0, 0.0, LossWeights()).item() == 5.0

    def test_brier_plus_cox_hand_case(self):
        out = total_loss(0.0, 0.0, 0.25, math.log(2.0), LossWeights())
        assert out.item() == pytest.approx(0.9431471805599453, abs=1e-12)

    def test_non_finite_component_named(self):
        with pytest.raises(NumericError, match="brier"):
            total_loss(0.0, 0.0, float("nan"), 0.0, LossWeights())

    def test_default_weights(self):
        w = LossWeights()
        assert w.lambda1 == 5.0 and w.lambda2 == 1.0

    def test_bad_temperature_rejected(self):
        with pytest.raises(Exception):
            LossWeights(tau1=0.0)


class TestSurvivalBatchLabels:
    def test_valid_construction(self):
        labels = SurvivalBatchLabels(
            times=[100.0, 400.0], events=[1, 0], one_year=[1, 0], one_year_valid=[True, True]
        )
        assert len(labels) == 2

    def test_nonpositive_time_rejected(self):
        with pytest.raises(DomainError):
            SurvivalBatchLabels(times=[0.0], events=[1], one_year=[1], one_year_valid=[True])

    def test_length_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            SurvivalBatchLabels(times=[1.0, 2.0], events=[1], one_year=[1], one_year_valid=[True])
