import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oncoplan.autodiff import (
    ConfigError,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    UsageError,
    absolute,
    add,
    attention,
    backward,
    clamp_min,
    concat_rows,
    div,
    exp,
    finite_diff_check,
    gelu,
    layer_norm,
    log,
    masked_logsumexp,
    matmul,
    mul,
    reshape,
    sigmoid,
    slice_rows,
    softmax,
    square,
    stack_rows,
    sub,
    tensor_mean,
    tensor_sum,
    transpose,
)


class TestTensor:
    def test_rejects_nan(self):
        with pytest.raises(NumericError):
            Tensor([1.0, float("nan")])

    def test_rejects_inf(self):
        with pytest.raises(NumericError):
            Tensor([[1.0, float("inf")]])

    def test_shape_and_data(self):
        t = Tensor([[1, 2, 3], [4, 5, 6]])
        assert t.shape == (2, 3)
        assert t.data.dtype == np.float64
        assert t.data.flags["C_CONTIGUOUS"]

    def test_item_requires_scalar(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()


class TestMatmul:
    def test_identity(self):
        b = np.arange(12.0).reshape(3, 4)
        out = matmul(Tensor(np.eye(3)), Tensor(b))
        assert np.array_equal(out.data, b)

    def test_hand_case(self):
        out = matmul(Tensor([[1, 2], [3, 4]]), Tensor([[1], [1]]))
        assert out.tolist() == [[3.0], [7.0]]

    def test_zero_annihilates(self):
        b = np.random.default_rng(0).normal(size=(2, 5))
        out = matmul(Tensor(np.zeros((3, 2))), Tensor(b))
        assert np.array_equal(out.data, np.zeros((3, 5)))

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_rejects_1d(self):
        with pytest.raises(ShapeError):
            matmul(Tensor([1.0, 2.0]), Tensor(np.ones((2, 2))))


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor([0.0, 0.0, 0.0]))
        assert np.allclose(out.data, [1 / 3] * 3)

    def test_stability_no_overflow(self):
        out = softmax(Tensor([1000.0, 0.0]))
        assert out.data[0] == pytest.approx(1.0)
        assert out.data[1] == pytest.approx(0.0, abs=1e-300)

    def test_hand_case_ln2(self):
        out = softmax(Tensor([math.log(2.0), 0.0]))
        assert np.allclose(out.data, [2 / 3, 1 / 3], atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            softmax(Tensor(np.zeros((0,))))

    def test_scalar_rejected(self):
        with pytest.raises(ShapeError):
            softmax(Tensor(3.0))

    @given(
        st.lists(st.floats(-50, 50), min_size=1, max_size=9),
    )
    @settings(max_examples=50, deadline=None)
    def test_rows_sum_to_one(self, row):
        out = softmax(Tensor([row, row]), axis=-1)
        sums = out.data.sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) < 1e-12)
        assert np.all(out.data > 0)


class TestLayerNorm:
    def test_constant_vector_zeroed(self):
        out = layer_norm(Tensor([[5.0, 5.0, 5.0]]), Tensor(np.ones(3)), Tensor(np.zeros(3)))
        assert np.allclose(out.data, 0.0)

    def test_hand_case(self):
        out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-14)
        assert np.allclose(out.data, [[1.0, -1.0]], atol=1e-6)

    def test_bias_only_recovery(self):
        bias = np.array([3.0, -2.0, 0.5])
        out = layer_norm(Tensor(np.random.default_rng(1).normal(size=(4, 3))),
                         Tensor(np.zeros(3)), Tensor(bias))
        assert np.allclose(out.data, np.broadcast_to(bias, (4, 3)))

    def test_bad_eps(self):
        with pytest.raises(ConfigError):
            layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)

    def test_gain_shape_mismatch(self):
        with pytest.raises(ShapeError):
            layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(3)), Tensor(np.zeros(2)))

    def test_normalizes_moments(self):
        x = np.random.default_rng(2).normal(3.0, 2.5, size=(5, 16))
        out = layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)))
        assert np.allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
        assert np.allclose(out.data.var(axis=-1), 1.0, atol=1e-4)


class TestAttention:
    def test_single_key_degenerate(self):
        v = np.array([[1.0, 2.0, 3.0, 4.0]])
        out = attention(Tensor(np.random.default_rng(0).normal(size=(3, 4))),
                        Tensor(np.ones((1, 4))), Tensor(v))
        assert np.allclose(out.data, np.broadcast_to(v, (3, 4)))

    def test_orthogonal_queries_give_column_mean(self):
        k = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        v = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
        out = attention(Tensor(np.zeros((2, 2))), Tensor(k), Tensor(v))
        assert np.allclose(out.data, np.broadcast_to(v.mean(axis=0), (2, 2)))

    def test_hand_weights_two_thirds(self):
        # logits engineered to [ln 2, 0] after the 1/sqrt(w) scale
        w = 2
        scale = math.sqrt(w)
        q = np.array([[1.0, 0.0]])
        k = np.array([[math.log(2.0) * scale, 0.0], [0.0, 0.0]])
        v = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = attention(Tensor(q), Tensor(k), Tensor(v))
        assert np.allclose(out.data, [[2 / 3, 1 / 3]], atol=1e-15)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            attention(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))), Tensor(np.ones((2, 4))))


class TestBackward:
    def test_grad_of_sum_is_ones(self):
        tape = Tape()
        x = tape.param("x", np.array([1.0, 2.0, 3.0]))
        grads = backward(tape, tensor_sum(x))
        assert np.array_equal(grads["x"], np.ones(3))

    def test_grad_of_squared_norm(self):
        tape = Tape()
        x = tape.param("x", np.array([1.5, -2.0, 0.5]))
        grads = backward(tape, tensor_sum(square(x)))
        assert np.allclose(grads["x"], [3.0, -4.0, 1.0])

    def test_loss_off_tape_rejected(self):
        tape = Tape()
        tape.param("x", np.array([1.0]))
        with pytest.raises(UsageError):
            backward(tape, Tensor(1.0))

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = tape.param("x", np.array([1.0, 2.0]))
        with pytest.raises(ShapeError):
            backward(tape, mul(x, 2.0))

    def test_unused_parameter_gets_zero_gradient(self):
        tape = Tape()
        x = tape.param("x", np.array([1.0, 2.0]))
        unused = tape.param("unused", np.ones((2, 2)))
        grads = backward(tape, tensor_sum(x))
        assert np.array_equal(grads["unused"], np.zeros((2, 2)))

    def test_reused_operand_accumulates(self):
        tape = Tape()
        x = tape.param("x", np.array([3.0]))
        grads = backward(tape, tensor_sum(mul(x, x)))
        assert np.allclose(grads["x"], [6.0])

    def test_two_tapes_do_not_mix(self):
        t1, t2 = Tape(), Tape()
        a = t1.param("a", np.ones(2))
        b = t2.param("b", np.ones(2))
        with pytest.raises(UsageError):
            add(a, b)


class TestFiniteDiff:
    def test_quadratic_tight(self):
        def f(p):
            return add(tensor_sum(square(p["x"])), tensor_sum(mul(p["x"], 3.0)))

        err = finite_diff_check(f, {"x": np.array([0.3, -1.2, 2.0])}, eps=1e-5)
        assert err < 1e-8

    def test_brier_closed_form(self):
        def f(p):
            prob = sigmoid(p["logit"])
            return square(sub(prob, 1.0))

        err = finite_diff_check(f, {"logit": np.array([0.37])}, eps=1e-5)
        assert err < 1e-6

    def test_nonfinite_function_rejected(self):
        def f(p):
            return log(p["x"])

        with pytest.raises(NumericError):
            finite_diff_check(f, {"x": np.array([-1.0])}, eps=1e-5)

    def test_bad_eps(self):
        with pytest.raises(ConfigError):
            finite_diff_check(lambda p: tensor_sum(p["x"]), {"x": np.ones(2)}, eps=0.0)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=10, deadline=None)
    def test_primitive_mixture_matches_fd(self, seed):
        rng = np.random.default_rng(seed)
        base = {"w": rng.normal(size=(3, 3)), "v": rng.normal(size=(2, 3)) + 3.5}

        def f(p):
            h = matmul(p["v"], p["w"])
            h = gelu(h)
            h = add(h, absolute(p["v"]))
            h = mul(h, sigmoid(p["v"]))
            s = softmax(h, axis=-1)
            return tensor_sum(mul(s, log(add(square(p["v"]), 1.0))))

        assert finite_diff_check(f, base, eps=1e-5) < 1e-7


class TestStructuralOps:
    def test_concat_slice_round_trip(self):
        a, b = Tensor(np.ones((2, 3))), Tensor(np.zeros((1, 3)))
        joined = concat_rows([a, b])
        assert joined.shape == (3, 3)
        assert np.array_equal(slice_rows(joined, 0, 2).data, a.data)

    def test_concat_width_mismatch(self):
        with pytest.raises(ShapeError):
            concat_rows([Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4)))])

    def test_slice_out_of_range(self):
        with pytest.raises(ShapeError):
            slice_rows(Tensor(np.ones((2, 2))), 0, 3)

    def test_stack_rows_flattens(self):
        out = stack_rows([Tensor(np.ones((2, 2))), Tensor(np.zeros(4))])
        assert out.shape == (2, 4)

    def test_reshape_size_guard(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.ones(4)), (3, 2))

    def test_masked_logsumexp_matches_dense(self):
        x = np.array([[0.0, 1.0, 2.0], [3.0, -1.0, 0.5]])
        mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
        out = masked_logsumexp(Tensor(x), mask, axis=1)
        exp0 = np.log(np.exp(0.0) + np.exp(1.0))
        exp1 = np.log(np.exp(3.0) + np.exp(-1.0) + np.exp(0.5))
        assert np.allclose(out.data, [exp0, exp1], atol=1e-14)

    def test_masked_logsumexp_empty_mask_row(self):
        with pytest.raises(ShapeError):
            masked_logsumexp(Tensor(np.ones((2, 2))), np.array([[1.0, 0.0], [0.0, 0.0]]), axis=1)

    def test_clamp_min_blocks_gradient_below_floor(self):
        tape = Tape()
        x = tape.param("x", np.array([-1.0, 2.0]))
        grads = backward(tape, tensor_sum(clamp_min(x, 0.0)))
        assert np.array_equal(grads["x"], [0.0, 1.0])


class TestDeterminism:
    def test_identical_inputs_bitwise_outputs(self):
        rng = np.random.default_rng(7)
        q, k, v = (rng.normal(size=(4, 8)) for _ in range(3))
        a = attention(Tensor(q), Tensor(k), Tensor(v)).data
        b = attention(Tensor(q), Tensor(k), Tensor(v)).data
        assert np.array_equal(a, b)

    def test_division_by_zero_rejected(self):
        with pytest.raises(NumericError):
            div(Tensor([1.0]), Tensor([0.0]))

    def test_log_domain(self):
        with pytest.raises(NumericError):
            log(Tensor([0.0]))
