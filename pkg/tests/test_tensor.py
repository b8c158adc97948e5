import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from casecast.errors import ConfigError, NumericError, ShapeError
from casecast.tensor import (
    GradTape,
    add,
    elementwise,
    grad_check,
    hadamard,
    layer_norm,
    layer_norm_backward,
    matmul,
    matmul_backward,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    softmax_rows,
    softmax_rows_backward,
    tanh,
    tanh_backward,
)

from _reference import mp_layer_norm, mp_softmax_row

finite_rows = arrays(np.float64, (3, 5),
                     elements=st.floats(-50, 50, allow_nan=False))


class TestMatmul:
    def test_known_product(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        assert np.array_equal(matmul(a, b),
                              np.array([[19.0, 22.0], [43.0, 50.0]]))

    def test_nonconforming_shapes_name_both_operands(self):
        with pytest.raises(ShapeError) as err:
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))
        assert "(2, 3)" in str(err.value) and "(4, 2)" in str(err.value)

    def test_backward_matches_finite_differences(self, rng):
        a = rng.normal(size=(3, 4))
        b = rng.normal(size=(4, 2))
        w = rng.normal(size=(3, 2))

        def f(p):
            out = matmul(p["a"], p["b"])
            da, db = matmul_backward(w, p["a"], p["b"])
            return float((out * w).sum()), {"a": da, "b": db}

        assert grad_check(f, {"a": a, "b": b}) < 1e-9


class TestSoftmax:
    def test_half_half(self):
        assert np.array_equal(softmax_rows(np.array([[0.0, 0.0]])),
                              np.array([[0.5, 0.5]]))

    def test_log_weights_recover_ratios(self):
        out = softmax_rows(np.log(np.array([[1.0, 2.0, 3.0]])))
        assert np.allclose(out, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-15)

    def test_matches_high_precision_reference(self):
        m = np.array([[0.3, -1.2, 2.7], [5.0, 5.0, -5.0]])
        ours = softmax_rows(m)
        ref = np.array([mp_softmax_row(list(map(float, row))) for row in m],
                       dtype=np.float64)
        assert np.allclose(ours, ref, atol=1e-15)

    def test_extreme_values_stay_finite(self):
        out = softmax_rows(np.array([[1e4, 0.0, -1e4]]))
        assert np.all(np.isfinite(out))
        assert abs(out.sum() - 1.0) < 1e-12

    @settings(deadline=None, max_examples=50)
    @given(finite_rows)
    def test_rows_sum_to_one(self, m):
        assert np.allclose(softmax_rows(m).sum(axis=-1), 1.0, atol=1e-9)

    @settings(deadline=None, max_examples=50)
    @given(finite_rows, st.floats(-30, 30))
    def test_shift_invariance(self, m, c):
        assert np.allclose(softmax_rows(m + c), softmax_rows(m), atol=1e-9)

    def test_permuting_a_row_permutes_output_bitwise(self, rng):
        m = rng.normal(size=(4, 7))
        perm = rng.permutation(7)
        assert np.array_equal(softmax_rows(m[:, perm]),
                              softmax_rows(m)[:, perm])

    def test_backward_matches_finite_differences(self, rng):
        x = rng.normal(size=(3, 5))
        w = rng.normal(size=(3, 5))

        def f(p):
            out = softmax_rows(p["x"])
            return float((out * w).sum()), {
                "x": softmax_rows_backward(w, out)}

        assert grad_check(f, {"x": x}) < 1e-9


class TestLayerNorm:
    def test_standardizes_rows(self, rng):
        x = rng.normal(loc=3.0, scale=2.0, size=(4, 8))
        out, _ = layer_norm(x, np.ones(8), np.zeros(8))
        assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-12)
        assert np.allclose(out.std(axis=-1), 1.0, atol=1e-3)

    def test_gain_and_bias_applied(self, rng):
        x = rng.normal(size=(2, 4))
        gain = np.array([2.0, 2.0, 2.0, 2.0])
        bias = np.array([0.5, 0.5, 0.5, 0.5])
        base, _ = layer_norm(x, np.ones(4), np.zeros(4))
        out, _ = layer_norm(x, gain, bias)
        assert np.allclose(out, base * 2.0 + 0.5, atol=1e-12)

    def test_epsilon_must_be_positive(self):
        with pytest.raises(ConfigError):
            layer_norm(np.ones((2, 3)), np.ones(3), np.zeros(3), epsilon=0.0)

    def test_mismatched_gain_shape(self):
        with pytest.raises(ShapeError):
            layer_norm(np.ones((2, 3)), np.ones(4), np.zeros(3))

    def test_matches_high_precision_reference(self):
        x = np.array([[1.0, 2.0, 3.0, 4.0], [-0.5, 0.0, 0.25, 7.0]])
        gain = np.array([2.0, 1.0, 0.5, 1.5])
        bias = np.array([0.5, -0.25, 0.0, 1.0])
        ours, _ = layer_norm(x, gain, bias, epsilon=1e-5)
        ref = mp_layer_norm(x, gain, bias, 1e-5)
        assert np.allclose(ours, ref, atol=1e-14)

    def test_backward_matches_finite_differences(self, rng):
        x = rng.normal(size=(3, 6))
        gain = rng.normal(size=6)
        bias = rng.normal(size=6)
        w = rng.normal(size=(3, 6))

        def f(p):
            out, cache = layer_norm(p["x"], p["gain"], p["bias"])
            dx, dgain, dbias = layer_norm_backward(w, cache)
            return float((out * w).sum()), {
                "x": dx, "gain": dgain, "bias": dbias}

        assert grad_check(f, {"x": x, "gain": gain, "bias": bias}) < 1e-8


class TestActivations:
    def test_sigmoid_known_values(self):
        assert sigmoid(np.array([0.0]))[0] == 0.5
        assert np.allclose(sigmoid(np.array([1.0])),
                           1 / (1 + np.exp(-1.0)), atol=1e-15)

    def test_sigmoid_saturates_without_overflow(self):
        out = sigmoid(np.array([-500.0, 500.0]))
        assert np.all(np.isfinite(out))
        assert 0.0 <= out[0] < 1e-200
        assert out[1] == 1.0  # saturated in float64

    def test_tanh_and_relu_values(self):
        assert np.array_equal(relu(np.array([-2.0, 0.0, 3.0])),
                              np.array([0.0, 0.0, 3.0]))
        assert tanh(np.array([0.0]))[0] == 0.0

    @pytest.mark.parametrize("fwd,bwd,uses_input", [
        (sigmoid, sigmoid_backward, False),
        (tanh, tanh_backward, False),
        (relu, relu_backward, True),
    ])
    def test_backward_matches_finite_differences(self, rng, fwd, bwd,
                                                 uses_input):
        # keep relu inputs away from its kink
        x = rng.normal(size=(4, 3))
        x[np.abs(x) < 0.05] = 0.1
        w = rng.normal(size=(4, 3))

        def f(p):
            out = fwd(p["x"])
            g = bwd(w, p["x"] if uses_input else out)
            return float((out * w).sum()), {"x": g}

        assert grad_check(f, {"x": x}) < 1e-9


class TestElementwise:
    def test_dispatch(self, rng):
        x = rng.normal(size=(2, 2))
        y = rng.normal(size=(2, 2))
        assert np.array_equal(elementwise(x, "relu"), relu(x))
        assert np.array_equal(elementwise(x, "add", y), add(x, y))
        assert np.array_equal(elementwise(x, "hadamard", y), hadamard(x, y))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            add(np.ones((2, 2)), np.ones((2, 3)))
        with pytest.raises(ShapeError):
            hadamard(np.ones((2, 2)), np.ones((3, 2)))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            elementwise(np.ones(2), "softplus")

    def test_binary_needs_second_operand(self):
        with pytest.raises(ShapeError):
            elementwise(np.ones(2), "add")


class TestGradTape:
    def test_backward_replays_in_reverse_order(self):
        tape = GradTape()
        seen = []
        tape.record("first", lambda g: seen.append("first") or g * 2.0)
        tape.record("second", lambda g: seen.append("second") or g + 1.0)
        out = tape.backward(np.array(1.0))
        assert seen == ["second", "first"]
        assert out == (1.0 + 1.0) * 2.0
        assert tape.names == ["first", "second"]
        assert len(tape) == 2

    def test_tape_is_single_use(self):
        tape = GradTape()
        tape.record("only", lambda g: g)
        tape.backward(np.array(1.0))
        with pytest.raises(NumericError):
            tape.backward(np.array(1.0))
        with pytest.raises(NumericError):
            tape.record("late", lambda g: g)


class TestGradCheck:
    def test_accepts_correct_gradient(self):
        def f(p):
            return float((p["x"] ** 2).sum()), {"x": 2.0 * p["x"]}

        assert grad_check(f, {"x": np.array([1.0, -2.0, 3.0])}) < 1e-10

    def test_flags_wrong_gradient(self):
        def f(p):
            return float((p["x"] ** 2).sum()), {"x": 2.2 * p["x"]}

        assert grad_check(f, {"x": np.array([1.0, -2.0, 3.0])}) > 1e-2

    def test_eps_validation(self):
        def f(p):
            return 0.0, {"x": np.zeros(1)}

        with pytest.raises(ConfigError):
            grad_check(f, {"x": np.zeros(1)}, eps=0.0)
        with pytest.raises(ConfigError):
            grad_check(f, {"x": np.zeros(1)}, eps=1.0)

    def test_non_finite_loss_rejected(self):
        def f(p):
            return float("nan"), {"x": np.zeros(1)}

        with pytest.raises(NumericError):
            grad_check(f, {"x": np.zeros(1)})
