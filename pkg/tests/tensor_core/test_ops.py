"""
Tests for the tensor core: elementwise math, activations, reductions, the loss,
structural ops and backward accumulation.
"""

import numpy as np
import pytest

from src.tensor_core import (
    GradGraph,
    Tensor,
    backward,
    concat,
    elementwise,
    is_grad_enabled,
    mse_loss,
    no_grad,
    reduce,
    relu,
    repeat,
    reshape,
    sigmoid,
    slice_axis,
    slice_concat_repeat,
    stack,
    take,
    tanh,
    tensor_mean,
    tensor_sum,
    unstack,
)
from src.tensor_core.gradcheck import check_gradients
from src.utils.custom_exceptions import (
    ConfigError,
    DegenerateInputError,
    DTypeError,
    ShapeError,
)


def leaf(values, dtype="f64"):
    return Tensor(np.asarray(values, dtype=float), dtype=dtype, requires_grad=True)


# =============================================================================
# Tensor
# =============================================================================


class TestTensor:
    def test_python_values_default_to_f32(self):
        assert Tensor([1, 2, 3]).dtype == "f32"

    def test_uint8_cannot_require_grad(self):
        with pytest.raises(ConfigError):
            Tensor(np.zeros(3, dtype=np.uint8), requires_grad=True)

    def test_unknown_dtype(self):
        with pytest.raises(ConfigError):
            Tensor([1.0], dtype="f16")

    def test_item_needs_single_element(self):
        with pytest.raises(ShapeError):
            Tensor([1.0, 2.0]).item()

    def test_size_matches_shape(self):
        x = Tensor(np.zeros((2, 3, 4)))
        assert x.size == 24 and x.ndim == 3


# =============================================================================
# Elementwise
# =============================================================================


class TestElementwise:
    def test_add(self):
        np.testing.assert_array_equal(
            elementwise("add", Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).data, [4.0, 6.0]
        )

    def test_add_zeros_is_bit_identical(self, rng):
        x = Tensor(rng.standard_normal((3, 4)))
        y = x + Tensor(np.zeros((3, 4)), dtype=x.dtype)
        assert np.array_equal(x.data, y.data)

    def test_mul_gradient(self):
        a, b = leaf([2.0, 3.0]), leaf([5.0, 7.0])
        backward(tensor_sum(a * b))
        np.testing.assert_allclose(a.grad.data, [5.0, 7.0])
        np.testing.assert_allclose(b.grad.data, [2.0, 3.0])

    def test_broadcast_singleton_axis(self):
        a = leaf(np.ones((2, 3)))
        b = leaf(np.array([[1.0, 2.0, 3.0]]))
        backward(tensor_sum(a * b))
        np.testing.assert_allclose(b.grad.data, [[2.0, 2.0, 2.0]])

    def test_broadcast_mismatch(self):
        with pytest.raises(ShapeError):
            elementwise("add", Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_mixed_dtypes_rejected(self):
        with pytest.raises(DTypeError):
            elementwise("add", Tensor([1.0], dtype="f32"), Tensor([1.0], dtype="f64"))

    def test_uint8_rejected(self):
        with pytest.raises(DTypeError):
            elementwise("add", Tensor(np.ones(2, dtype=np.uint8)), Tensor(np.ones(2, dtype=np.uint8)))

    def test_unknown_op(self):
        with pytest.raises(ConfigError):
            elementwise("div", Tensor([1.0]), Tensor([1.0]))

    def test_sub_and_neg_gradients(self, rng):
        a, b = leaf(rng.standard_normal(4)), leaf(rng.standard_normal(4))
        results = check_gradients(lambda: tensor_sum((a - b) * (-a)), {"a": a, "b": b})
        assert all(result.relative_error < 1e-6 for result in results.values())


# =============================================================================
# Activations
# =============================================================================


class TestActivations:
    def test_values_at_zero(self):
        assert sigmoid(Tensor([0.0])).data[0] == pytest.approx(0.5)
        assert tanh(Tensor([0.0])).data[0] == 0.0
        assert relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]

    def test_sigmoid_derivative(self):
        x = leaf([1.5])
        backward(tensor_sum(sigmoid(x)))
        assert x.grad.data[0] == pytest.approx(0.149146, abs=1e-6)

    def test_sigmoid_saturates_without_overflow(self):
        out = sigmoid(Tensor([-1000.0, 1000.0], dtype="f64")).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.0, 1.0])

    @pytest.mark.parametrize("fn", [sigmoid, tanh])
    def test_gradients_match_finite_differences(self, fn, rng):
        x = leaf(rng.standard_normal((3, 4)))
        result = check_gradients(lambda: tensor_sum(fn(x) * fn(x)), {"x": x})["x"]
        assert result.relative_error < 1e-6


# =============================================================================
# Reductions and loss
# =============================================================================


class TestReductions:
    def test_mean(self):
        assert tensor_mean(Tensor([1.0, 2.0, 3.0, 4.0])).item() == pytest.approx(2.5)

    def test_sum_over_axis(self):
        np.testing.assert_array_equal(
            tensor_sum(Tensor([[1.0, 2.0], [3.0, 4.0]]), axes=0).data, [4.0, 6.0]
        )

    def test_keepdims(self):
        assert tensor_sum(Tensor(np.ones((2, 3))), axes=1, keepdims=True).shape == (2, 1)

    def test_mean_gradient(self):
        x = leaf([1.0, 2.0, 3.0, 4.0])
        backward(tensor_mean(x))
        np.testing.assert_allclose(x.grad.data, [0.25] * 4)

    def test_empty_tensor(self):
        with pytest.raises(DegenerateInputError):
            tensor_sum(Tensor(np.zeros((0, 3))))

    def test_axis_out_of_range(self):
        with pytest.raises(ShapeError):
            tensor_sum(Tensor(np.ones((2, 2))), axes=2)

    def test_dispatcher(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        np.testing.assert_array_equal(reduce("mean", x, axes=-1).data, [1.0, 4.0])
        with pytest.raises(ConfigError):
            reduce("max", x)


class TestMSELoss:
    def test_equal_inputs(self):
        x = Tensor([0.3, 0.7])
        assert mse_loss(x, Tensor([0.3, 0.7])).item() == 0.0

    def test_value(self):
        assert mse_loss(Tensor([0.0, 1.0]), Tensor([1.0, 1.0])).item() == pytest.approx(0.5)

    def test_gradient(self, rng):
        pred = leaf(rng.standard_normal(5))
        target = Tensor(rng.standard_normal(5), dtype="f64")
        backward(mse_loss(pred, target))
        np.testing.assert_allclose(pred.grad.data, 2.0 * (pred.data - target.data) / 5)
        assert check_gradients(lambda: mse_loss(pred, target), {"pred": pred})["pred"].relative_error < 1e-6

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            mse_loss(Tensor([1.0, 2.0]), Tensor([1.0]))

    def test_target_must_be_constant(self):
        with pytest.raises(ConfigError):
            mse_loss(Tensor([1.0]), Tensor([1.0], requires_grad=True))


# =============================================================================
# Backward
# =============================================================================


class TestBackward:
    def test_linear(self):
        x = leaf([2.0])
        backward(tensor_sum(x * 3.0))
        assert x.grad.data[0] == pytest.approx(3.0)

    def test_reuse_accumulates(self):
        x = leaf([2.0])
        backward(tensor_sum(x + x))
        assert x.grad.data[0] == pytest.approx(2.0)

    def test_repeated_backward_doubles(self, rng):
        x = leaf(rng.standard_normal(3))
        loss = tensor_sum(sigmoid(x) * x)
        backward(loss)
        first = x.grad.data.copy()
        backward(loss)
        np.testing.assert_allclose(x.grad.data, 2.0 * first)

    def test_non_scalar(self):
        with pytest.raises(ShapeError):
            backward(leaf([1.0, 2.0]) * 2.0)

    def test_without_graph(self):
        with pytest.raises(ConfigError):
            backward(Tensor([1.0]))

    def test_chain_matches_finite_differences(self, rng):
        a, b = leaf(rng.standard_normal((2, 3))), leaf(rng.standard_normal((2, 3)))
        results = check_gradients(lambda: tensor_mean(tanh(a * b) + sigmoid(a)), {"a": a, "b": b})
        assert max(result.relative_error for result in results.values()) < 1e-5

    def test_topological_order(self):
        x = leaf([1.0])
        y = sigmoid(x * 2.0)
        nodes = GradGraph.trace(tensor_sum(y)).nodes
        assert nodes.index(x) < nodes.index(y)

    def test_no_grad_records_nothing(self):
        x = leaf([1.0])
        with no_grad():
            assert not is_grad_enabled()
            y = x * 2.0
        assert is_grad_enabled()
        assert not y.requires_grad


# =============================================================================
# Structural ops
# =============================================================================


class TestStructural:
    def test_repeat_shape(self):
        assert repeat(Tensor(np.zeros((4, 5, 8))), 6, axis=0).shape == (6, 4, 5, 8)

    def test_take_last_frame(self, rng):
        x = Tensor(rng.standard_normal((12, 4, 5, 8)))
        last = take(x, 0, -1)
        assert last.shape == (4, 5, 8)
        np.testing.assert_array_equal(last.data, x.data[11])

    def test_take_out_of_range(self):
        with pytest.raises(ShapeError):
            take(Tensor(np.zeros((3, 2))), 0, 3)

    def test_slice_bounds(self):
        with pytest.raises(ShapeError):
            slice_axis(Tensor(np.zeros((3, 2))), 0, 2, 5)

    def test_slice_negative_start(self):
        x = Tensor(np.arange(6.0))
        np.testing.assert_array_equal(slice_axis(x, 0, -2).data, [4.0, 5.0])

    def test_concat_shape_mismatch(self):
        with pytest.raises(ShapeError):
            concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2)))], axis=0)

    def test_stack_unstack(self, rng):
        parts = [Tensor(rng.standard_normal((2, 3))) for _ in range(4)]
        stacked = stack(parts, axis=1)
        assert stacked.shape == (2, 4, 3)
        for part, back in zip(parts, unstack(stacked, axis=1)):
            np.testing.assert_array_equal(part.data, back.data)

    def test_reshape_size_mismatch(self):
        with pytest.raises(ShapeError):
            reshape(Tensor(np.zeros(6)), (4, 2))

    def test_repeat_gradient_sums_copies(self, rng):
        x = leaf(rng.standard_normal((2, 3)))
        weights = Tensor(rng.standard_normal((5, 2, 3)), dtype="f64")
        backward(tensor_sum(repeat(x, 5, axis=0) * weights))
        np.testing.assert_allclose(x.grad.data, weights.data.sum(axis=0))

    def test_structural_gradients(self, rng):
        x = leaf(rng.standard_normal((4, 3)))
        y = leaf(rng.standard_normal((2, 3)))

        def loss():
            joined = reshape(concat([slice_axis(x, 0, 1, 3), y], axis=0), (3, 4))
            copies = take(repeat(x, 2, axis=0), 0, 1)
            return tensor_sum(sigmoid(joined)) + tensor_sum(copies * copies)

        results = check_gradients(loss, {"x": x, "y": y})
        assert max(result.relative_error for result in results.values()) < 1e-6

    def test_dispatcher(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert slice_concat_repeat(x, {"slice": 0, "index": 1}).shape == (3,)
        assert slice_concat_repeat(x, {"slice": 1, "start": 1}).shape == (2, 2)
        assert slice_concat_repeat(x, {"concat": 0, "with": [x]}).shape == (4, 3)
        assert slice_concat_repeat(x, {"repeat": 3}).shape == (3, 2, 3)
        with pytest.raises(ConfigError):
            slice_concat_repeat(x, {"flip": 0})
