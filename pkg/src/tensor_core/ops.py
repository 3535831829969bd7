from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.tensor_core.tensor import FLOATING_DTYPES, Function, Tensor
from src.utils.custom_exceptions import (
    ConfigError,
    DegenerateInputError,
    DTypeError,
    ShapeError,
)


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise ShapeError(f"Axis {axis} is out of range for a tensor with {ndim} dims.")
    return axis % ndim


def _require_floating(*tensors: Tensor) -> None:
    for tensor in tensors:
        if tensor.dtype not in FLOATING_DTYPES:
            raise DTypeError(expected="f32 or f64", received=tensor.dtype)
    dtypes = {tensor.dtype for tensor in tensors}
    if len(dtypes) > 1:
        raise DTypeError(expected=tensors[0].dtype, received=tensors[-1].dtype)


def _check_broadcast(a_shape: Tuple[int, ...], b_shape: Tuple[int, ...]) -> None:
    if a_shape == b_shape:
        return
    if len(b_shape) > len(a_shape):
        raise ShapeError(f"Cannot broadcast shape {b_shape} onto {a_shape}.")
    padded = (1,) * (len(a_shape) - len(b_shape)) + tuple(b_shape)
    if any(b_dim not in (1, a_dim) for a_dim, b_dim in zip(a_shape, padded)):
        raise ShapeError(f"Cannot broadcast shape {b_shape} onto {a_shape}.")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    singleton_axes = tuple(
        axis for axis, dim in enumerate(shape) if dim == 1 and grad.shape[axis] != 1
    )
    if singleton_axes:
        grad = grad.sum(axis=singleton_axes, keepdims=True)
    return grad.reshape(shape)


# ELEMENTWISE


class Add(Function):
    def forward(self, a, b):
        self.b_shape = b.shape
        return a + b

    def backward(self, grad):
        return grad, _unbroadcast(grad, self.b_shape)


class Sub(Function):
    def forward(self, a, b):
        self.b_shape = b.shape
        return a - b

    def backward(self, grad):
        return grad, -_unbroadcast(grad, self.b_shape)


class Mul(Function):
    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, _unbroadcast(grad * self.a, self.b.shape)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


_ELEMENTWISE = {"add": Add, "sub": Sub, "mul": Mul}


def elementwise(op: str, a: Tensor, b: Tensor) -> Tensor:
    """
    Apply `a op b` for op in {add, sub, mul}. `b` may be broadcast along singleton
    axes (or missing leading axes); broadcast axes are sum-reduced in its gradient.

    Raises
    ------
    ConfigError
        If the op is unknown.
    DTypeError
        If the operands are not floating or their dtypes differ.
    ShapeError
        If `b` cannot be broadcast onto `a`.
    """
    if op not in _ELEMENTWISE:
        raise ConfigError(f"Unknown elementwise op '{op}'. Use one of {list(_ELEMENTWISE)}.")
    _require_floating(a, b)
    _check_broadcast(a.shape, b.shape)
    return _ELEMENTWISE[op].apply(a, b)


def negate(x: Tensor) -> Tensor:
    _require_floating(x)
    return Neg.apply(x)


# ACTIVATIONS


class Sigmoid(Function):
    def forward(self, x):
        positive = x >= 0
        exp_neg_abs = np.exp(-np.abs(x))
        self.out = np.where(positive, 1.0 / (1.0 + exp_neg_abs), exp_neg_abs / (1.0 + exp_neg_abs)).astype(x.dtype)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1.0 - self.out),)


class Tanh(Function):
    def forward(self, x):
        self.out = np.tanh(x)
        return self.out

    def backward(self, grad):
        return (grad * (1.0 - self.out * self.out),)


class ReLU(Function):
    def forward(self, x):
        self.positive = x > 0
        return np.where(self.positive, x, np.zeros_like(x))

    def backward(self, grad):
        return (grad * self.positive,)


_ACTIVATIONS = {"sigmoid": Sigmoid, "tanh": Tanh, "relu": ReLU}


def activation(kind: str, x: Tensor) -> Tensor:
    if kind not in _ACTIVATIONS:
        raise ConfigError(f"Unknown activation '{kind}'. Use one of {list(_ACTIVATIONS)}.")
    _require_floating(x)
    return _ACTIVATIONS[kind].apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return activation("sigmoid", x)


def tanh(x: Tensor) -> Tensor:
    return activation("tanh", x)


def relu(x: Tensor) -> Tensor:
    return activation("relu", x)


# REDUCTIONS


class Sum(Function):
    def forward(self, x, axes=None, keepdims=False):
        self.in_shape, self.axes, self.keepdims = x.shape, axes, keepdims
        return np.asarray(x.sum(axis=axes, keepdims=keepdims))

    def backward(self, grad):
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes if self.axes is not None else tuple(range(len(self.in_shape))))
        return (np.broadcast_to(grad, self.in_shape),)


class Mean(Sum):
    def forward(self, x, axes=None, keepdims=False):
        reduced = x.shape if axes is None else [x.shape[axis] for axis in axes]
        self.count = int(np.prod(reduced, dtype=np.int64))
        return np.asarray(super().forward(x, axes, keepdims) / self.count, dtype=x.dtype)

    def backward(self, grad):
        (full,) = super().backward(grad)
        return (full / self.count,)


def reduce(
    op: str,
    x: Tensor,
    axes: Optional[Union[int, Iterable[int]]] = None,
    keepdims: bool = False,
) -> Tensor:
    """
    Sum or mean over `axes` (all axes when None). Reduced axes are dropped, or kept with
    extent 1 when `keepdims` is set.

    Raises
    ------
    DegenerateInputError
        If the tensor (or a reduced extent) is empty.
    ShapeError
        If an axis is out of range.
    """
    if op not in ("sum", "mean"):
        raise ConfigError(f"Unknown reduction '{op}'. Use 'sum' or 'mean'.")
    _require_floating(x)
    if x.size == 0:
        raise DegenerateInputError("Cannot reduce an empty tensor.")
    if axes is not None:
        axes = (axes,) if isinstance(axes, int) else tuple(axes)
        axes = tuple(sorted({_normalize_axis(axis, x.ndim) for axis in axes}))
    return (Sum if op == "sum" else Mean).apply(x, axes=axes, keepdims=keepdims)


def tensor_sum(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    return reduce("sum", x, axes, keepdims)


def tensor_mean(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    return reduce("mean", x, axes, keepdims)


# LOSS


class MSELoss(Function):
    def forward(self, pred, target):
        self.diff = pred - target
        return np.asarray(np.mean(self.diff * self.diff), dtype=pred.dtype)

    def backward(self, grad):
        return grad * (2.0 / self.diff.size) * self.diff, None


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """
    Mean over all elements of the squared difference between `pred` and `target`.

    Raises
    ------
    ShapeError
        If the shapes differ.
    ConfigError
        If the target requires gradients.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}.")
    if target.requires_grad:
        raise ConfigError("mse_loss targets must not require gradients.")
    _require_floating(pred, target)
    if pred.size == 0:
        raise DegenerateInputError("mse_loss over an empty tensor.")
    return MSELoss.apply(pred, target)


# STRUCTURAL


class Take(Function):
    def forward(self, x, axis, index):
        self.in_shape, self.axis, self.index = x.shape, axis, index
        return np.take(x, index, axis=axis)

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        selector = [slice(None)] * len(self.in_shape)
        selector[self.axis] = self.index
        full[tuple(selector)] = grad
        return (full,)


class SliceAxis(Function):
    def forward(self, x, axis, start, stop):
        self.in_shape = x.shape
        self.selector = tuple(
            slice(start, stop) if dim == axis else slice(None) for dim in range(x.ndim)
        )
        return x[self.selector]

    def backward(self, grad):
        full = np.zeros(self.in_shape, dtype=grad.dtype)
        full[self.selector] = grad
        return (full,)


class Concat(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        self.splits = np.cumsum([array.shape[axis] for array in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.splits, axis=self.axis))


class Stack(Function):
    def forward(self, *arrays, axis):
        self.axis = axis
        return np.stack(arrays, axis=axis)

    def backward(self, grad):
        return tuple(
            np.take(grad, index, axis=self.axis) for index in range(grad.shape[self.axis])
        )


class Repeat(Function):
    def forward(self, x, times, axis):
        self.axis = axis
        return np.repeat(np.expand_dims(x, axis), times, axis=axis)

    def backward(self, grad):
        return (grad.sum(axis=self.axis),)


class Reshape(Function):
    def forward(self, x, shape):
        self.in_shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


def take(x: Tensor, axis: int, index: int) -> Tensor:
    """Select a single index along `axis`, dropping the axis (e.g., the last time step)."""
    axis = _normalize_axis(axis, x.ndim)
    extent = x.shape[axis]
    if not -extent <= index < extent:
        raise ShapeError(f"Index {index} is out of range for axis {axis} of extent {extent}.")
    return Take.apply(x, axis=axis, index=index % extent)


def slice_axis(x: Tensor, axis: int, start: int, stop: Optional[int] = None) -> Tensor:
    """Keep indices [start, stop) along `axis`. Negative bounds count from the end."""
    axis = _normalize_axis(axis, x.ndim)
    extent = x.shape[axis]
    stop = extent if stop is None else stop
    start = start + extent if start < 0 else start
    stop = stop + extent if stop < 0 else stop
    if not 0 <= start < stop <= extent:
        raise ShapeError(f"Slice [{start}, {stop}) is out of range for extent {extent}.")
    return SliceAxis.apply(x, axis=axis, start=start, stop=stop)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise DegenerateInputError("concat needs at least one tensor.")
    _require_floating(*tensors)
    reference = tensors[0]
    axis = _normalize_axis(axis, reference.ndim)
    for tensor in tensors[1:]:
        if tensor.ndim != reference.ndim or any(
            dim != ref for i, (dim, ref) in enumerate(zip(tensor.shape, reference.shape)) if i != axis
        ):
            raise ShapeError(
                f"concat along axis {axis} needs matching shapes, got {reference.shape} and {tensor.shape}."
            )
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise DegenerateInputError("stack needs at least one tensor.")
    _require_floating(*tensors)
    shapes = {tensor.shape for tensor in tensors}
    if len(shapes) > 1:
        raise ShapeError(f"stack needs identical shapes, got {sorted(shapes)}.")
    axis = _normalize_axis(axis, tensors[0].ndim + 1)
    return Stack.apply(*tensors, axis=axis)


def repeat(x: Tensor, times: int, axis: int = 0) -> Tensor:
    """Repeat `x` `times` times along a new axis inserted at `axis`."""
    if times < 1:
        raise ShapeError(f"repeat needs times >= 1, got {times}.")
    axis = _normalize_axis(axis, x.ndim + 1)
    return Repeat.apply(x, times=times, axis=axis)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size:
        raise ShapeError(f"Cannot reshape {x.shape} into {shape}.")
    return Reshape.apply(x, shape=shape)


def constant(array: np.ndarray, like: Tensor) -> Tensor:
    return Tensor(np.asarray(array, dtype=like.data.dtype))


def zeros(shape: Sequence[int], dtype: str = "f32") -> Tensor:
    return Tensor(np.zeros(tuple(shape)), dtype=dtype)


def unstack(x: Tensor, axis: int) -> List[Tensor]:
    axis = _normalize_axis(axis, x.ndim)
    return [take(x, axis, index) for index in range(x.shape[axis])]
