import threading
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.utils.custom_exceptions import ConfigError, ShapeError


DTYPES: Dict[str, np.dtype] = {
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
    "u8": np.dtype(np.uint8),
}
FLOATING_DTYPES = ("f32", "f64")

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """
    Disable graph recording on the current thread. Used for evaluation and inference,
    where no backward pass follows.
    """
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _dtype_code(dtype: np.dtype) -> Optional[str]:
    for code, candidate in DTYPES.items():
        if dtype == candidate:
            return code
    return None


class Tensor:
    """
    N-dimensional array with optional gradient tracking.

    Data is stored row-major as a NumPy array of dtype f32, f64 or u8. Movies use the
    axis order (T, H, W, C) and batches (N, T, H, W, C). A tensor produced by a
    differentiable op keeps a reference to the op (`_node`) so `backward` can walk the
    graph. Tensors are treated as immutable; only `grad` accumulates, and optimizers
    replace the `data` of parameter leaves.
    """

    def __init__(
        self,
        data: Union[np.ndarray, Sequence, float, int],
        dtype: Optional[str] = None,
        requires_grad: bool = False,
        _node: Optional["Function"] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            if dtype not in DTYPES:
                raise ConfigError(f"Unknown dtype '{dtype}'. Use one of {list(DTYPES)}.")
            array = np.asarray(data, dtype=DTYPES[dtype])
        elif isinstance(data, np.ndarray) and _dtype_code(data.dtype) is not None:
            array = data
        elif isinstance(data, np.ndarray) and data.dtype == np.bool_:
            array = data.astype(np.float32)
        else:
            # Python scalars, lists and foreign NumPy dtypes default to f32
            array = np.asarray(data, dtype=np.float32)

        if requires_grad and _dtype_code(array.dtype) not in FLOATING_DTYPES:
            raise ConfigError("Only floating tensors (f32, f64) can require gradients.")

        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.grad: Optional[Tensor] = None
        self._node = _node

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> str:
        return _dtype_code(self.data.dtype)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}.")
        return self.data.reshape(()).item()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def _lift(self, value: Union["Tensor", float, int]) -> "Tensor":
        if isinstance(value, Tensor):
            return value
        return Tensor(np.asarray(value, dtype=self.data.dtype))

    def __add__(self, other):
        from src.tensor_core.ops import elementwise

        return elementwise("add", self, self._lift(other))

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        from src.tensor_core.ops import elementwise

        return elementwise("sub", self, self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        from src.tensor_core.ops import elementwise

        return elementwise("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        from src.tensor_core.ops import negate

        return negate(self)


class Function:
    """
    A recorded operation. `forward` maps input arrays to an output array and may save
    intermediates on the instance; `backward` maps the output gradient to one gradient
    per input (None for inputs that receive no gradient).
    """

    def __init__(self, *parents: Tensor):
        self.parents = parents

    @classmethod
    def apply(cls, *tensors: Tensor, **kwargs) -> Tensor:
        function = cls(*tensors)
        output = function.forward(*[tensor.data for tensor in tensors], **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(
            output,
            requires_grad=requires_grad,
            _node=function if requires_grad else None,
        )

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError


class GradGraph:
    """
    Topologically ordered view of the operations that produced a tensor.

    `nodes` lists every tensor requiring gradients that the output depends on, each
    after all of its inputs. Backward visits the list once, in reverse order.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "GradGraph":
        ordered: List[Tensor] = []
        visited = set()
        # Iterative post-order DFS; recurrent graphs are too deep for recursion
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                ordered.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in reversed(tensor._node.parents):
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(ordered)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, output: Tensor) -> None:
        grads: Dict[int, np.ndarray] = {id(output): np.ones_like(output.data)}
        for tensor in reversed(self.nodes):
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue
            if tensor._node is None:
                if tensor.requires_grad:
                    accumulated = grad if tensor.grad is None else tensor.grad.data + grad
                    tensor.grad = Tensor(accumulated.astype(tensor.data.dtype, copy=False))
                continue
            parent_grads = tensor._node.backward(grad)
            for parent, parent_grad in zip(tensor._node.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


def backward(loss: Tensor) -> None:
    """
    Populate `grad` on every leaf the scalar `loss` depends on. Gradients accumulate
    additively, both across multiple uses of a leaf and across repeated calls.

    Parameters
    ----------
    loss : Tensor
        Scalar (single element) tensor produced by differentiable ops.

    Raises
    ------
    ShapeError
        If `loss` holds more than one element.
    ConfigError
        If `loss` does not require gradients (no graph was recorded).
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}.")
    if not loss.requires_grad:
        raise ConfigError("backward called on a tensor without a recorded graph.")
    GradGraph.trace(loss).backward(loss)
