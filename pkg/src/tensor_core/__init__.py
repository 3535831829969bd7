from src.tensor_core.ops import (
    activation,
    concat,
    elementwise,
    mse_loss,
    negate,
    reduce,
    relu,
    repeat,
    reshape,
    sigmoid,
    slice_axis,
    stack,
    take,
    tanh,
    tensor_mean,
    tensor_sum,
    unstack,
)
from src.tensor_core.tensor import (
    Function,
    GradGraph,
    Tensor,
    backward,
    is_grad_enabled,
    no_grad,
)
from src.utils.custom_exceptions import ConfigError


def slice_concat_repeat(x: Tensor, request: dict) -> Tensor:
    """
    Structural op dispatcher used by configuration-driven code paths.

    Parameters
    ----------
    x : Tensor
        Tensor to transform.
    request : dict
        One of `{"slice": axis, "index": i}`, `{"slice": axis, "start": a, "stop": b}`,
        `{"concat": axis, "with": [tensors]}` or `{"repeat": times, "axis": axis}`.

    Returns
    -------
    Tensor
        The transformed tensor.
    """
    if "slice" in request and "index" in request:
        return take(x, request["slice"], request["index"])
    if "slice" in request:
        return slice_axis(x, request["slice"], request.get("start", 0), request.get("stop"))
    if "concat" in request:
        return concat([x, *request.get("with", [])], axis=request["concat"])
    if "repeat" in request:
        return repeat(x, request["repeat"], axis=request.get("axis", 0))
    raise ConfigError(f"Unknown structural request {sorted(request)}.")
