from typing import Callable, Dict, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from src.tensor_core.tensor import Tensor, backward, no_grad
from src.utils.constants import GRADCHECK_STEP
from src.utils.custom_exceptions import DTypeError


class GradCheckResult(BaseModel):
    name: str = Field(description="Name of the checked input tensor.")
    checked: int = Field(description="Number of coordinates (or directions) compared.")
    relative_error: float = Field(
        description="||analytic - numeric|| / max(||analytic||, ||numeric||)."
    )


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _analytic_gradients(
    fn: Callable[[], Tensor], inputs: Dict[str, Tensor]
) -> Dict[str, np.ndarray]:
    for tensor in inputs.values():
        tensor.zero_grad()
    backward(fn())
    return {
        name: (
            tensor.grad.data.copy()
            if tensor.grad is not None
            else np.zeros_like(tensor.data)
        )
        for name, tensor in inputs.items()
    }


def _loss_value(fn: Callable[[], Tensor]) -> float:
    with no_grad():
        return float(fn().item())


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Dict[str, Tensor],
    step: float = GRADCHECK_STEP,
    max_coordinates: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, GradCheckResult]:
    """
    Compare the gradients produced by `backward` against central finite differences.

    `fn` must rebuild the scalar loss from the current contents of `inputs` every time it
    is called. Coordinates are perturbed in place and restored afterwards.

    Parameters
    ----------
    fn : callable
        Zero-argument function returning a scalar loss tensor.
    inputs : dict of str to Tensor
        Leaf tensors (f64, requires_grad) to check.
    step : float, optional
        Finite-difference step. Default is 1e-5.
    max_coordinates : int, optional
        When set, only this many coordinates per input are sampled (without replacement)
        using `rng`. By default every coordinate is checked.
    rng : numpy.random.Generator, optional
        Stream used for coordinate sampling.

    Raises
    ------
    DTypeError
        If an input is not f64.

    Returns
    -------
    dict of str to GradCheckResult
        One result per input.
    """
    for tensor in inputs.values():
        if tensor.dtype != "f64":
            raise DTypeError(expected="f64", received=tensor.dtype)
    rng = rng if rng is not None else np.random.default_rng(0)

    analytic = _analytic_gradients(fn, inputs)
    results = {}
    for name, tensor in inputs.items():
        flat = tensor.data.reshape(-1)
        coordinates = np.arange(flat.size)
        if max_coordinates is not None and flat.size > max_coordinates:
            coordinates = np.sort(rng.choice(flat.size, size=max_coordinates, replace=False))

        numeric = np.empty(len(coordinates))
        for position, coordinate in enumerate(coordinates):
            original = flat[coordinate]
            flat[coordinate] = original + step
            loss_plus = _loss_value(fn)
            flat[coordinate] = original - step
            loss_minus = _loss_value(fn)
            flat[coordinate] = original
            numeric[position] = (loss_plus - loss_minus) / (2.0 * step)

        error = relative_error(analytic[name].reshape(-1)[coordinates], numeric)
        results[name] = GradCheckResult(
            name=name, checked=len(coordinates), relative_error=error
        )
        logger.debug(f"gradcheck {name}: {len(coordinates)} coords, rel err {error:.3e}")
    return results


def check_directional_gradient(
    fn: Callable[[], Tensor],
    inputs: Dict[str, Tensor],
    directions: int = 3,
    step: float = GRADCHECK_STEP,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckResult:
    """
    Compare directional derivatives along random unit directions spanning all inputs at
    once. Used for whole-model checks, where per-coordinate sweeps would be too slow.
    """
    for tensor in inputs.values():
        if tensor.dtype != "f64":
            raise DTypeError(expected="f64", received=tensor.dtype)
    rng = rng if rng is not None else np.random.default_rng(0)

    analytic_grads = _analytic_gradients(fn, inputs)
    tensors: Sequence[Tensor] = list(inputs.values())
    originals = [tensor.data.copy() for tensor in tensors]

    analytic, numeric = np.empty(directions), np.empty(directions)
    for index in range(directions):
        vectors = [rng.standard_normal(tensor.shape) for tensor in tensors]
        norm = np.sqrt(sum(float(np.sum(v * v)) for v in vectors))
        vectors = [v / norm for v in vectors]
        analytic[index] = sum(
            float(np.sum(analytic_grads[name] * v)) for name, v in zip(inputs, vectors)
        )

        for tensor, original, v in zip(tensors, originals, vectors):
            tensor.data[...] = original + step * v
        loss_plus = _loss_value(fn)
        for tensor, original, v in zip(tensors, originals, vectors):
            tensor.data[...] = original - step * v
        loss_minus = _loss_value(fn)
        for tensor, original in zip(tensors, originals):
            tensor.data[...] = original
        numeric[index] = (loss_plus - loss_minus) / (2.0 * step)

    error = relative_error(analytic, numeric)
    logger.debug(f"directional gradcheck: {directions} directions, rel err {error:.3e}")
    return GradCheckResult(name="directional", checked=directions, relative_error=error)
