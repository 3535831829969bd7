from typing import Literal, Union

import numpy as np

from src.data_pipeline.data_classes import BinaryMask
from src.tensor_core.ops import constant, elementwise
from src.tensor_core.tensor import FLOATING_DTYPES, Tensor
from src.utils.custom_exceptions import DegenerateInputError, DTypeError, ShapeError


ArrayLike = Union[Tensor, np.ndarray]


def _array(x: ArrayLike) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def normalize(frames: ArrayLike) -> Tensor:
    """uint8 frames to f32 in [0, 1] (x / 255)."""
    return Tensor(_array(frames).astype(np.float32) / np.float32(255.0))


def denormalize(frames: ArrayLike) -> Tensor:
    """[0, 1] values to uint8 as clamp(round(255 * x), 0, 255)."""
    scaled = np.rint(_array(frames).astype(np.float64) * 255.0)
    return Tensor(np.clip(scaled, 0, 255).astype(np.uint8))


def derive_mask(
    frames: ArrayLike, source: Literal["training", "test"] = "training"
) -> BinaryMask:
    """
    Road mask of a movie: a pixel is 1 iff any frame and any channel is nonzero there.

    Raises
    ------
    DegenerateInputError
        If the movie holds no elements.
    ShapeError
        If the frames are not (T, H, W, C).
    """
    array = _array(frames)
    if array.ndim != 4:
        raise ShapeError(f"derive_mask expects (T, H, W, C), got {array.shape}.")
    if array.size == 0:
        raise DegenerateInputError("Cannot derive a mask from an empty movie.")
    mask = np.any(array != 0, axis=(0, 3)).astype(np.uint8)
    return BinaryMask(mask=Tensor(mask), source=source)


def apply_mask(pred: ArrayLike, mask: BinaryMask) -> Tensor:
    """
    Zero every pixel of `pred` (..., H, W, C) that lies outside the mask. Floating
    tensors stay differentiable; uint8 inputs are masked directly.
    """
    shape = _array(pred).shape
    if len(shape) < 3 or shape[-3:-1] != mask.shape:
        raise ShapeError(f"Mask {mask.shape} does not match prediction {shape}.")
    keep = mask.mask.data[..., None]
    if isinstance(pred, Tensor) and pred.dtype in FLOATING_DTYPES:
        return elementwise("mul", pred, constant(keep, like=pred))
    return Tensor((_array(pred) * keep).astype(_array(pred).dtype))


def score(pred: ArrayLike, truth: ArrayLike) -> float:
    """
    Mean squared error on the raw 0-255 scale, computed in f64.

    Raises
    ------
    ShapeError
        If the shapes differ.
    """
    pred_array, truth_array = _array(pred), _array(truth)
    if pred_array.shape != truth_array.shape:
        raise ShapeError(f"Cannot score {pred_array.shape} against {truth_array.shape}.")
    if pred_array.size == 0:
        raise DegenerateInputError("Cannot score empty movies.")
    if pred_array.dtype != np.uint8 or truth_array.dtype != np.uint8:
        raise DTypeError(expected="u8", received=f"{pred_array.dtype}/{truth_array.dtype}")
    diff = pred_array.astype(np.float64) - truth_array.astype(np.float64)
    return float(np.mean(diff * diff))
