from typing import Optional, Tuple

import numpy as np

from src.nn_ops.data_classes import (
    Conv2DParams,
    Conv3DParams,
    ConvTransposeParams,
    SpatialDropoutParams,
)
from src.nn_ops.functions import Conv2D, Conv3D1x1, ConvTranspose2D, MaxPool2
from src.tensor_core.ops import constant, elementwise, reshape
from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import ConfigError, DTypeError, ShapeError


def _flatten_lead(x: Tensor, trailing: int) -> Tuple[Tensor, Tuple[int, ...]]:
    if x.ndim < trailing:
        raise ShapeError(f"Expected at least {trailing} dims, got shape {x.shape}.")
    lead = x.shape[: x.ndim - trailing]
    flat = int(np.prod(lead, dtype=np.int64)) if lead else 1
    return reshape(x, (flat,) + x.shape[x.ndim - trailing :]), lead


def _check_dtype(x: Tensor, params) -> None:
    if x.dtype != params.weight.dtype:
        raise DTypeError(expected=params.weight.dtype, received=x.dtype)


def conv2d(x: Tensor, params: Conv2DParams) -> Tensor:
    """
    2D cross-correlation plus bias over the last three axes (H, W, Cin) of `x`.

    Any leading axes (time, batch) are treated as independent images. With 'same'
    padding and stride 1 the spatial extent is preserved; with 'valid' padding the
    output shrinks by kernel - 1.

    Parameters
    ----------
    x : Tensor
        Input of shape (..., H, W, Cin).
    params : Conv2DParams
        Convolution weights and configuration.

    Raises
    ------
    ShapeError
        If Cin does not match the weight, or a 'valid' kernel is larger than the input.

    Returns
    -------
    Tensor
        Output of shape (..., H', W', Cout).
    """
    if x.ndim < 3 or x.shape[-1] != params.in_channels:
        raise ShapeError(
            f"conv2d expects {params.in_channels} input channels, got shape {x.shape}."
        )
    kh, kw = params.kernel
    if params.padding == "valid" and (x.shape[-3] < kh or x.shape[-2] < kw):
        raise ShapeError(f"Kernel {(kh, kw)} is larger than the input {x.shape[-3:-1]}.")
    _check_dtype(x, params)
    flat, lead = _flatten_lead(x, 3)
    out = Conv2D.apply(
        flat, params.weight, params.bias, stride=params.stride, padding=params.padding
    )
    return reshape(out, lead + out.shape[1:])


def maxpool2(x: Tensor) -> Tensor:
    """
    2x2 max pooling with stride 2 in ceil mode: (..., H, W, C) -> (..., ceil(H/2),
    ceil(W/2), C). Odd edges behave as if padded with -inf. Ties route the gradient
    to the first maximum of each window in row-major order.
    """
    if x.ndim < 3 or x.shape[-3] < 1 or x.shape[-2] < 1:
        raise ShapeError(f"maxpool2 expects (..., H, W, C) with H, W >= 1, got {x.shape}.")
    flat, lead = _flatten_lead(x, 3)
    out = MaxPool2.apply(flat)
    return reshape(out, lead + out.shape[1:])


def conv2d_transpose(
    x: Tensor, params: ConvTransposeParams, output_hw: Optional[Tuple[int, int]] = None
) -> Tensor:
    """
    Transposed convolution upsampling (..., H, W, Cin) to
    ((H - 1) * stride + kh, (W - 1) * stride + kw) and cropping the bottom/right edges to
    `output_hw`, which is how ceil-mode pooling is undone on odd extents.

    Raises
    ------
    ShapeError
        If the channel count does not match or `output_hw` exceeds the produced output.
    """
    if x.ndim < 3 or x.shape[-1] != params.in_channels:
        raise ShapeError(
            f"conv2d_transpose expects {params.in_channels} input channels, got shape {x.shape}."
        )
    _check_dtype(x, params)
    kh, kw = params.kernel
    full_h = (x.shape[-3] - 1) * params.stride + kh
    full_w = (x.shape[-2] - 1) * params.stride + kw
    output_hw = (full_h, full_w) if output_hw is None else tuple(output_hw)
    if not (1 <= output_hw[0] <= full_h and 1 <= output_hw[1] <= full_w):
        raise ShapeError(
            f"Requested output {output_hw} is larger than the upsampled {(full_h, full_w)}."
        )
    flat, lead = _flatten_lead(x, 3)
    out = ConvTranspose2D.apply(
        flat, params.weight, params.bias, stride=params.stride, output_hw=output_hw
    )
    return reshape(out, lead + out.shape[1:])


def conv3d_1x1(x: Tensor, params: Conv3DParams) -> Tensor:
    """
    1x1x1 3D convolution mapping the T feature maps of (..., T, H, W, C) to
    `params.out_maps` maps, i.e. output (..., M, H, W, C).
    """
    if params.out_maps < 1:
        raise ConfigError(f"conv3d_1x1 needs at least one output map, got {params.out_maps}.")
    if x.ndim < 4 or x.shape[-4] != params.in_maps:
        raise ShapeError(f"conv3d_1x1 expects {params.in_maps} feature maps, got shape {x.shape}.")
    _check_dtype(x, params)
    flat, lead = _flatten_lead(x, 4)
    out = Conv3D1x1.apply(flat, params.weight, params.bias)
    return reshape(out, lead + out.shape[1:])


def spatial_dropout(
    x: Tensor, params: SpatialDropoutParams, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """
    Drop whole (H, W, C) feature maps of `x` with probability `params.rate` and scale
    the survivors by 1 / (1 - rate). Identity in eval mode or when the rate is 0.

    Parameters
    ----------
    x : Tensor
        Input of shape (..., T, H, W, C); each (H, W, C) slice is one feature map.
    params : SpatialDropoutParams
        Rate and mode.
    rng : numpy.random.Generator, optional
        Explicit random stream. Required in train mode with a nonzero rate.

    Raises
    ------
    ConfigError
        If the rate is outside [0, 1) or no stream was given when one is needed.
    """
    if not 0.0 <= params.rate < 1.0:
        raise ConfigError(f"Dropout rate must lie in [0, 1), got {params.rate}.")
    if params.mode == "eval" or params.rate == 0.0:
        return x
    if rng is None:
        raise ConfigError("spatial_dropout in train mode needs an explicit random stream.")
    if x.ndim < 3:
        raise ShapeError(f"spatial_dropout expects (..., H, W, C), got {x.shape}.")
    keep = rng.random(x.shape[:-3] + (1, 1, 1)) >= params.rate
    mask = constant(keep / (1.0 - params.rate), like=x)
    return elementwise("mul", x, mask)


__all__ = [
    "Conv2DParams",
    "Conv3DParams",
    "ConvTransposeParams",
    "SpatialDropoutParams",
    "conv2d",
    "conv2d_transpose",
    "conv3d_1x1",
    "maxpool2",
    "spatial_dropout",
]
