from typing import Dict, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import ConfigError


def glorot_uniform(
    shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype: str
) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), dtype=dtype, requires_grad=True)


def zeros_parameter(shape, dtype: str, fill: float = 0.0) -> Tensor:
    return Tensor(np.full(shape, fill), dtype=dtype, requires_grad=True)


class Conv2DParams(BaseModel):
    """
    Weights of a 2D convolution over channels-last inputs. The weight is laid out as
    (kh, kw, in_channels, out_channels) and the bias as (out_channels,).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weight: Tensor
    bias: Tensor
    stride: int = Field(default=1, ge=1)
    padding: Literal["same", "valid"] = "same"

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.weight.ndim != 4:
            raise ConfigError(f"Conv weight must be 4D (kh, kw, cin, cout), got {self.weight.shape}.")
        kh, kw, _, cout = self.weight.shape
        if kh < 1 or kw < 1:
            raise ConfigError("Kernel extents must be at least 1.")
        if self.bias.shape != (cout,):
            raise ConfigError(f"Bias shape {self.bias.shape} does not match {cout} output channels.")
        return self

    @classmethod
    def create(
        cls,
        kernel: int,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dtype: str = "f32",
        stride: int = 1,
        padding: str = "same",
        bias_fill: Optional[np.ndarray] = None,
    ) -> "Conv2DParams":
        fan = kernel * kernel
        weight = glorot_uniform(
            (kernel, kernel, in_channels, out_channels),
            fan_in=fan * in_channels,
            fan_out=fan * out_channels,
            rng=rng,
            dtype=dtype,
        )
        bias = zeros_parameter((out_channels,), dtype)
        if bias_fill is not None:
            bias.data[...] = bias_fill
        return cls(weight=weight, bias=bias, stride=stride, padding=padding)

    @property
    def kernel(self):
        return self.weight.shape[:2]

    @property
    def in_channels(self) -> int:
        return self.weight.shape[2]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[3]

    def parameters(self) -> Dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class ConvTransposeParams(Conv2DParams):
    """Upsampling transposed convolution; defaults to a 2x2 kernel at stride 2."""

    stride: int = Field(default=2, ge=1)
    padding: Literal["valid"] = "valid"

    @classmethod
    def create(
        cls,
        kernel: int,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        dtype: str = "f32",
        stride: int = 2,
        padding: str = "valid",
        bias_fill: Optional[np.ndarray] = None,
    ) -> "ConvTransposeParams":
        fan = kernel * kernel
        weight = glorot_uniform(
            (kernel, kernel, in_channels, out_channels),
            fan_in=fan * in_channels,
            fan_out=fan * out_channels,
            rng=rng,
            dtype=dtype,
        )
        return cls(weight=weight, bias=zeros_parameter((out_channels,), dtype), stride=stride)


class Conv3DParams(BaseModel):
    """1x1x1 3D convolution mixing the feature-map (time) axis: weight (T, M), bias (M,)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    weight: Tensor
    bias: Tensor

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ConfigError(
                f"Conv3D expects weight (T, M) and bias (M,), got {self.weight.shape} and {self.bias.shape}."
            )
        return self

    @classmethod
    def create(
        cls, in_maps: int, out_maps: int, rng: np.random.Generator, dtype: str = "f32"
    ) -> "Conv3DParams":
        if out_maps < 1:
            raise ConfigError(f"conv3d_1x1 needs at least one output map, got {out_maps}.")
        weight = glorot_uniform((in_maps, out_maps), in_maps, out_maps, rng, dtype)
        return cls(weight=weight, bias=zeros_parameter((out_maps,), dtype))

    @property
    def in_maps(self) -> int:
        return self.weight.shape[0]

    @property
    def out_maps(self) -> int:
        return self.weight.shape[1]

    def parameters(self) -> Dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


class SpatialDropoutParams(BaseModel):
    rate: float = Field(default=0.2, description="Probability of dropping a whole feature map.")
    mode: Literal["train", "eval"] = "train"

    @model_validator(mode="after")
    def validate_rate(self):
        if not 0.0 <= self.rate < 1.0:
            raise ConfigError(f"Dropout rate must lie in [0, 1), got {self.rate}.")
        return self
