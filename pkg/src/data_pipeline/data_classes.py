from typing import Iterator, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.tensor_core.tensor import Tensor
from src.utils.constants import BIN_MINUTES, FRAMES_PER_DAY
from src.utils.custom_exceptions import DTypeError, ShapeError


class TrafficMovie(BaseModel):
    """
    Grid traffic movie of shape (T, H, W, C) in uint8. For C=8, channel pairs (2k, 2k+1)
    hold (volume, speed) for the headings NE, SE, SW and NW; one day is 288 frames.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    city: str
    year: int = 0
    frames: Tensor
    bin_minutes: int = Field(default=BIN_MINUTES)

    @field_validator("frames")
    def validate_frames(cls, frames):
        if frames.ndim != 4:
            raise ShapeError(f"Movie frames must be (T, H, W, C), got {frames.shape}.")
        if frames.dtype != "u8":
            raise DTypeError(expected="u8", received=frames.dtype)
        return frames

    @property
    def movie_id(self) -> str:
        return f"{self.city}_{self.year}"

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.frames.shape

    def days(self) -> Iterator[Tuple[int, np.ndarray]]:
        """Consecutive 288-frame chunks (the last one may be shorter)."""
        array = self.frames.data
        for day, start in enumerate(range(0, array.shape[0], FRAMES_PER_DAY)):
            yield day, array[start : start + FRAMES_PER_DAY]


class SamplePair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    input: Tensor = Field(description="(12, H, W, C) normalized input hour.")
    target: Tensor = Field(description="(T_out, H, W, C) normalized target frames.")
    movie_id: str
    day: int = 0
    start: int = Field(ge=0, description="Index of the first input frame within the day.")


class BinaryMask(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    mask: Tensor = Field(description="(H, W) uint8 tensor of zeros and ones.")
    source: Literal["training", "test"] = "training"

    @field_validator("mask")
    def validate_mask(cls, mask):
        if mask.ndim != 2:
            raise ShapeError(f"A mask is (H, W), got {mask.shape}.")
        return mask

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def coverage(self) -> float:
        return float(self.mask.data.mean())
