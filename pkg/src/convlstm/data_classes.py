from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import ShapeError


class ConvLSTMState(BaseModel):
    """Hidden and cell state of a ConvLSTM layer, both shaped (..., H, W, F)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    hidden: Tensor
    cell: Tensor

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.hidden.shape != self.cell.shape:
            raise ShapeError(
                f"Hidden {self.hidden.shape} and cell {self.cell.shape} shapes differ."
            )
        return self

    @classmethod
    def zeros(cls, shape: Tuple[int, ...], dtype: str = "f32") -> "ConvLSTMState":
        return cls(
            hidden=Tensor(np.zeros(shape), dtype=dtype),
            cell=Tensor(np.zeros(shape), dtype=dtype),
        )

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.hidden.shape
