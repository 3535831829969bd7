from typing import Literal, Optional

import numpy as np

from src.io_schemas.config_schemas import ModelConfig
from src.io_schemas.output_schemas import ParameterBreakdown
from src.model.checkpoint import Checkpoint
from src.model.controller import DualUNet, apply_skip, count_parameters
from src.tensor_core.tensor import Tensor


def build(config: ModelConfig, rng: Optional[np.random.Generator] = None) -> DualUNet:
    """Instantiate a model; parameters depend only on `config.seed` unless `rng` is given."""
    return DualUNet(config, rng)


def forward(
    model: DualUNet,
    x: Tensor,
    mode: Literal["train", "eval"] = "eval",
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    return model.forward(x, mode=mode, rng=rng)


def freeze(model: DualUNet, group: str) -> None:
    model.freeze(group)


def model_parameters(model: DualUNet) -> ParameterBreakdown:
    return model.count_parameters()


__all__ = [
    "Checkpoint",
    "DualUNet",
    "apply_skip",
    "build",
    "count_parameters",
    "forward",
    "freeze",
    "model_parameters",
]
