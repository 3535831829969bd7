from typing import Dict

from src.io_schemas.config_schemas import OptimizerConfig
from src.optim.controller import LAMB, SGD, Adam, AdamW, Optimizer
from src.tensor_core.tensor import Tensor


def build_optimizer(config: OptimizerConfig) -> Optimizer:
    common = {"clip_norm": config.clip_norm}
    if config.name == "sgd":
        return SGD(config.lr, momentum=config.momentum, **common)
    moments = {"beta1": config.beta1, "beta2": config.beta2, "eps": config.resolved_eps}
    if config.name == "adam":
        return Adam(config.lr, **moments, **common)
    if config.name == "adamw":
        return AdamW(config.lr, weight_decay=config.weight_decay, **moments, **common)
    return LAMB(config.lr, weight_decay=config.weight_decay, **moments, **common)


def step(optimizer: Optimizer, params: Dict[str, Tensor]) -> None:
    optimizer.step(params)


__all__ = ["Adam", "AdamW", "LAMB", "Optimizer", "SGD", "build_optimizer", "step"]
