from typing import Optional, Tuple

from src.convlstm.controller import ConvLSTMLayer
from src.convlstm.data_classes import ConvLSTMState
from src.tensor_core.tensor import Tensor


def cell_step(layer: ConvLSTMLayer, x_t: Tensor, state: ConvLSTMState) -> ConvLSTMState:
    return layer.cell_step(x_t, state)


def run_sequence(
    layer: ConvLSTMLayer, xs: Tensor, init: Optional[ConvLSTMState] = None
) -> Tuple[Tensor, ConvLSTMState]:
    return layer.run_sequence(xs, init)


__all__ = ["ConvLSTMLayer", "ConvLSTMState", "cell_step", "run_sequence"]
