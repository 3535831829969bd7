from pydantic import BaseModel, ConfigDict

from src.convlstm.data_classes import ConvLSTMState
from src.tensor_core.tensor import Tensor


class LayerRecord(BaseModel):
    """Full output sequence and final state of one encoder ConvLSTM layer."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    outputs: Tensor
    final: ConvLSTMState
