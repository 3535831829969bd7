from typing import Dict, List, Optional, Tuple

import numpy as np

from src.convlstm.data_classes import ConvLSTMState
from src.nn_ops import Conv2DParams, conv2d
from src.nn_ops.data_classes import zeros_parameter
from src.tensor_core.ops import (
    activation,
    concat,
    elementwise,
    slice_axis,
    stack,
    take,
)
from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import DegenerateInputError, ShapeError


GATES = ("input", "forget", "candidate", "output")


class ConvLSTMLayer:
    """
    Convolutional LSTM layer with a single fused gate convolution.

    The gate convolution maps the channel concatenation [x_t, h_{t-1}] to 4F channels,
    split in the order input, forget, candidate, output. Optional peephole weights are
    per-channel vectors of shape (F,) applied to the cell state.
    """

    def __init__(
        self,
        in_channels: int,
        filters: int,
        rng: np.random.Generator,
        kernel: int = 3,
        peephole: bool = False,
        forget_bias: float = 1.0,
        dtype: str = "f32",
    ):
        self.in_channels = in_channels
        self.filters = filters
        self.kernel = kernel
        self.dtype = dtype
        bias_fill = np.zeros(4 * filters)
        bias_fill[filters : 2 * filters] = forget_bias
        self.gates = Conv2DParams.create(
            kernel=kernel,
            in_channels=in_channels + filters,
            out_channels=4 * filters,
            rng=rng,
            dtype=dtype,
            bias_fill=bias_fill,
        )
        self.peephole: Optional[Dict[str, Tensor]] = None
        if peephole:
            self.peephole = {
                gate: zeros_parameter((filters,), dtype) for gate in ("input", "forget", "output")
            }
        # Counts cell steps; skip-mode cost comparisons read it
        self.step_count = 0

    @staticmethod
    def count_formula(in_channels: int, filters: int, kernel: int = 3, peephole: bool = False) -> int:
        count = 4 * (kernel * kernel * (in_channels + filters) * filters + filters)
        return count + (3 * filters if peephole else 0)

    def parameters(self) -> Dict[str, Tensor]:
        params = {f"gates.{name}": tensor for name, tensor in self.gates.parameters().items()}
        if self.peephole is not None:
            params.update({f"peephole.{gate}": tensor for gate, tensor in self.peephole.items()})
        return params

    def zero_state(self, like: Tensor) -> ConvLSTMState:
        return ConvLSTMState.zeros(like.shape[:-1] + (self.filters,), dtype=like.dtype)

    def _gate(self, preactivation: Tensor, name: str, cell: Tensor) -> Tensor:
        if self.peephole is not None and name in self.peephole:
            preactivation = preactivation + elementwise("mul", cell, self.peephole[name])
        return activation("sigmoid", preactivation)

    def cell_step(self, x_t: Tensor, state: ConvLSTMState) -> ConvLSTMState:
        """
        One recurrence step.

        Parameters
        ----------
        x_t : Tensor
            Input frame(s) of shape (..., H, W, Cin).
        state : ConvLSTMState
            Previous (hidden, cell), shaped (..., H, W, F).

        Raises
        ------
        ShapeError
            If the state does not match the input's spatial extent or the layer's width.

        Returns
        -------
        ConvLSTMState
            The updated (hidden, cell).
        """
        expected = x_t.shape[:-1] + (self.filters,)
        if state.shape != expected:
            raise ShapeError(f"State shape {state.shape} does not match expected {expected}.")
        if x_t.shape[-1] != self.in_channels:
            raise ShapeError(
                f"Layer expects {self.in_channels} input channels, got shape {x_t.shape}."
            )

        stacked = conv2d(concat([x_t, state.hidden], axis=-1), self.gates)
        width = self.filters
        i_pre, f_pre, g_pre, o_pre = (
            slice_axis(stacked, -1, k * width, (k + 1) * width) for k in range(4)
        )
        input_gate = self._gate(i_pre, "input", state.cell)
        forget_gate = self._gate(f_pre, "forget", state.cell)
        candidate = activation("tanh", g_pre)
        cell = forget_gate * state.cell + input_gate * candidate
        output_gate = self._gate(o_pre, "output", cell)
        hidden = output_gate * activation("tanh", cell)

        self.step_count += 1
        return ConvLSTMState(hidden=hidden, cell=cell)

    def run_sequence(
        self, xs: Tensor, init: Optional[ConvLSTMState] = None
    ) -> Tuple[Tensor, ConvLSTMState]:
        """
        Run the layer over the time axis (-4) of `xs`, shaped (..., T, H, W, Cin).

        `init=None` starts from all-zero hidden and cell states. Returns the stacked
        hidden states (..., T, H, W, F) and the final state.
        """
        if xs.ndim < 4:
            raise ShapeError(f"run_sequence expects (..., T, H, W, C), got {xs.shape}.")
        steps = xs.shape[-4]
        if steps == 0:
            raise DegenerateInputError("run_sequence needs at least one time step.")

        frames: List[Tensor] = [take(xs, -4, t) for t in range(steps)]
        state = init if init is not None else self.zero_state(frames[0])
        outputs = []
        for frame in frames:
            state = self.cell_step(frame, state)
            outputs.append(state.hidden)
        return stack(outputs, axis=-4), state
