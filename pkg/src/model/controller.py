from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from loguru import logger

from src.convlstm import ConvLSTMLayer
from src.io_schemas.config_schemas import GROUP_NAMES, ModelConfig
from src.io_schemas.output_schemas import ParameterBreakdown
from src.model.data_classes import LayerRecord
from src.nn_ops import (
    Conv3DParams,
    ConvTransposeParams,
    SpatialDropoutParams,
    conv2d_transpose,
    conv3d_1x1,
    maxpool2,
    spatial_dropout,
)
from src.tensor_core.ops import activation, repeat, slice_axis
from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import ConfigError, ShapeError


def apply_skip(
    mode: str, layer: ConvLSTMLayer, inputs: Tensor, record: LayerRecord
) -> Tuple[Tensor, LayerRecord]:
    """
    Run one decoder ConvLSTM layer with a skip connection from its encoder partner.

    Parameters
    ----------
    mode : {"addition", "temporal_concat", "hidden_cell"}
        - addition: the decoder input is summed with the last T_dec steps of the encoder
          output sequence and run from a zero state.
        - temporal_concat: the decoder layer first runs over the encoder output sequence
          from a zero state, then continues over its own input from the resulting state.
        - hidden_cell: the decoder layer starts from the encoder layer's final state.
    layer : ConvLSTMLayer
        Decoder layer.
    inputs : Tensor
        Decoder input sequence (..., T_dec, H, W, C).
    record : LayerRecord
        Encoder partner's output sequence and final state.

    Raises
    ------
    ShapeError
        If the skip source and the decoder input disagree on spatial extent or channels,
        or (addition) the encoder sequence is shorter than the decoder sequence.
    ConfigError
        If the mode is unknown.

    Returns
    -------
    tuple
        Decoder output sequence and its final state.
    """
    source = record.outputs
    if source.shape[:-4] != inputs.shape[:-4] or source.shape[-3:-1] != inputs.shape[-3:-1]:
        raise ShapeError(
            f"Skip source {source.shape} does not match decoder input {inputs.shape} spatially."
        )

    if mode == "addition":
        steps, source_steps = inputs.shape[-4], source.shape[-4]
        if source_steps < steps:
            raise ShapeError(
                f"Addition skip needs at least {steps} encoder steps, got {source_steps}."
            )
        if source.shape[-1] != inputs.shape[-1]:
            raise ShapeError(
                f"Addition skip needs equal channels, got {source.shape[-1]} and {inputs.shape[-1]}."
            )
        truncated = slice_axis(source, -4, source_steps - steps)
        outputs, final = layer.run_sequence(inputs + truncated)
    elif mode == "temporal_concat":
        _, warmed = layer.run_sequence(source)
        outputs, final = layer.run_sequence(inputs, warmed)
    elif mode == "hidden_cell":
        if record.final.shape[-1] != layer.filters:
            raise ShapeError(
                f"Encoder state width {record.final.shape[-1]} does not match decoder width {layer.filters}."
            )
        outputs, final = layer.run_sequence(inputs, record.final)
    else:
        raise ConfigError(f"Unknown skip mode '{mode}'.")
    return outputs, LayerRecord(outputs=outputs, final=final)


class DualUNet:
    """
    Dual-encoding ConvLSTM U-Net.

    Two encoders (E_theta and E_phi) of three ConvLSTM layers each, separated by 2x2 max
    pooling, summarize the input hour. Their deepest final hidden states are repeated
    along a new time axis and summed. The core variant then applies spatial dropout and
    a 1x1 3D convolution that sets the number of decoded frames. The decoder (D_theta)
    runs three ConvLSTM layers joined by two transposed convolutions and receives skip
    connections from E_theta at matching resolutions.
    """

    def __init__(self, config: ModelConfig, rng: Optional[np.random.Generator] = None):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.frozen: set = set()

        def encoder() -> List[ConvLSTMLayer]:
            widths = [config.channels] + list(config.encoder_widths)
            return [self._layer(cin, cout, rng) for cin, cout in zip(widths, widths[1:])]

        self.E_theta = encoder()
        self.E_phi = encoder() if config.dual_encoder else []

        g1, g2, g3 = config.decoder_widths
        f3 = config.encoder_widths[-1]
        self.D_theta = [self._layer(f3, g1, rng), self._layer(g2, g2, rng), self._layer(g3, g3, rng)]
        self.upsample = [
            ConvTransposeParams.create(2, g1, g2, rng, dtype=config.dtype),
            ConvTransposeParams.create(2, g2, g3, rng, dtype=config.dtype),
        ]

        self.conv3d: Optional[Conv3DParams] = None
        self.dropout: Optional[SpatialDropoutParams] = None
        if config.has_head:
            self.dropout = SpatialDropoutParams(rate=config.dropout_rate)
            self.conv3d = Conv3DParams.create(
                config.repeat_frames, config.output_frames, rng, dtype=config.dtype
            )

    def _layer(self, in_channels: int, filters: int, rng: np.random.Generator) -> ConvLSTMLayer:
        return ConvLSTMLayer(
            in_channels,
            filters,
            rng,
            kernel=self.config.kernel,
            peephole=self.config.peephole,
            forget_bias=self.config.forget_bias,
            dtype=self.config.dtype,
        )

    # PARAMETERS

    def layers(self) -> Dict[str, Dict[str, Tensor]]:
        """Named parameters grouped per layer, e.g. 'E_theta.convlstm_1'."""
        layers: Dict[str, Dict[str, Tensor]] = {}
        for group in ("E_theta", "E_phi", "D_theta"):
            for index, layer in enumerate(getattr(self, group), start=1):
                layers[f"{group}.convlstm_{index}"] = layer.parameters()
        for index, params in enumerate(self.upsample, start=1):
            layers[f"D_theta.upsample_{index}"] = params.parameters()
        if self.conv3d is not None:
            layers["head.conv3d"] = self.conv3d.parameters()
        return layers

    def groups(self) -> Dict[str, Dict[str, Tensor]]:
        groups: Dict[str, Dict[str, Tensor]] = {}
        for layer_name, params in self.layers().items():
            group = layer_name.split(".")[0]
            for name, tensor in params.items():
                groups.setdefault(group, {})[f"{layer_name}.{name}"] = tensor
        return groups

    def named_parameters(self) -> Dict[str, Tensor]:
        return {
            name: tensor for params in self.groups().values() for name, tensor in params.items()
        }

    def trainable_parameters(self) -> Dict[str, Tensor]:
        return {
            name: tensor
            for group, params in self.groups().items()
            if group not in self.frozen
            for name, tensor in params.items()
        }

    def zero_grad(self) -> None:
        for tensor in self.named_parameters().values():
            tensor.zero_grad()

    def freeze(self, group: str) -> None:
        if group not in GROUP_NAMES:
            raise ConfigError(f"Unknown parameter group '{group}'. Use one of {list(GROUP_NAMES)}.")
        if group not in self.groups():
            raise ConfigError(f"Group '{group}' is not part of this {self.config.variant} model.")
        self.frozen.add(group)
        logger.info(f"Froze {group} ({sum(t.size for t in self.groups()[group].values())} parameters)")

    def unfreeze(self, group: str) -> None:
        self.frozen.discard(group)

    def census(self) -> Dict[str, int]:
        return {
            "convlstm": len(self.E_theta) + len(self.E_phi) + len(self.D_theta),
            "conv_transpose": len(self.upsample),
            "conv3d": int(self.conv3d is not None),
        }

    def count_parameters(self) -> ParameterBreakdown:
        return count_parameters(self.groups(), frozen=self.frozen)

    # FORWARD

    def _encode(self, layers: List[ConvLSTMLayer], x: Tensor) -> List[LayerRecord]:
        records = []
        inputs = x
        for index, layer in enumerate(layers):
            outputs, final = layer.run_sequence(inputs)
            records.append(LayerRecord(outputs=outputs, final=final))
            if index < len(layers) - 1:
                inputs = maxpool2(outputs)
        return records

    def encode(self, x: Tensor, records: Optional[List[LayerRecord]] = None) -> Tensor:
        """Repeated, summed final hidden states of the deepest encoder layers."""
        theta = records if records is not None else self._encode(self.E_theta, x)
        encoding = repeat(theta[-1].final.hidden, self.config.repeat_frames, axis=-4)
        if self.E_phi:
            phi = self._encode(self.E_phi, x)
            encoding = encoding + repeat(phi[-1].final.hidden, self.config.repeat_frames, axis=-4)
        return encoding

    def forward(
        self,
        x: Tensor,
        mode: Literal["train", "eval"] = "eval",
        rng: Optional[np.random.Generator] = None,
    ) -> Tensor:
        """
        Predict T_out frames from T_in normalized input frames.

        Parameters
        ----------
        x : Tensor
            Input (T_in, H, W, C) or a batch (N, T_in, H, W, C), values in [0, 1].
        mode : {"train", "eval"}
            Train mode enables spatial dropout, drawing from `rng`.
        rng : numpy.random.Generator, optional
            Dropout stream; required in train mode when the dropout rate is nonzero.

        Raises
        ------
        ShapeError
            If the input does not have T_in frames and C channels, or is too small to
            pool twice (H, W >= 4).

        Returns
        -------
        Tensor
            Predictions shaped (T_out, H, W, C), batched like `x`.
        """
        config = self.config
        if x.ndim not in (4, 5) or x.shape[-4] != config.input_frames or x.shape[-1] != config.channels:
            raise ShapeError(
                f"Expected input (..., {config.input_frames}, H, W, {config.channels}), got {x.shape}."
            )
        if x.shape[-3] < 4 or x.shape[-2] < 4:
            raise ShapeError(f"Spatial dims {x.shape[-3:-1]} are too small to pool twice.")
        if x.dtype != config.dtype:
            x = Tensor(x.data, dtype=config.dtype)

        records = self._encode(self.E_theta, x)
        decoded = self.encode(x, records)
        if self.conv3d is not None:
            dropout = self.dropout.model_copy(update={"mode": mode})
            decoded = conv3d_1x1(spatial_dropout(decoded, dropout, rng), self.conv3d)

        resolutions = [record.outputs.shape[-3:-1] for record in records]
        for depth, layer in enumerate(self.D_theta):
            partner = records[len(records) - 1 - depth]
            decoded, _ = apply_skip(config.skip_mode, layer, decoded, partner)
            if depth < len(self.upsample):
                target_hw = resolutions[len(resolutions) - 2 - depth]
                decoded = conv2d_transpose(decoded, self.upsample[depth], output_hw=target_hw)
        return activation(config.output_activation, decoded)

    __call__ = forward

    def decoder_steps(self) -> int:
        return sum(layer.step_count for layer in self.D_theta)

    def reset_step_counts(self) -> None:
        for layer in self.E_theta + self.E_phi + self.D_theta:
            layer.step_count = 0


def count_parameters(
    groups: Dict[str, Dict[str, Tensor]], frozen: Optional[set] = None
) -> ParameterBreakdown:
    """
    Parameter totals per layer, per group and overall, plus the trainable/frozen split.

    Parameter names follow `<group>.<layer>.<tensor...>`; a mapping without any groups
    counts as zero parameters.
    """
    frozen = frozen or set()
    breakdown = ParameterBreakdown()
    for group, params in groups.items():
        for name, tensor in params.items():
            layer = ".".join(name.split(".")[:2])
            breakdown.per_layer[layer] = breakdown.per_layer.get(layer, 0) + tensor.size
            breakdown.per_group[group] = breakdown.per_group.get(group, 0) + tensor.size
    breakdown.total = sum(breakdown.per_group.values())
    breakdown.frozen = sum(count for group, count in breakdown.per_group.items() if group in frozen)
    breakdown.trainable = breakdown.total - breakdown.frozen
    return breakdown
