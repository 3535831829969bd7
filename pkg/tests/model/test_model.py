"""
Tests for the dual-encoding U-Net: construction and parameter census, forward shapes,
skip-connection identities, freezing and a whole-model gradient check.
"""

import numpy as np
import pytest

from src.convlstm import ConvLSTMLayer, ConvLSTMState
from src.io_schemas.config_schemas import ModelConfig
from src.model import apply_skip, build, count_parameters, forward, freeze, model_parameters
from src.model.data_classes import LayerRecord
from src.optim import SGD
from src.tensor_core import Tensor, backward, mse_loss, no_grad, slice_axis
from src.tensor_core.gradcheck import check_directional_gradient, check_gradients
from src.utils.custom_exceptions import ConfigError, ShapeError


def skip_config(mode: str) -> ModelConfig:
    return ModelConfig(
        input_frames=6, channels=2, encoder_widths=[2, 2, 2], skip_mode=mode, dtype="f64", seed=11
    )


def random_input(config: ModelConfig, rng, height=8, width=8, batch=None):
    shape = (config.input_frames, height, width, config.channels)
    if batch is not None:
        shape = (batch,) + shape
    return Tensor(rng.uniform(0.0, 1.0, size=shape), dtype=config.dtype)


def train_steps(model, x, target, steps, lr=0.5):
    optimizer = SGD(lr)
    for _ in range(steps):
        model.zero_grad()
        backward(mse_loss(model(x), target))
        optimizer.step(model.trainable_parameters())


# =============================================================================
# Construction
# =============================================================================


class TestBuild:
    def test_core_parameter_count(self):
        breakdown = model_parameters(build(ModelConfig()))
        assert breakdown.total == 451_490
        assert breakdown.total < 500_000

    def test_extended_parameter_count(self):
        total = build(ModelConfig(variant="extended")).count_parameters().total
        assert total == 118_196
        assert 100_000 <= total <= 140_000

    def test_extended_is_narrower_and_headless(self):
        core, extended = ModelConfig(), ModelConfig(variant="extended")
        assert all(e <= c for e, c in zip(extended.encoder_widths, core.encoder_widths))
        model = build(extended)
        assert model.conv3d is None and model.dropout is None

    def test_extended_accepts_narrower_custom_widths(self):
        config = ModelConfig(variant="extended", encoder_widths=[8, 8, 8])
        assert config.decoder_widths == [8, 8, 8]

    def test_census_counts_twelve_conv_layers(self):
        census = build(ModelConfig()).census()
        assert census == {"convlstm": 9, "conv_transpose": 2, "conv3d": 1}
        assert sum(census.values()) == 12

    def test_same_seed_same_parameters(self, tiny_config):
        first, second = build(tiny_config), build(tiny_config)
        for name, tensor in first.named_parameters().items():
            assert np.array_equal(tensor.data, second.named_parameters()[name].data)

    def test_different_seed_different_parameters(self, tiny_config):
        other = tiny_config.model_copy(update={"seed": tiny_config.seed + 1})
        first = build(tiny_config).named_parameters()["E_theta.convlstm_1.gates.weight"]
        second = build(other).named_parameters()["E_theta.convlstm_1.gates.weight"]
        assert not np.array_equal(first.data, second.data)

    def test_breakdown_sums(self, tiny_config):
        breakdown = build(tiny_config).count_parameters()
        assert sum(breakdown.per_layer.values()) == breakdown.total == sum(breakdown.per_group.values())
        assert set(breakdown.per_group) == {"E_theta", "E_phi", "D_theta", "head"}

    def test_convlstm_layer_breakdown(self):
        breakdown = build(ModelConfig()).count_parameters()
        assert breakdown.per_layer["E_theta.convlstm_2"] == 13_888

    def test_empty_grouping_counts_zero(self):
        assert count_parameters({}).total == 0

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"encoder_widths": [8, 16, 48], "decoder_widths": [48, 16, 4]},
            {"encoder_widths": [8, 0, 4]},
            {"encoder_widths": [4, 8, 8]},
            {"encoder_widths": [8, 16]},
            {"variant": "extended", "repeat_frames": 12},
            {"variant": "extended", "encoder_widths": [8, 16, 48]},
            {"variant": "extended", "encoder_widths": [8, 24, 8]},
            {"dropout_rate": 1.0},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ConfigError):
            ModelConfig(**kwargs)


# =============================================================================
# Forward
# =============================================================================


class TestForward:
    def test_output_shape(self, tiny_config, rng):
        model = build(tiny_config)
        with no_grad():
            out = forward(model, random_input(tiny_config, rng, 32, 32))
        assert out.shape == (6, 32, 32, 8)

    def test_batched_odd_grid(self, tiny_f64_config, rng):
        model = build(tiny_f64_config)
        with no_grad():
            out = model(random_input(tiny_f64_config, rng, 9, 7, batch=2))
        assert out.shape == (2, 6, 9, 7, 2)

    def test_twelve_frames_extended(self, rng):
        config = ModelConfig(
            variant="extended", output_frames=12, channels=2, encoder_widths=[2, 2, 2], input_frames=3
        )
        with no_grad():
            assert build(config)(random_input(config, rng)).shape == (12, 8, 8, 2)

    def test_head_maps_twelve_repeats_to_six_frames(self, rng):
        config = ModelConfig(repeat_frames=12, channels=2, encoder_widths=[2, 2, 2], input_frames=3)
        with no_grad():
            assert build(config)(random_input(config, rng)).shape == (6, 8, 8, 2)

    @pytest.mark.slow
    def test_full_size_grid(self, tiny_config, rng):
        with no_grad():
            out = build(tiny_config)(random_input(tiny_config, rng, 495, 436))
        assert out.shape == (6, 495, 436, 8)

    def test_grid_too_small(self, tiny_f64_config, rng):
        with pytest.raises(ShapeError):
            build(tiny_f64_config)(random_input(tiny_f64_config, rng, 3, 8))

    def test_wrong_frame_count(self, tiny_f64_config):
        with pytest.raises(ShapeError):
            build(tiny_f64_config)(Tensor(np.zeros((5, 8, 8, 2)), dtype="f64"))

    def test_relu_output_is_non_negative(self, tiny_config, rng):
        with no_grad():
            out = build(tiny_config)(random_input(tiny_config, rng))
        assert out.data.min() >= 0.0

    def test_eval_mode_is_deterministic(self, tiny_f64_config, rng):
        model = build(tiny_f64_config)
        x = random_input(tiny_f64_config, rng)
        with no_grad():
            assert np.array_equal(model(x).data, model(x).data)

    def test_train_mode_follows_stream(self, rng):
        config = ModelConfig(
            channels=2, encoder_widths=[2, 2, 2], input_frames=3, dropout_rate=0.5, dtype="f64"
        )
        model = build(config)
        x = random_input(config, rng)
        with no_grad():
            first = model(x, mode="train", rng=np.random.default_rng(4)).data
            second = model(x, mode="train", rng=np.random.default_rng(4)).data
            with pytest.raises(ConfigError):
                model(x, mode="train")
        assert np.array_equal(first, second)

    def test_single_encoder_ablation(self, tiny_f64_config, rng):
        config = tiny_f64_config.model_copy(update={"dual_encoder": False})
        model = build(config)
        assert "E_phi" not in model.groups()
        with no_grad():
            assert model(random_input(config, rng)).shape == (6, 8, 8, 2)

    def test_whole_model_gradient(self, gradcheck_config, rng):
        model = build(gradcheck_config)
        x = random_input(gradcheck_config, rng)
        target = Tensor(rng.uniform(0.0, 1.0, size=(6, 8, 8, 8)), dtype="f64")
        results = check_gradients(
            lambda: mse_loss(model(x), target), model.named_parameters(), max_coordinates=4, rng=rng
        )
        assert set(results) == set(model.named_parameters())
        worst = max(results.values(), key=lambda result: result.relative_error)
        assert worst.relative_error < 1e-3, worst.name

    def test_whole_model_directional_gradient(self, gradcheck_config, rng):
        model = build(gradcheck_config)
        x = random_input(gradcheck_config, rng)
        target = Tensor(rng.uniform(0.0, 1.0, size=(6, 8, 8, 8)), dtype="f64")
        result = check_directional_gradient(
            lambda: mse_loss(model(x), target), model.named_parameters(), directions=3, rng=rng
        )
        assert result.relative_error < 1e-3


# =============================================================================
# Skip connections
# =============================================================================


@pytest.fixture
def decoder_layer():
    return ConvLSTMLayer(2, 2, np.random.default_rng(21), dtype="f64")


@pytest.fixture
def encoder_record(rng):
    encoder = ConvLSTMLayer(2, 2, np.random.default_rng(22), dtype="f64")
    outputs, final = encoder.run_sequence(Tensor(rng.uniform(size=(4, 5, 5, 2)), dtype="f64"))
    return LayerRecord(outputs=outputs, final=final)


@pytest.fixture
def decoder_input(rng):
    return Tensor(rng.uniform(size=(4, 5, 5, 2)), dtype="f64")


class TestApplySkip:
    def test_zero_state_skip_equals_no_skip(self, decoder_layer, encoder_record, decoder_input):
        record = LayerRecord(
            outputs=encoder_record.outputs, final=ConvLSTMState.zeros((5, 5, 2), dtype="f64")
        )
        outputs, _ = apply_skip("hidden_cell", decoder_layer, decoder_input, record)
        plain, _ = decoder_layer.run_sequence(decoder_input)
        assert np.array_equal(outputs.data, plain.data)

    def test_hidden_cell_carries_the_cell_state(self, decoder_layer, encoder_record, decoder_input):
        final = encoder_record.final
        hidden_only = LayerRecord(
            outputs=encoder_record.outputs,
            final=ConvLSTMState(hidden=final.hidden, cell=Tensor(np.zeros(final.shape), dtype="f64")),
        )
        with_cell, _ = apply_skip("hidden_cell", decoder_layer, decoder_input, encoder_record)
        without_cell, _ = apply_skip("hidden_cell", decoder_layer, decoder_input, hidden_only)
        assert not np.allclose(with_cell.data, without_cell.data)

    def test_temporal_concat_equals_warmed_hidden_cell(
        self, decoder_layer, encoder_record, decoder_input
    ):
        _, warmed = decoder_layer.run_sequence(encoder_record.outputs)
        seeded = LayerRecord(outputs=encoder_record.outputs, final=warmed)
        via_state, _ = apply_skip("hidden_cell", decoder_layer, decoder_input, seeded)
        via_concat, _ = apply_skip("temporal_concat", decoder_layer, decoder_input, encoder_record)
        assert np.array_equal(via_state.data, via_concat.data)

    def test_temporal_concat_doubles_cell_steps(self, decoder_layer, encoder_record, decoder_input):
        decoder_layer.step_count = 0
        apply_skip("hidden_cell", decoder_layer, decoder_input, encoder_record)
        hidden_cell_steps = decoder_layer.step_count
        decoder_layer.step_count = 0
        apply_skip("temporal_concat", decoder_layer, decoder_input, encoder_record)
        assert decoder_layer.step_count == 2 * hidden_cell_steps == 8

    def test_addition_uses_latest_encoder_steps(self, decoder_layer, encoder_record, rng):
        short_input = Tensor(rng.uniform(size=(3, 5, 5, 2)), dtype="f64")
        outputs, _ = apply_skip("addition", decoder_layer, short_input, encoder_record)
        expected, _ = decoder_layer.run_sequence(short_input + slice_axis(encoder_record.outputs, 0, 1))
        assert np.array_equal(outputs.data, expected.data)

    def test_addition_needs_enough_encoder_steps(self, decoder_layer, encoder_record, rng):
        long_input = Tensor(rng.uniform(size=(6, 5, 5, 2)), dtype="f64")
        with pytest.raises(ShapeError):
            apply_skip("addition", decoder_layer, long_input, encoder_record)

    def test_spatial_mismatch(self, decoder_layer, encoder_record, rng):
        narrow = Tensor(rng.uniform(size=(4, 4, 5, 2)), dtype="f64")
        with pytest.raises(ShapeError):
            apply_skip("hidden_cell", decoder_layer, narrow, encoder_record)

    def test_unknown_mode(self, decoder_layer, encoder_record, decoder_input):
        with pytest.raises(ConfigError):
            apply_skip("gated", decoder_layer, decoder_input, encoder_record)

    def test_zero_encoder_makes_addition_match_hidden_cell(self, rng):
        outputs = {}
        for mode in ("addition", "hidden_cell"):
            model = build(skip_config(mode))
            for tensor in model.groups()["E_theta"].values():
                tensor.data[...] = 0.0
            with no_grad():
                outputs[mode] = model(random_input(skip_config(mode), np.random.default_rng(8))).data
        assert np.array_equal(outputs["addition"], outputs["hidden_cell"])

    def test_model_decoder_steps(self, rng):
        steps = {}
        for mode in ("hidden_cell", "temporal_concat"):
            model = build(skip_config(mode))
            with no_grad():
                model(random_input(skip_config(mode), rng))
            steps[mode] = model.decoder_steps()
            model.reset_step_counts()
            assert model.decoder_steps() == 0
        assert steps["temporal_concat"] == 2 * steps["hidden_cell"] == 36


# =============================================================================
# Freezing
# =============================================================================


class TestFreeze:
    def test_unknown_group(self, tiny_f64_config):
        with pytest.raises(ConfigError):
            freeze(build(tiny_f64_config), "decoder")

    def test_absent_group(self):
        with pytest.raises(ConfigError):
            build(ModelConfig(variant="extended")).freeze("head")

    def test_trainable_count(self, tiny_config):
        model = build(tiny_config)
        before = model.count_parameters()
        freeze(model, "E_phi")
        after = model.count_parameters()
        assert after.trainable == before.total - before.per_group["E_phi"]
        assert after.frozen == before.per_group["E_phi"]

    def test_frozen_group_is_bit_invariant(self, tiny_f64_config, rng):
        model = build(tiny_f64_config)
        freeze(model, "E_phi")
        phi_before = {n: t.data.copy() for n, t in model.groups()["E_phi"].items()}
        theta_before = {n: t.data.copy() for n, t in model.groups()["E_theta"].items()}

        x = random_input(tiny_f64_config, rng)
        target = Tensor(rng.uniform(size=(6, 8, 8, 2)), dtype="f64")
        train_steps(model, x, target, steps=5)

        for name, tensor in model.groups()["E_phi"].items():
            assert np.array_equal(tensor.data, phi_before[name])
            assert tensor.grad is not None
        assert any(
            not np.array_equal(tensor.data, theta_before[name])
            for name, tensor in model.groups()["E_theta"].items()
        )

    def test_paired_runs_differ_only_outside_frozen_group(self, tiny_f64_config, rng):
        x = random_input(tiny_f64_config, rng)
        target = Tensor(rng.uniform(size=(6, 8, 8, 2)), dtype="f64")
        frozen, free = build(tiny_f64_config), build(tiny_f64_config)
        frozen.freeze("E_phi")
        initial = {n: t.data.copy() for n, t in frozen.named_parameters().items()}
        train_steps(frozen, x, target, steps=2)
        train_steps(free, x, target, steps=2)

        assert any(
            not np.array_equal(tensor.data, initial[name])
            for name, tensor in free.groups()["E_phi"].items()
        )
        for name, tensor in frozen.groups()["E_phi"].items():
            assert np.array_equal(tensor.data, initial[name])

    def test_unfreeze(self, tiny_f64_config):
        model = build(tiny_f64_config)
        model.freeze("E_phi")
        model.unfreeze("E_phi")
        assert model.count_parameters().frozen == 0
