import numpy as np
import pytest

from src.io_schemas.config_schemas import ModelConfig, OptimizerConfig
from src.model import Checkpoint, build
from src.tensor_core import Tensor, no_grad
from src.utils.constants import CHECKPOINT_MAGIC
from src.utils.custom_exceptions import CheckpointError, IoError


@pytest.fixture
def model(tiny_f64_config):
    return build(tiny_f64_config)


@pytest.fixture
def checkpoint(model):
    return Checkpoint.from_model(
        model,
        optimizer_state=b"\x01\x02state",
        phase="pretrained",
        epoch=3,
        optimizer=OptimizerConfig(name="adam"),
    )


class TestCheckpoint:
    def test_bytes_round_trip_rebuilds_the_same_model(self, model, checkpoint, rng):
        restored = Checkpoint.from_bytes(checkpoint.to_bytes())
        assert restored.metadata == checkpoint.metadata
        assert restored.optimizer_state == b"\x01\x02state"
        assert restored.digest() == checkpoint.digest()

        x = Tensor(rng.uniform(size=(3, 8, 8, 2)), dtype="f64")
        with no_grad():
            assert np.array_equal(restored.build_model()(x).data, model(x).data)

    def test_layout_starts_with_magic_and_version(self, checkpoint):
        blob = checkpoint.to_bytes()
        assert blob[:4] == CHECKPOINT_MAGIC
        assert int.from_bytes(blob[4:8], "little") == 1
        assert int.from_bytes(blob[8:12], "little") == len(checkpoint.parameters)

    def test_save_and_load(self, checkpoint, tmp_path):
        path = checkpoint.save(tmp_path / "nested" / "model.gckp")
        assert Checkpoint.load(path).digest() == checkpoint.digest()

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            Checkpoint.load(tmp_path / "absent.gckp")

    def test_bad_magic(self, checkpoint):
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(b"GCMV" + checkpoint.to_bytes()[4:])

    def test_truncated(self, checkpoint):
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(checkpoint.to_bytes()[:-5])

    def test_trailing_bytes(self, checkpoint):
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(checkpoint.to_bytes() + b"\x00")

    def test_load_path_in_error(self, tmp_path):
        path = tmp_path / "junk.gckp"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError, match="junk.gckp"):
            Checkpoint.load(path)

    def test_does_not_fit_another_architecture(self, checkpoint):
        other = build(ModelConfig(input_frames=3, channels=2, encoder_widths=[2, 3, 4], dtype="f64"))
        with pytest.raises(CheckpointError):
            checkpoint.load_into(other)

    def test_dtype_mismatch(self, checkpoint, tiny_f64_config):
        other = build(tiny_f64_config.model_copy(update={"dtype": "f32"}))
        with pytest.raises(CheckpointError):
            checkpoint.load_into(other)

    def test_frozen_groups_travel(self, model):
        model.freeze("E_phi")
        restored = Checkpoint.from_bytes(Checkpoint.from_model(model).to_bytes()).build_model()
        assert restored.frozen == {"E_phi"}

    def test_group_digest(self, checkpoint):
        changed = checkpoint.clone()
        name = next(n for n in changed.parameters if n.startswith("E_theta."))
        changed.parameters[name] += 1.0
        assert changed.digest("E_phi") == checkpoint.digest("E_phi")
        assert changed.digest("E_theta") != checkpoint.digest("E_theta")

    def test_clone_is_independent(self, checkpoint):
        copy = checkpoint.clone()
        next(iter(copy.parameters.values()))[...] = 42.0
        assert copy.digest() != checkpoint.digest()

    def test_undecodable_tensor_name(self, checkpoint, tmp_path):
        blob = bytearray(checkpoint.to_bytes())
        # first byte of the first group name, after magic, version, count and its length
        blob[14] = 0xFF
        with pytest.raises(CheckpointError, match="Corrupted name"):
            Checkpoint.from_bytes(bytes(blob))
        path = tmp_path / "garbled.gckp"
        path.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="garbled.gckp"):
            Checkpoint.load(path)
