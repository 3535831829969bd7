import gradio as gr
import numpy as np
import pytest

from src.data_pipeline import BinaryMask, movie_from_array, synth_city, write_mask, write_movie
from src.inference import (
    forecast_window,
    generate_forecast_from_files,
    load_mask_source,
    load_models,
    predict_movie,
    render_frame_comparison,
)
from src.io_schemas.config_schemas import ModelConfig
from src.model import Checkpoint, DualUNet
from src.tensor_core import Tensor
from src.utils.custom_exceptions import ConfigError, ShapeError


@pytest.fixture
def models(tiny_config):
    return load_models([Checkpoint.from_model(DualUNet(tiny_config))])


@pytest.fixture
def city():
    return synth_city(1, 8, 8, 1, city="upload")


def random_movie(rng, frames):
    return movie_from_array(rng.integers(0, 256, size=(frames, 8, 8, 8)).astype(np.uint8), "test")


class TestLoadModels:
    def test_from_paths(self, tiny_config, tmp_path):
        path = Checkpoint.from_model(DualUNet(tiny_config)).save(tmp_path / "a.gckp")
        (model,) = load_models([str(path)])
        assert model.config == tiny_config

    def test_nothing_to_load(self):
        with pytest.raises(ConfigError):
            load_models([])

    def test_members_must_agree_on_frames(self, tiny_config):
        twelve = ModelConfig(encoder_widths=[8, 2, 2], output_frames=12)
        checkpoints = [Checkpoint.from_model(DualUNet(c)) for c in (tiny_config, twelve)]
        with pytest.raises(ConfigError):
            load_models(checkpoints)


class TestPredictMovie:
    def test_windows_and_remainder(self, models, rng):
        prediction = predict_movie(models, random_movie(rng, 30), batch_size=1)
        assert prediction.shape == (12, 8, 8, 8)
        assert prediction.dtype == "u8"

    def test_batching_does_not_change_the_result(self, models, rng):
        movie = random_movie(rng, 36)
        one = predict_movie(models, movie, batch_size=1).data
        assert np.array_equal(one, predict_movie(models, movie, batch_size=3).data)

    def test_mask_is_applied(self, models, rng):
        keep = np.zeros((8, 8), dtype=np.uint8)
        keep[2, 5] = 1
        prediction = predict_movie(models, random_movie(rng, 12), BinaryMask(mask=Tensor(keep)))
        assert np.all(prediction.data[:, keep == 0, :] == 0)

    def test_too_short(self, models, rng):
        with pytest.raises(ShapeError):
            predict_movie(models, random_movie(rng, 11))

    def test_mask_grid_mismatch(self, models, rng):
        mask = BinaryMask(mask=Tensor(np.ones((4, 4), dtype=np.uint8)))
        with pytest.raises(ShapeError):
            predict_movie(models, random_movie(rng, 12), mask)


class TestPreview:
    def test_image_size(self, rng):
        frames = rng.integers(0, 256, size=(2, 8, 6, 8)).astype(np.uint8)
        image = render_frame_comparison(frames[0], frames[1], scale=3)
        assert image.size == ((6 + 1 + 6) * 3, 8 * 3)
        assert image.mode == "L"

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            render_frame_comparison(np.zeros((8, 8, 8), np.uint8), np.zeros((8, 6, 8), np.uint8))

    def test_forecast_window(self, models, city):
        prediction, truth, mse = forecast_window(models, city, window=3)
        assert prediction.shape == truth.shape == (6, 8, 8, 8)
        assert mse >= 0.0

    def test_window_out_of_range(self, models, city):
        with pytest.raises(ConfigError):
            forecast_window(models, city, window=12)


class TestUpload:
    def test_forecast(self, tiny_config, city, tmp_path):
        movie_bytes = write_movie(tmp_path / "upload_2019.gcmv", city).read_bytes()
        checkpoint = Checkpoint.from_model(DualUNet(tiny_config)).to_bytes()
        image, mse = generate_forecast_from_files(movie_bytes, [checkpoint], 0, 20, True)
        assert image.size[1] > 0
        assert float(mse) >= 0.0

    def test_missing_upload(self):
        with pytest.raises(gr.Error):
            generate_forecast_from_files(None, [], 0, 0, True)

    def test_corrupt_movie(self, tiny_config):
        checkpoint = Checkpoint.from_model(DualUNet(tiny_config)).to_bytes()
        with pytest.raises(gr.Error):
            generate_forecast_from_files(b"not a movie", [checkpoint], 0, 0, True)


class TestMaskSource:
    def test_stored_mask(self, tmp_path):
        keep = np.eye(8, dtype=np.uint8)
        path = write_mask(tmp_path / "mask.gcmv", BinaryMask(mask=Tensor(keep)))
        assert np.array_equal(load_mask_source(str(path)).mask.data, keep)

    def test_derived_from_movie(self, city_files):
        mask = load_mask_source(str(city_files()))
        assert mask.source == "test"
        assert mask.shape == (8, 8)
