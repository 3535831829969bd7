from typing import List, Optional, Sequence, Tuple, Union

import gradio as gr
import numpy as np
from loguru import logger
from PIL import Image

from src.data_pipeline import (
    BinaryMask,
    TrafficMovie,
    denormalize,
    derive_mask,
    extract_samples,
    movie_from_array,
    normalize,
    parse_array,
    read_array,
    read_mask,
    score,
)
from src.model import Checkpoint, DualUNet
from src.tensor_core.tensor import Tensor
from src.trainer import ensemble_predict
from src.utils.constants import DEFAULT_BATCH_SIZE, DURATION_OF_ERROR_MESSAGE, PREVIEW_SCALE
from src.utils.custom_exceptions import ConfigError, ShapeError, SystemException


def load_models(checkpoints: Sequence[Union[str, Checkpoint]]) -> List[DualUNet]:
    """
    Build one eval-ready model per checkpoint path (or already loaded checkpoint).

    Raises
    ------
    ConfigError
        If no checkpoint is given or the models disagree on their input/output frames.
    """
    if not checkpoints:
        raise ConfigError("At least one checkpoint is needed for prediction.")
    models = [
        (item if isinstance(item, Checkpoint) else Checkpoint.load(item)).build_model()
        for item in checkpoints
    ]
    frames = {(m.config.input_frames, m.config.output_frames, m.config.channels) for m in models}
    if len(frames) != 1:
        raise ConfigError(f"Ensemble members disagree on (input, output, channel) counts: {sorted(frames)}.")
    logger.info(f"Loaded {len(models)} model(s) for prediction")
    return models


def predict_movie(
    models: Sequence[DualUNet],
    movie: TrafficMovie,
    mask: Optional[BinaryMask] = None,
    jobs: int = 1,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> Tensor:
    """
    Predict a test movie window by window.

    The movie is cut into consecutive non-overlapping input windows of T_in frames; a
    trailing remainder shorter than T_in is ignored. Each window yields T_out predicted
    frames, so the result holds `n_windows * T_out` frames.

    Parameters
    ----------
    models : sequence of DualUNet
        One model, or several whose mean prediction is used.
    movie : TrafficMovie
        Test movie in uint8.
    mask : BinaryMask, optional
        Road mask applied to every predicted frame.
    jobs : int
        Ensemble members evaluated in parallel.
    batch_size : int
        Windows predicted per forward pass.

    Raises
    ------
    ShapeError
        If the movie is shorter than one input window or does not match the mask.

    Returns
    -------
    Tensor
        uint8 predictions of shape (n_windows * T_out, H, W, C).
    """
    config = models[0].config
    frames = movie.frames.data
    windows = frames.shape[0] // config.input_frames
    if windows == 0:
        raise ShapeError(
            f"Input movie has {frames.shape[0]} frames; at least {config.input_frames} are needed."
        )
    if mask is not None and mask.shape != frames.shape[1:3]:
        raise ShapeError(f"Mask {mask.shape} does not match movie grid {frames.shape[1:3]}.")

    inputs = normalize(frames[: windows * config.input_frames]).data.reshape(
        (windows, config.input_frames) + frames.shape[1:]
    )
    predictions = []
    for offset in range(0, windows, batch_size):
        batch = Tensor(inputs[offset : offset + batch_size])
        predictions.append(ensemble_predict(models, batch, mask=mask, jobs=jobs).data)
    stacked = np.concatenate(predictions, axis=0)
    logger.info(f"Predicted {windows} window(s) of {movie.movie_id}")
    return Tensor(stacked.reshape((-1,) + stacked.shape[2:]))


def _preview(frame: np.ndarray) -> np.ndarray:
    # Sum of the four volume channels as a grey level
    volume = frame[..., 0::2].astype(np.float64).sum(axis=-1)
    return np.clip(volume, 0, 255).astype(np.uint8)


def render_frame_comparison(prediction: np.ndarray, truth: np.ndarray, scale: int = PREVIEW_SCALE) -> Image.Image:
    """Side-by-side grey-level image of predicted (left) and true (right) traffic volume."""
    if prediction.shape != truth.shape or prediction.ndim != 3:
        raise ShapeError(f"Cannot compare frames {prediction.shape} and {truth.shape}.")
    gap = np.full((prediction.shape[0], 1), 255, dtype=np.uint8)
    canvas = np.concatenate([_preview(prediction), gap, _preview(truth)], axis=1)
    image = Image.fromarray(canvas)
    return image.resize((canvas.shape[1] * scale, canvas.shape[0] * scale), Image.Resampling.NEAREST)


def forecast_window(
    models: Sequence[DualUNet],
    movie: TrafficMovie,
    window: int,
    use_mask: bool = True,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Predict one non-overlapping sampling window of `movie` and score it against its targets."""
    config = models[0].config
    frame_mode = "six" if config.output_frames == 6 else "twelve"
    samples = list(extract_samples([movie], strategy="nonoverlap", frame_mode=frame_mode))
    if not 0 <= window < len(samples):
        raise ConfigError(f"Window {window} is out of range; the movie has {len(samples)} windows.")
    sample = samples[window]
    mask = derive_mask(movie.frames) if use_mask else None
    prediction = ensemble_predict(models, sample.input, mask=mask).data
    truth = denormalize(sample.target).data
    return prediction, truth, score(prediction, truth)


def generate_forecast_from_files(
    movie_file: bytes, checkpoint_files: List[bytes], window: float, frame: float, use_mask: bool
) -> Tuple[Image.Image, str]:
    try:
        if not movie_file or not checkpoint_files:
            raise ConfigError("Upload a movie and at least one checkpoint.")
        movie = movie_from_array(parse_array(movie_file, source="upload"), city="upload")
        models = load_models([Checkpoint.from_bytes(blob) for blob in checkpoint_files])

        prediction, truth, mse = forecast_window(models, movie, int(window), use_mask)
        frame = min(int(frame), prediction.shape[0] - 1)
        image = render_frame_comparison(prediction[frame], truth[frame])
        return image, f"{mse:.4f}"

    except SystemException as e:
        logger.error(f"Forecast failed: {e}")
        raise gr.Error(message=str(e), duration=DURATION_OF_ERROR_MESSAGE)


def load_mask_source(path: str, origin: str = "test") -> BinaryMask:
    """A stored mask file (T=1, C=1) is used as is; any other movie has its mask derived."""
    array = read_array(path)
    if array.shape[0] == 1 and array.shape[3] == 1:
        return read_mask(path)
    return derive_mask(movie_from_array(array, city="mask").frames, source=origin)
