from typing import Iterable, Iterator, List, Literal, Optional, Tuple

import numpy as np
from loguru import logger

from src.data_pipeline.data_classes import SamplePair, TrafficMovie
from src.data_pipeline.helpers import normalize
from src.utils.constants import (
    INPUT_FRAMES,
    SIX_FRAME_OFFSETS,
    TWELVE_FRAME_OFFSETS,
    WINDOW_FRAMES,
)
from src.utils.custom_exceptions import ConfigError


Strategy = Literal["nonoverlap", "overlap"]
FrameMode = Literal["six", "twelve"]


def target_offsets(frame_mode: FrameMode) -> Tuple[int, ...]:
    """Target frame offsets counted from the last input frame."""
    if frame_mode == "six":
        return SIX_FRAME_OFFSETS
    if frame_mode == "twelve":
        return TWELVE_FRAME_OFFSETS
    raise ConfigError(f"Unknown frame mode '{frame_mode}'. Use 'six' or 'twelve'.")


def window_starts(frames: int, strategy: Strategy, stride: Optional[int] = None) -> List[int]:
    """
    Start indices of the 24-frame windows of one movie.

    nonoverlap gives floor(T / 24) disjoint windows; overlap(stride) gives
    floor((T - 24) / stride) + 1 windows starting at 0, stride, 2 * stride, ...
    """
    if frames < WINDOW_FRAMES:
        return []
    if strategy == "nonoverlap":
        return list(range(0, frames - WINDOW_FRAMES + 1, WINDOW_FRAMES))
    if strategy == "overlap":
        if stride is None or stride < 1:
            raise ConfigError(f"The overlap strategy needs a stride >= 1, got {stride}.")
        return list(range(0, frames - WINDOW_FRAMES + 1, stride))
    raise ConfigError(f"Unknown sampling strategy '{strategy}'.")


def _day_chunks(movies: Iterable[TrafficMovie]) -> Iterator[Tuple[str, int, np.ndarray]]:
    for movie in movies:
        for day, frames in movie.days():
            if frames.shape[0] < WINDOW_FRAMES:
                logger.warning(
                    f"Skipping {movie.movie_id} day {day}: {frames.shape[0]} frames is shorter "
                    f"than one {WINDOW_FRAMES}-frame window"
                )
                continue
            yield movie.movie_id, day, frames


def extract_samples(
    movies: Iterable[TrafficMovie],
    strategy: Strategy = "nonoverlap",
    stride: Optional[int] = None,
    frame_mode: FrameMode = "six",
) -> Iterator[SamplePair]:
    """
    Stream (input hour, target frames) pairs from each day of each movie.

    Windows never cross day or movie boundaries. Inputs are the first 12 frames of a
    window; targets sit at `target_offsets(frame_mode)` after the last input frame.
    Days shorter than one window are skipped with a warning. Pairs are yielded in a
    deterministic order (movie, day, start).
    """
    offsets = np.array(target_offsets(frame_mode))
    for movie_id, day, frames in _day_chunks(movies):
        for start in window_starts(frames.shape[0], strategy, stride):
            last_input = start + INPUT_FRAMES - 1
            yield SamplePair(
                input=normalize(frames[start : start + INPUT_FRAMES]),
                target=normalize(frames[last_input + offsets]),
                movie_id=movie_id,
                day=day,
                start=start,
            )


def count_samples(
    movies: Iterable[TrafficMovie],
    strategy: Strategy = "nonoverlap",
    stride: Optional[int] = None,
) -> int:
    return sum(
        len(window_starts(frames.shape[0], strategy, stride))
        for _, _, frames in _day_chunks(movies)
    )
