"""Shared fixtures: small model configs, synthetic movies on disk and log capture."""

from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest
from loguru import logger

from src.data_pipeline import synth_city, write_movie
from src.io_schemas.config_schemas import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def log_messages() -> List[str]:
    """Messages of every loguru record emitted while the test runs."""
    messages: List[str] = []
    handler_id = logger.add(lambda message: messages.append(message.record["message"]), level="DEBUG")
    yield messages
    logger.remove(handler_id)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Core variant on 8 channels with the narrowest deeper layers."""
    return ModelConfig(encoder_widths=[8, 2, 2], seed=3)


@pytest.fixture
def tiny_f64_config() -> ModelConfig:
    """Three input frames of two channels in f64, for gradient checks and exact identities."""
    return ModelConfig(
        input_frames=3,
        channels=2,
        encoder_widths=[2, 2, 2],
        output_activation="sigmoid",
        dtype="f64",
        seed=5,
    )


@pytest.fixture
def gradcheck_config() -> ModelConfig:
    """Whole-model gradient check: 8 channels on an 8x8 grid, three input frames, f64."""
    return ModelConfig(
        input_frames=3,
        encoder_widths=[8, 2, 2],
        output_activation="sigmoid",
        dtype="f64",
        seed=5,
    )


@pytest.fixture
def city_files(tmp_path) -> Callable[..., Path]:
    """Write a one-day 8x8 synthetic city to `tmp_path` and return its path."""

    def write(city: str = "alpha", seed: int = 0, profile: str = "pre", days: int = 1) -> Path:
        movie = synth_city(seed, 8, 8, days, profile=profile, city=city)
        return write_movie(tmp_path / f"{movie.movie_id}.gcmv", movie)

    return write
