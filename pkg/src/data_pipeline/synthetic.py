from typing import Literal, Optional

import numpy as np
from loguru import logger

from src.data_pipeline.data_classes import TrafficMovie
from src.tensor_core.tensor import Tensor
from src.utils.constants import (
    CHANNELS,
    COVID_PEAK_FACTOR,
    COVID_VOLUME_FACTOR,
    FRAMES_PER_DAY,
)
from src.utils.custom_exceptions import ConfigError


Profile = Literal["pre", "covid"]

# Heading channel pairs (volume, speed): NE, SE, SW, NW
_EAST_WEST = (0, 4)
_NORTH_SOUTH = (2, 6)


def _road_headings(seed: int, height: int, width: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 0])
    rows = rng.choice(height, size=max(1, height // 6), replace=False)
    cols = rng.choice(width, size=max(1, width // 6), replace=False)
    headings = np.zeros((height, width, CHANNELS // 2), dtype=bool)
    for channel in _EAST_WEST:
        headings[rows, :, channel // 2] = True
    for channel in _NORTH_SOUTH:
        headings[:, cols, channel // 2] = True
    return headings


def road_skeleton(seed: int, height: int, width: int) -> np.ndarray:
    """
    Boolean (H, W) road map: a few full-length horizontal and vertical roads. Depends
    only on the seed and the grid size.
    """
    return _road_headings(seed, height, width).any(axis=-1)


def diurnal_curve(profile: Profile, weekend: bool) -> np.ndarray:
    """Relative demand over the 288 frames of a day, with morning and evening peaks."""
    minutes = np.arange(FRAMES_PER_DAY) * (24 * 60 / FRAMES_PER_DAY)
    hours = minutes / 60.0
    base = 0.25 + 0.35 * np.exp(-0.5 * ((hours - 13.0) / 4.0) ** 2)
    peaks = np.exp(-0.5 * ((hours - 8.0) / 1.2) ** 2) + 0.9 * np.exp(-0.5 * ((hours - 17.5) / 1.5) ** 2)
    if weekend:
        peaks = 0.4 * peaks
    if profile == "covid":
        return COVID_VOLUME_FACTOR * (base + COVID_PEAK_FACTOR * peaks)
    return base + peaks


def synth_city(
    seed: int,
    height: int,
    width: int,
    days: int,
    profile: Profile = "pre",
    city: str = "synth",
    year: Optional[int] = None,
) -> TrafficMovie:
    """
    Generate a deterministic desk-scale traffic movie.

    Roads follow `road_skeleton(seed, H, W)`; every road pixel carries at least one
    vehicle per frame on its headings and off-road pixels stay zero. Volumes follow a
    diurnal curve with rush-hour peaks and weekend damping, speeds drop as load rises.
    The 'covid' profile scales volumes by 0.6 and keeps 40% of the peak amplitude. The
    skeleton and the traffic noise come from separate streams, so both profiles of one
    seed share roads and noise.

    Raises
    ------
    ConfigError
        If H or W is below 8, days is below 1 or the profile is unknown.
    """
    if height < 8 or width < 8:
        raise ConfigError(f"Synthetic cities need H, W >= 8, got {height}x{width}.")
    if days < 1:
        raise ConfigError(f"Synthetic cities need at least one day, got {days}.")
    if profile not in ("pre", "covid"):
        raise ConfigError(f"Unknown year profile '{profile}'. Use 'pre' or 'covid'.")

    headings = _road_headings(seed, height, width)
    rng = np.random.default_rng([seed, 1])
    capacity = rng.uniform(40.0, 140.0, size=headings.shape).astype(np.float32)
    free_speed = rng.uniform(60.0, 200.0, size=headings.shape).astype(np.float32)

    frames = np.zeros((days * FRAMES_PER_DAY, height, width, CHANNELS), dtype=np.uint8)
    for day in range(days):
        curve = diurnal_curve(profile, weekend=day % 7 in (5, 6)).astype(np.float32)
        noise = rng.normal(0.0, 0.08, size=(FRAMES_PER_DAY,) + headings.shape).astype(np.float32)
        load = np.clip(curve[:, None, None, None] * (1.0 + noise), 0.0, None)
        volume = np.clip(np.rint(capacity * load), 1.0, 255.0)
        speed = np.clip(np.rint(free_speed * (1.0 - 0.45 * np.minimum(load, 1.0))), 1.0, 255.0)

        day_frames = np.zeros((FRAMES_PER_DAY, height, width, CHANNELS), dtype=np.float32)
        day_frames[..., 0::2] = np.where(headings, volume, 0.0)
        day_frames[..., 1::2] = np.where(headings, speed, 0.0)
        frames[day * FRAMES_PER_DAY : (day + 1) * FRAMES_PER_DAY] = day_frames.astype(np.uint8)

    year = year if year is not None else (2020 if profile == "covid" else 2019)
    logger.debug(f"Synthesized {city}_{year}: {days} days on a {height}x{width} grid ({profile})")
    return TrafficMovie(city=city, year=year, frames=Tensor(frames))
