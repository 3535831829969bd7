import re
import struct
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.data_pipeline.data_classes import BinaryMask, TrafficMovie
from src.tensor_core.tensor import Tensor
from src.utils.constants import CHANNELS, FORMAT_VERSION, MOVIE_MAGIC
from src.utils.custom_exceptions import (
    DTypeError,
    IoError,
    ShapeError,
    UnsupportedFileFormatError,
)
from src.utils.serialization import CODE_DTYPES, DTYPE_CODES, NUMPY_DTYPES, dtype_name


# magic, version, T, H, W, C, dtype code
HEADER = struct.Struct("<4sI4IB")
_STEM_PATTERN = re.compile(r"^(?P<city>.+)_(?P<year>\d{4})$")

PathLike = Union[str, Path]


def parse_movie_name(path: PathLike) -> Tuple[str, int]:
    """City and year from a file stem like 'berlin_2019'; year 0 when absent."""
    stem = Path(path).stem
    match = _STEM_PATTERN.match(stem)
    if match is None:
        return stem, 0
    return match.group("city"), int(match.group("year"))


def write_array(path: PathLike, array: np.ndarray) -> Path:
    """
    Write a 4D array as a GCMV file: the 25-byte header followed by the row-major
    little-endian payload.

    Raises
    ------
    ShapeError
        If the array is not 4D.
    IoError
        If the file cannot be written.
    """
    path = Path(path)
    if array.ndim != 4:
        raise ShapeError(f"GCMV stores (T, H, W, C) arrays, got {array.shape}.")
    if array.dtype not in (np.uint8, np.float32, np.float64):
        raise DTypeError(expected="u8, f32 or f64", received=str(array.dtype))
    name = dtype_name(array)
    header = HEADER.pack(MOVIE_MAGIC, FORMAT_VERSION, *array.shape, DTYPE_CODES[name])
    payload = np.ascontiguousarray(array, dtype=NUMPY_DTYPES[name]).tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("wb") as handle:
            handle.write(header)
            handle.write(payload)
    except OSError as e:
        raise IoError(f"Cannot write movie: {e.strerror}", path=str(path))
    return path


def parse_array(buffer: bytes, source: Optional[str] = None) -> np.ndarray:
    """
    Decode the bytes of a GCMV file into a NumPy array.

    Raises
    ------
    UnsupportedFileFormatError
        If the magic bytes, version or dtype code are not recognized.
    IoError
        If the payload is truncated or too long.
    """
    if len(buffer) < HEADER.size or buffer[:4] != MOVIE_MAGIC:
        raise UnsupportedFileFormatError(expected_magic=MOVIE_MAGIC, path=source)

    _, version, t, h, w, c, code = HEADER.unpack_from(buffer)
    if version != FORMAT_VERSION or code not in CODE_DTYPES:
        raise UnsupportedFileFormatError(expected_magic=MOVIE_MAGIC, path=source)
    dtype = NUMPY_DTYPES[CODE_DTYPES[code]]
    expected = t * h * w * c * dtype.itemsize
    payload = buffer[HEADER.size :]
    if len(payload) != expected:
        raise IoError(
            f"Movie payload holds {len(payload)} bytes, header announces {expected}.",
            path=source,
        )
    return np.frombuffer(payload, dtype=dtype).reshape(t, h, w, c).copy()


def read_array(path: PathLike) -> np.ndarray:
    path = Path(path)
    try:
        buffer = path.read_bytes()
    except OSError as e:
        raise IoError(f"Cannot read movie: {e.strerror}", path=str(path))
    return parse_array(buffer, source=str(path))


def movie_from_array(array: np.ndarray, city: str, year: int = 0) -> TrafficMovie:
    if array.dtype != np.uint8:
        raise DTypeError(expected="u8", received=str(array.dtype))
    return TrafficMovie(city=city, year=year, frames=Tensor(array))


def write_movie(path: PathLike, movie: TrafficMovie) -> Path:
    path = write_array(path, movie.frames.data)
    logger.info(f"Wrote movie {movie.movie_id} {movie.shape} to {path}")
    return path


def read_movie(path: PathLike, city: Optional[str] = None, year: Optional[int] = None) -> TrafficMovie:
    parsed_city, parsed_year = parse_movie_name(path)
    return movie_from_array(
        read_array(path), city=city or parsed_city, year=parsed_year if year is None else year
    )


def write_mask(path: PathLike, mask: BinaryMask) -> Path:
    """Masks are stored as GCMV movies with T=1 and C=1."""
    return write_array(path, mask.mask.data.astype(np.uint8)[None, :, :, None])


def read_mask(path: PathLike) -> BinaryMask:
    array = read_array(path)
    if array.shape[0] != 1 or array.shape[3] != 1 or array.dtype != np.uint8:
        raise ShapeError(f"A mask file holds one single-channel u8 frame, got {array.shape}.")
    return BinaryMask(mask=Tensor((array[0, :, :, 0] != 0).astype(np.uint8)))


def import_chunks(directory: PathLike, city: str, year: int = 0) -> TrafficMovie:
    """
    Build a movie from a directory of `.npy` chunks, each a uint8 array of shape
    (T, H, W, 8), concatenated in lexical file-name order.

    Raises
    ------
    IoError
        If the directory holds no chunks or a chunk cannot be loaded.
    ShapeError
        If chunks have the wrong rank, channel count or differing spatial extents.
    DTypeError
        If a chunk is not uint8.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("*.npy"))
    if not paths:
        raise IoError("No .npy chunks found.", path=str(directory))

    chunks = []
    for chunk_path in paths:
        try:
            chunk = np.load(chunk_path, allow_pickle=False)
        except (OSError, ValueError) as e:
            raise IoError(f"Cannot load chunk: {e}", path=str(chunk_path))
        if chunk.ndim != 4 or chunk.shape[-1] != CHANNELS:
            raise ShapeError(f"Chunk {chunk_path.name} must be (T, H, W, {CHANNELS}), got {chunk.shape}.")
        if chunk.dtype != np.uint8:
            raise DTypeError(expected="u8", received=str(chunk.dtype))
        if chunks and chunk.shape[1:] != chunks[0].shape[1:]:
            raise ShapeError(
                f"Chunk {chunk_path.name} has spatial shape {chunk.shape[1:3]}, expected {chunks[0].shape[1:3]}."
            )
        chunks.append(chunk)
    logger.info(f"Imported {len(chunks)} chunks from {directory}")
    return TrafficMovie(city=city, year=year, frames=Tensor(np.concatenate(chunks, axis=0)))
