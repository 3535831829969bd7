import json
import struct
from typing import Dict, Tuple

import numpy as np

from src.utils.custom_exceptions import CheckpointError


DTYPE_CODES: Dict[str, int] = {"u8": 0, "f32": 1, "f64": 2}
CODE_DTYPES: Dict[int, str] = {code: name for name, code in DTYPE_CODES.items()}
NUMPY_DTYPES: Dict[str, np.dtype] = {
    "u8": np.dtype("<u1"),
    "f32": np.dtype("<f4"),
    "f64": np.dtype("<f8"),
}


def dtype_name(array: np.ndarray) -> str:
    for name, dtype in NUMPY_DTYPES.items():
        if array.dtype == dtype:
            return name
    raise CheckpointError(f"Unsupported array dtype {array.dtype}.")


def pack_str(text: str) -> bytes:
    encoded = text.encode("utf-8")
    return struct.pack("<H", len(encoded)) + encoded


def pack_blob(blob: bytes) -> bytes:
    return struct.pack("<Q", len(blob)) + blob


def pack_json(payload: dict) -> bytes:
    encoded = json.dumps(payload, sort_keys=True).encode("utf-8")
    return struct.pack("<I", len(encoded)) + encoded


def pack_array_header(array: np.ndarray) -> bytes:
    header = struct.pack("<B", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    header += struct.pack("<B", DTYPE_CODES[dtype_name(array)])
    return header


def array_payload(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype=NUMPY_DTYPES[dtype_name(array)]).tobytes()


class ByteReader:
    """
    Sequential reader over an in-memory byte buffer. Every read past the end of the
    buffer raises a CheckpointError so truncated files never decode silently.
    """

    def __init__(self, buffer: bytes):
        self.buffer = buffer
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.buffer):
            raise CheckpointError("Unexpected end of data while decoding.")
        chunk = self.buffer[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_str(self) -> str:
        (length,) = self.unpack("<H")
        raw = self.take(length)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointError(f"Corrupted name at byte {self.offset - length}: {e.reason}")

    def read_blob(self) -> bytes:
        (length,) = self.unpack("<Q")
        return self.take(length)

    def read_json(self) -> dict:
        (length,) = self.unpack("<I")
        try:
            return json.loads(self.take(length).decode("utf-8"))
        except ValueError as e:
            raise CheckpointError(f"Corrupted metadata block: {e}")

    def read_array_header(self) -> Tuple[Tuple[int, ...], str]:
        (ndim,) = self.unpack("<B")
        shape = self.unpack(f"<{ndim}I") if ndim else ()
        (code,) = self.unpack("<B")
        if code not in CODE_DTYPES:
            raise CheckpointError(f"Unknown dtype code {code}.")
        return tuple(shape), CODE_DTYPES[code]

    def read_array(self, shape: Tuple[int, ...], dtype: str) -> np.ndarray:
        dtype_np = NUMPY_DTYPES[dtype]
        size = int(np.prod(shape, dtype=np.int64)) * dtype_np.itemsize
        return np.frombuffer(self.take(size), dtype=dtype_np).reshape(shape).copy()

    def at_end(self) -> bool:
        return self.offset == len(self.buffer)
