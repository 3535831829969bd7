import hashlib
import struct
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.io_schemas.output_schemas import CheckpointMetadata
from src.model.controller import DualUNet
from src.utils.constants import CHECKPOINT_MAGIC, FORMAT_VERSION
from src.utils.custom_exceptions import CheckpointError, ConfigError, IoError
from src.utils.serialization import (
    ByteReader,
    array_payload,
    pack_array_header,
    pack_blob,
    pack_json,
    pack_str,
)


class Checkpoint(BaseModel):
    """
    Serialized model parameters, optimizer state and training-phase metadata.

    Binary layout (little-endian): magic "GCKP", u32 version, u32 entry count, one
    manifest entry per tensor (u16-prefixed group name, u16-prefixed tensor name, u8
    ndim, u32 dims, u8 dtype code), the raw tensor payloads in manifest order, the
    u64-prefixed optimizer blob (empty when absent) and the u32-prefixed JSON metadata.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    metadata: CheckpointMetadata
    parameters: Dict[str, np.ndarray]
    optimizer_state: bytes = Field(default=b"")

    @classmethod
    def from_model(
        cls, model: DualUNet, optimizer_state: bytes = b"", **metadata
    ) -> "Checkpoint":
        metadata.setdefault("frozen_groups", sorted(model.frozen))
        return cls(
            metadata=CheckpointMetadata(model=model.config, **metadata),
            parameters={
                name: tensor.data.copy() for name, tensor in model.named_parameters().items()
            },
            optimizer_state=optimizer_state,
        )

    def load_into(self, model: DualUNet) -> DualUNet:
        """
        Copy the stored arrays into `model`, whose parameter names and shapes must match.

        Raises
        ------
        CheckpointError
            If a parameter is missing, unexpected or has a different shape or dtype.
        """
        named = model.named_parameters()
        if set(named) != set(self.parameters):
            missing = sorted(set(named) - set(self.parameters))
            unexpected = sorted(set(self.parameters) - set(named))
            raise CheckpointError(
                f"Checkpoint does not fit the model. Missing: {missing[:3]}, unexpected: {unexpected[:3]}."
            )
        for name, tensor in named.items():
            stored = self.parameters[name]
            if stored.shape != tensor.shape or stored.dtype != tensor.data.dtype:
                raise CheckpointError(
                    f"Parameter '{name}' is {stored.dtype}{stored.shape} in the checkpoint "
                    f"but {tensor.data.dtype}{tensor.shape} in the model."
                )
            tensor.data = stored.copy()
            tensor.zero_grad()
        model.frozen = set(self.metadata.frozen_groups)
        return model

    def build_model(self) -> DualUNet:
        return self.load_into(DualUNet(self.metadata.model))

    def clone(self) -> "Checkpoint":
        return Checkpoint(
            metadata=self.metadata.model_copy(deep=True),
            parameters={name: array.copy() for name, array in self.parameters.items()},
            optimizer_state=bytes(self.optimizer_state),
        )

    # ENCODING

    def to_bytes(self) -> bytes:
        chunks = [CHECKPOINT_MAGIC, struct.pack("<I", FORMAT_VERSION)]
        chunks.append(struct.pack("<I", len(self.parameters)))
        for name, array in self.parameters.items():
            chunks.append(pack_str(name.split(".")[0]))
            chunks.append(pack_str(name))
            chunks.append(pack_array_header(array))
        chunks.extend(array_payload(array) for array in self.parameters.values())
        chunks.append(pack_blob(self.optimizer_state))
        chunks.append(pack_json(self.metadata.model_dump(mode="json")))
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, buffer: bytes) -> "Checkpoint":
        reader = ByteReader(buffer)
        if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise CheckpointError("Not a checkpoint file (bad magic).")
        (version,) = reader.unpack("<I")
        if version != FORMAT_VERSION:
            raise CheckpointError(f"Unsupported checkpoint version {version}.")

        (count,) = reader.unpack("<I")
        manifest = []
        for _ in range(count):
            group, name = reader.read_str(), reader.read_str()
            if name.split(".")[0] != group:
                raise CheckpointError(f"Tensor '{name}' is filed under group '{group}'.")
            manifest.append((name, *reader.read_array_header()))
        parameters = {name: reader.read_array(shape, dtype) for name, shape, dtype in manifest}
        optimizer_state = reader.read_blob()
        try:
            metadata = CheckpointMetadata.model_validate(reader.read_json())
        except (ValueError, ConfigError) as e:
            raise CheckpointError(f"Invalid checkpoint metadata: {e}")
        if not reader.at_end():
            raise CheckpointError("Trailing bytes after the metadata block.")
        return cls(metadata=metadata, parameters=parameters, optimizer_state=optimizer_state)

    def digest(self, group: Optional[str] = None) -> str:
        """SHA-256 over the parameter payloads, optionally restricted to one group."""
        sha = hashlib.sha256()
        for name, array in self.parameters.items():
            if group is None or name.split(".")[0] == group:
                sha.update(name.encode("utf-8"))
                sha.update(np.ascontiguousarray(array).tobytes())
        return sha.hexdigest()

    # FILES

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.to_bytes())
        except OSError as e:
            raise IoError(f"Cannot write checkpoint: {e.strerror}", path=str(path))
        logger.info(f"Saved {self.metadata.phase} checkpoint to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Checkpoint":
        path = Path(path)
        try:
            buffer = path.read_bytes()
        except OSError as e:
            raise IoError(f"Cannot read checkpoint: {e.strerror}", path=str(path))
        try:
            return cls.from_bytes(buffer)
        except CheckpointError as e:
            raise CheckpointError(f"{e} [{path}]")
