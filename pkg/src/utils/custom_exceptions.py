from typing import Optional


class SystemException(Exception):
    pass


class ShapeError(SystemException):
    pass


class DTypeError(SystemException):
    def __init__(self, expected: str, received: str):
        self.expected = expected
        self.received = received
        super().__init__(f"Tensor dtype mismatch: expected {expected}, got {received}.")


class DegenerateInputError(SystemException):
    pass


class ConfigError(SystemException):
    pass


class MissingGradError(SystemException):
    def __init__(self, parameter_name: str):
        self.parameter_name = parameter_name
        super().__init__(
            f"Parameter '{parameter_name}' has no gradient. Run backward before stepping."
        )


class CheckpointError(SystemException):
    pass


class DivergenceError(SystemException):
    def __init__(self, phase: str, epoch: int, loss: float, last_checkpoint=None):
        self.phase = phase
        self.epoch = epoch
        self.loss = loss
        # Checkpoint taken at the start of the epoch that diverged
        self.last_checkpoint = last_checkpoint
        super().__init__(
            f"Training diverged in phase '{phase}' at epoch {epoch} (loss={loss})."
        )


class IoError(SystemException):
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message} [{path}]" if path else message)


class UnsupportedFileFormatError(IoError):
    def __init__(self, expected_magic: bytes, path: Optional[str] = None):
        super().__init__(
            f"Unsupported file format. Only {expected_magic.decode()} files are supported.",
            path=path,
        )
