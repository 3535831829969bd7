from typing import Dict, Optional

import numpy as np
from loguru import logger

from src.tensor_core.tensor import Tensor
from src.utils.custom_exceptions import CheckpointError, MissingGradError
from src.utils.serialization import (
    ByteReader,
    NUMPY_DTYPES,
    array_payload,
    dtype_name,
    pack_json,
)


class Optimizer:
    """
    Base class holding the step counter and per-parameter slots.

    Slots are keyed by parameter name and created lazily on the first update of each
    parameter. All math is per tensor, so the iteration order of `params` never changes
    the result.
    """

    name = "optimizer"
    slot_names: tuple = ()

    def __init__(self, lr: float, clip_norm: Optional[float] = None):
        self.lr = lr
        self.clip_norm = clip_norm
        self.t = 0
        self.slots: Dict[str, Dict[str, np.ndarray]] = {}

    def step(self, params: Dict[str, Tensor]) -> None:
        """
        Apply one update to every parameter in `params` (the trainable set).

        Raises
        ------
        MissingGradError
            If any parameter has no gradient. No parameter is updated in that case.
        """
        for name, tensor in params.items():
            if tensor.grad is None:
                raise MissingGradError(name)

        scale = 1.0
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float(np.sum(t.grad.data.astype(np.float64) ** 2)) for t in params.values()))
            if norm > self.clip_norm:
                scale = self.clip_norm / norm

        self.t += 1
        for name in sorted(params):
            tensor = params[name]
            grad = tensor.grad.data if scale == 1.0 else tensor.grad.data * scale
            slots = self.slots.setdefault(
                name, {slot: np.zeros_like(tensor.data) for slot in self.slot_names}
            )
            tensor.data = self._update(tensor.data, grad.astype(tensor.data.dtype, copy=False), slots)

    def _update(self, w: np.ndarray, g: np.ndarray, slots: Dict[str, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    # STATE

    def serialize(self) -> bytes:
        """Step counter and slots as a JSON header followed by raw little-endian payloads."""
        entries = []
        payloads = []
        for param in sorted(self.slots):
            for slot in self.slot_names:
                array = self.slots[param][slot]
                entries.append(
                    {"param": param, "slot": slot, "shape": list(array.shape), "dtype": dtype_name(array)}
                )
                payloads.append(array_payload(array))
        header = {"optimizer": self.name, "t": self.t, "slots": entries}
        return pack_json(header) + b"".join(payloads)

    def restore(self, blob: bytes, params: Dict[str, Tensor]) -> None:
        """
        Load the step counter and slots written by `serialize`. Hyperparameters keep
        the values this optimizer was constructed with.

        Raises
        ------
        CheckpointError
            If the blob belongs to another optimizer, or a slot refers to a parameter that
            does not exist in `params` or has a different shape.
        """
        reader = ByteReader(blob)
        header = reader.read_json()
        if header.get("optimizer") != self.name:
            raise CheckpointError(
                f"Optimizer state was written by '{header.get('optimizer')}', not '{self.name}'."
            )
        slots: Dict[str, Dict[str, np.ndarray]] = {}
        for entry in header["slots"]:
            param, shape = entry["param"], tuple(entry["shape"])
            if param not in params:
                raise CheckpointError(f"Optimizer state refers to unknown parameter '{param}'.")
            if params[param].shape != shape:
                raise CheckpointError(
                    f"Optimizer slot for '{param}' has shape {shape}, parameter has {params[param].shape}."
                )
            if entry["dtype"] not in NUMPY_DTYPES or entry["slot"] not in self.slot_names:
                raise CheckpointError(f"Invalid optimizer slot entry {entry}.")
            slots.setdefault(param, {})[entry["slot"]] = reader.read_array(shape, entry["dtype"])
        if not reader.at_end():
            raise CheckpointError("Trailing bytes in optimizer state.")
        self.t = int(header["t"])
        self.slots = slots
        logger.debug(f"Restored {self.name} state at step {self.t} for {len(slots)} parameters")


class SGD(Optimizer):
    """w <- w - lr * (g + momentum * v) with the velocity v accumulating gradients."""

    name = "sgd"

    def __init__(self, lr: float, momentum: float = 0.0, clip_norm: Optional[float] = None):
        super().__init__(lr, clip_norm)
        self.momentum = momentum
        self.slot_names = ("velocity",) if momentum > 0.0 else ()

    def _update(self, w, g, slots):
        if self.momentum > 0.0:
            slots["velocity"] = self.momentum * slots["velocity"] + g
            g = slots["velocity"]
        return w - self.lr * g


class Adam(Optimizer):
    name = "adam"
    slot_names = ("m", "v")

    def __init__(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        clip_norm: Optional[float] = None,
    ):
        super().__init__(lr, clip_norm)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def _moments(self, g, slots):
        slots["m"] = self.beta1 * slots["m"] + (1.0 - self.beta1) * g
        slots["v"] = self.beta2 * slots["v"] + (1.0 - self.beta2) * (g * g)
        m_hat = slots["m"] / (1.0 - self.beta1**self.t)
        v_hat = slots["v"] / (1.0 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)

    def _update(self, w, g, slots):
        return w - self.lr * self._moments(g, slots)


class AdamW(Adam):
    """Adam with decoupled weight decay, applied before the adaptive step."""

    name = "adamw"

    def __init__(self, lr: float, weight_decay: float = 0.01, **kwargs):
        super().__init__(lr, **kwargs)
        self.weight_decay = weight_decay

    def _update(self, w, g, slots):
        w = w - self.lr * self.weight_decay * w
        return w - self.lr * self._moments(g, slots)


class LAMB(Adam):
    """
    Layer-wise adaptive moments. The Adam direction plus weight decay is rescaled per
    tensor by the trust ratio ||w|| / ||r||, taken as 1 when either norm is zero.
    """

    name = "lamb"

    def __init__(self, lr: float, weight_decay: float = 0.01, eps: float = 1e-6, **kwargs):
        super().__init__(lr, eps=eps, **kwargs)
        self.weight_decay = weight_decay

    @staticmethod
    def trust_ratio(w: np.ndarray, r: np.ndarray) -> float:
        w_norm = float(np.linalg.norm(w))
        r_norm = float(np.linalg.norm(r))
        if w_norm == 0.0 or r_norm == 0.0:
            return 1.0
        return w_norm / r_norm

    def _update(self, w, g, slots):
        r = self._moments(g, slots) + self.weight_decay * w
        return w - self.lr * self.trust_ratio(w, r) * r
