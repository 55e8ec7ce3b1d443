"""Base class for trainable networks and the binary checkpoint format.

Checkpoint layout: ``<4sII`` = (b"VBCK", version, json length), the JSON
architecture blob, ``<Q`` parameter count, then all parameters as contiguous
little-endian float32 in :meth:`Model.parameters` order.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .layers import Param

MAGIC = b"VBCK"
VERSION = 1
_HEADER = struct.Struct("<4sII")


class CheckpointError(ValueError):
    pass


class Model:
    registry: dict[str, type] = {}

    def __init_subclass__(cls, **kwargs):
        super().__init_subclass__(**kwargs)
        Model.registry[cls.__name__] = cls

    def architecture(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_architecture(cls, arch: dict) -> "Model":
        raise NotImplementedError

    def parameters(self) -> list[tuple[str, Param]]:
        raise NotImplementedError

    def layer_specs(self) -> list[dict]:
        return []

    def zero_grad(self):
        for _, p in self.parameters():
            p.grad[...] = 0.0

    def n_parameters(self) -> int:
        return sum(p.value.size for _, p in self.parameters())


def to_bytes(model: Model) -> bytes:
    params = model.parameters()
    blob = json.dumps({
        "model": type(model).__name__,
        "architecture": model.architecture(),
        "layers": model.layer_specs(),
        "params": [[name, list(p.shape)] for name, p in params],
    }, sort_keys=True).encode()
    flat = np.concatenate([p.value.ravel() for _, p in params]) if params else np.zeros(0)
    return (_HEADER.pack(MAGIC, VERSION, len(blob)) + blob + struct.pack("<Q", flat.size)
            + flat.astype("<f4").tobytes())


def save_checkpoint(path, model: Model) -> str:
    """Write ``model`` to ``path``; returns the SHA-256 of the file contents."""
    data = to_bytes(model)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def from_bytes(data: bytes) -> Model:
    if len(data) < _HEADER.size:
        raise CheckpointError("truncated checkpoint header")
    magic, version, n_json = _HEADER.unpack_from(data)
    if magic != MAGIC or version != VERSION:
        raise CheckpointError(f"not a version-{VERSION} checkpoint")
    pos = _HEADER.size
    meta = json.loads(data[pos:pos + n_json])
    pos += n_json
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) - pos != 4 * count:
        raise CheckpointError("parameter payload does not match the declared count")
    cls = Model.registry.get(meta["model"])
    if cls is None:
        raise CheckpointError(f"unknown model class {meta['model']!r}")
    model = cls.from_architecture(meta["architecture"])
    flat = np.frombuffer(data, dtype="<f4", offset=pos).astype(np.float64)
    params = model.parameters()
    if [[n, list(p.shape)] for n, p in params] != meta["params"]:
        raise CheckpointError("parameter layout does not match the architecture")
    offset = 0
    for _, p in params:
        p.value[...] = flat[offset: offset + p.value.size].reshape(p.shape)
        offset += p.value.size
    return model


def load_checkpoint(path) -> Model:
    return from_bytes(Path(path).read_bytes())


def snapshot(model: Model) -> Model:
    """Independent copy with float32-rounded parameters, as a checkpoint round-trip would give."""
    return from_bytes(to_bytes(model))
