"""Binary feature store.

Acoustic file: header ``<4sIIIIf`` = (b"VBAF", version, N, M, B, frame_rate), then
row-major float32 matrices MGC (N x M), BAP (N x B), F0 (N), QF0 (N).
Linguistic file: header ``<4sIIIf`` = (b"VBLF", version, N, D, frame_rate), then
an N x D float32 matrix. Each file may have a JSON sidecar ``<name>.json``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .features import AcousticFrameSequence, BandAperiodicity, Cepstra, F0Track

ACOUSTIC_MAGIC = b"VBAF"
LINGUISTIC_MAGIC = b"VBLF"
VERSION = 1
_AC_HEADER = struct.Struct("<4sIIIIf")
_LING_HEADER = struct.Struct("<4sIIIf")


class StoreFormatError(ValueError):
    pass


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_acoustic(path, feats: AcousticFrameSequence, sidecar: dict | None = None) -> None:
    n, m = feats.mgc.frames.shape
    b = feats.bap.frames.shape[1]
    qf0 = feats.qf0 if feats.qf0 is not None else np.zeros(n)
    header = _AC_HEADER.pack(ACOUSTIC_MAGIC, VERSION, n, m, b, feats.f0.frame_rate)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in
                    (feats.mgc.frames, feats.bap.frames, feats.f0.f0, qf0))
    Path(path).write_bytes(header + body)
    if sidecar is not None:
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def read_acoustic(path, warp_alpha: float | None = None) -> AcousticFrameSequence:
    data = Path(path).read_bytes()
    if len(data) < _AC_HEADER.size:
        raise StoreFormatError(f"{path}: truncated header")
    magic, version, n, m, b, rate = _AC_HEADER.unpack_from(data)
    if magic != ACOUSTIC_MAGIC:
        raise StoreFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise StoreFormatError(f"{path}: unsupported version {version}")
    expected = _AC_HEADER.size + 4 * n * (m + b + 2)
    if len(data) != expected:
        raise StoreFormatError(f"{path}: size {len(data)} != expected {expected}")
    flat = np.frombuffer(data, dtype="<f4", offset=_AC_HEADER.size).astype(np.float64)
    mgc = flat[: n * m].reshape(n, m)
    bap = flat[n * m: n * (m + b)].reshape(n, b)
    f0 = flat[n * (m + b): n * (m + b + 1)]
    qf0 = flat[n * (m + b + 1):].astype(np.int64)
    if warp_alpha is None:
        side = sidecar_path(path)
        warp_alpha = 0.0
        if side.exists():
            warp_alpha = float(json.loads(side.read_text()).get("analysis", {}).get("warp_alpha", 0.0))
    return AcousticFrameSequence(Cepstra(mgc, warp_alpha), BandAperiodicity(bap),
                                 F0Track(f0, float(rate)), qf0)


def write_linguistic(path, feats: np.ndarray, frame_rate: float = 200.0) -> None:
    feats = np.atleast_2d(np.asarray(feats))
    n, d = feats.shape
    header = _LING_HEADER.pack(LINGUISTIC_MAGIC, VERSION, n, d, frame_rate)
    Path(path).write_bytes(header + np.ascontiguousarray(feats, dtype="<f4").tobytes())


def read_linguistic(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _LING_HEADER.size:
        raise StoreFormatError(f"{path}: truncated header")
    magic, version, n, d, _ = _LING_HEADER.unpack_from(data)
    if magic != LINGUISTIC_MAGIC or version != VERSION:
        raise StoreFormatError(f"{path}: not a version-{VERSION} linguistic feature file")
    if len(data) != _LING_HEADER.size + 4 * n * d:
        raise StoreFormatError(f"{path}: payload size does not match header")
    return np.frombuffer(data, dtype="<f4", offset=_LING_HEADER.size).astype(np.float64).reshape(n, d)
