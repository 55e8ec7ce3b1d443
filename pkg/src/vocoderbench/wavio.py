"""Strict mono RIFF/WAVE reader and writer (16-bit PCM and 32-bit float)."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import Waveform

PCM = 1
IEEE_FLOAT = 3
EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    pass


def read_wav(path) -> Waveform:
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    samples = None
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8: pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"{path}: truncated {cid.decode(errors='replace')!r} chunk "
                                 f"({len(body)} of {size} bytes)")
        if cid == b"fmt ":
            if size < 16:
                raise WavFormatError(f"{path}: short fmt chunk")
            tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", body)
            if tag == EXTENSIBLE and size >= 26:
                tag = struct.unpack_from("<H", body, 24)[0]
            fmt = (tag, channels, rate, bits)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError(f"{path}: data chunk before fmt chunk")
            samples = body
        pos += 8 + size + (size & 1)
    if fmt is None or samples is None:
        raise WavFormatError(f"{path}: missing fmt or data chunk")
    tag, channels, rate, bits = fmt
    if channels != 1:
        raise WavFormatError(f"{path}: {channels} channels; only mono is supported")
    if tag == PCM and bits == 16:
        x = np.frombuffer(samples, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == IEEE_FLOAT and bits == 32:
        x = np.frombuffer(samples, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported encoding (format {tag}, {bits} bits)")
    return Waveform(x, rate)


def write_wav(path, wave: Waveform, subtype: str = "pcm16") -> None:
    x = np.asarray(wave.samples, dtype=np.float64)
    if subtype == "pcm16":
        tag, bits = PCM, 16
        payload = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
    elif subtype == "float32":
        tag, bits = IEEE_FLOAT, 32
        payload = x.astype("<f4").tobytes()
    else:
        raise ValueError(f"unknown subtype {subtype!r}")
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, wave.sample_rate, wave.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    Path(path).write_bytes(b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks)
