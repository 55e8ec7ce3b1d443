"""Diagnostics: global variance, modulation spectrum, instantaneous frequency, spectral distortion."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dsp import FrameConfig, Waveform, dft_forward, get_window, stft

DB_FLOOR = -120.0


@dataclass
class GvReport:
    per_utterance: list[np.ndarray]
    mean: np.ndarray


def global_variance(features) -> GvReport:
    """Population variance per dimension for each utterance, then the mean over utterances."""
    if isinstance(features, np.ndarray):
        features = [features]
    if len(features) == 0:
        raise ValueError("global variance of an empty set")
    per = []
    for f in features:
        f = np.atleast_2d(np.asarray(f, dtype=np.float64))
        if len(f) == 0:
            raise ValueError("utterance with no frames")
        per.append(f.var(axis=0))
    return GvReport(per, np.mean(per, axis=0))


@dataclass
class ModSpectrumReport:
    dim: int
    freqs: np.ndarray  # Hz, 0 .. frame_rate / 2
    power: np.ndarray
    log_power: np.ndarray  # dB, floored at DB_FLOOR


def modulation_spectrum(features, dim: int = 11, fft_size: int | None = None,
                        frame_rate: float = 200.0, window: str = "hann") -> ModSpectrumReport:
    """Power of the DFT of one mean-removed feature trajectory, zero-padded to ``fft_size``."""
    f = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if not 0 <= dim < f.shape[1]:
        raise IndexError(f"dimension {dim} out of range for {f.shape[1]}-dim features")
    x = f[:, dim]
    if len(x) < 2:
        raise ValueError("modulation spectrum needs at least two frames")
    n = fft_size or 1 << int(np.ceil(np.log2(len(x))))
    if n < len(x):
        raise ValueError(f"fft_size {n} shorter than trajectory ({len(x)})")
    x = (x - x.mean()) * get_window(window, len(x))
    power = np.abs(dft_forward(np.concatenate([x, np.zeros(n - len(x))]))) ** 2
    with np.errstate(divide="ignore"):
        log_power = np.maximum(10.0 * np.log10(power), DB_FLOOR)
    freqs = np.arange(len(power)) * frame_rate / n
    return ModSpectrumReport(dim, freqs, power, log_power)


@dataclass
class IfMap:
    deviation: np.ndarray  # N x F, Hz; first frame is zero
    magnitude: np.ndarray  # N x F


def instantaneous_frequency(wave: Waveform, cfg: FrameConfig, gate: float = 1e-8) -> IfMap:
    """Frame-to-frame phase advance per bin minus the advance of the bin centre, in Hz.

    Bins whose magnitude is below ``gate`` in either frame report zero.
    """
    spec = stft(wave, cfg)
    mag = np.abs(spec)
    dev = np.zeros(spec.shape)
    if len(spec) > 1:
        k = np.arange(spec.shape[1])
        expected = 2 * np.pi * k * cfg.hop / cfg.frame_length
        dphi = np.angle(spec[1:]) - np.angle(spec[:-1]) - expected
        wrapped = np.pi - np.mod(np.pi - dphi, 2 * np.pi)  # (-pi, pi]
        hz = wrapped * wave.sample_rate / (2 * np.pi * cfg.hop)
        ok = (mag[1:] >= gate) & (mag[:-1] >= gate)
        dev[1:] = np.where(ok, hz, 0.0)
    return IfMap(dev, mag)


def if_deviation_std(ifmap: IfMap, frames=None, rel_db: float = -40.0) -> float:
    """Temporal spread of the IF deviation: per-bin std over time, averaged over bins.

    Only strong cells (within ``rel_db`` of their frame's peak) in the selected
    ``frames`` count; bins with fewer than two strong cells are skipped.
    """
    dev, mag = ifmap.deviation[1:], ifmap.magnitude[1:]
    rows = np.ones(len(dev), dtype=bool) if frames is None else np.asarray(frames, dtype=bool)[1:]
    peak = mag.max(axis=1, keepdims=True)
    strong = (mag > peak * 10 ** (rel_db / 20)) & (peak > 0) & rows[:, None]
    stds = [dev[strong[:, k], k].std() for k in range(dev.shape[1]) if strong[:, k].sum() >= 2]
    return float(np.mean(stds)) if stds else 0.0


def log_spectral_distortion(a, b, floor: float = 1e-10) -> float:
    """RMS over all frames and bins of 20 log10(a / b), amplitudes floored at ``floor``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = 20.0 * np.log10(np.maximum(a, floor) / np.maximum(b, floor))
    return float(np.sqrt(np.mean(d * d)))


# ---------------------------------------------------------------------------
# report files


def write_csv(path, header: list[str], rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.9g}" if isinstance(v, float) else v for v in r])
    return path


def write_gv_csv(out_dir, utt_id: str, gv: np.ndarray) -> Path:
    return write_csv(Path(out_dir) / f"{utt_id}.gv.csv", ["dim", "variance"],
                     [(i, float(v)) for i, v in enumerate(gv)])


def write_ms_csv(out_dir, utt_id: str, ms: ModSpectrumReport) -> Path:
    return write_csv(Path(out_dir) / f"{utt_id}.ms.csv", ["bin", "freq_hz", "log_power_db"],
                     [(i, float(f), float(p)) for i, (f, p) in enumerate(zip(ms.freqs, ms.log_power))])


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable))
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o))
