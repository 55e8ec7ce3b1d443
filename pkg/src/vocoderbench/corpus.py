"""Dataset manifest and a synthetic desk-scale corpus.

The toy corpus strings together "phones", each with its own formant pair and
voicing. Voiced phones are a pulse train (F0 following a declining contour
with AR(1) jitter) through two resonators; unvoiced phones are filtered noise.
Linguistic features per frame are one-hot codes for the current, previous and
next phone plus position features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .dsp import Waveform
from .store import write_linguistic
from .wavio import write_wav

SPLITS = ("train", "validation", "test")


@dataclass
class Utterance:
    id: str
    wav: Path
    linguistic: Path
    split: str = "train"


class ManifestError(ValueError):
    pass


@dataclass
class DatasetManifest:
    utterances: list[Utterance]
    path: Path | None = None

    @classmethod
    def load(cls, path, check_files: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        base = path.parent
        utts, seen = [], set()
        for entry in raw["utterances"]:
            uid = entry["id"]
            if uid in seen:
                raise ManifestError(f"duplicate utterance id {uid!r}")
            seen.add(uid)
            split = entry.get("split", "train")
            if split not in SPLITS:
                raise ManifestError(f"{uid}: unknown split {split!r}")
            u = Utterance(uid, base / entry["wav"], base / entry["linguistic"], split)
            if check_files:
                for p in (u.wav, u.linguistic):
                    if not p.exists():
                        raise ManifestError(f"{uid}: missing file {p}")
            utts.append(u)
        return cls(utts, path)

    def save(self, path) -> None:
        path = Path(path)
        base = path.parent.resolve()
        rows = [{"id": u.id, "wav": str(Path(u.wav).resolve().relative_to(base)),
                 "linguistic": str(Path(u.linguistic).resolve().relative_to(base)), "split": u.split}
                for u in self.utterances]
        path.write_text(json.dumps({"utterances": rows}, indent=2))

    def split(self, name: str) -> list[Utterance]:
        return [u for u in self.utterances if u.split == name]

    def by_id(self, uid: str) -> Utterance:
        for u in self.utterances:
            if u.id == uid:
                return u
        raise KeyError(uid)


# ---------------------------------------------------------------------------
# synthetic corpus

# (F1, F2, voiced)
PHONES = [(700, 1200, True), (300, 2300, True), (500, 900, True), (400, 1900, True),
          (600, 1600, True), (350, 800, True), (2500, 4500, False), (1800, 3500, False)]


def linguistic_dim(n_phones: int = len(PHONES)) -> int:
    return 3 * n_phones + 3


def _resonator(x, fc, bw, sr):
    r = np.exp(-np.pi * bw / sr)
    return lfilter([1 - r], [1, -2 * r * np.cos(2 * np.pi * fc / sr), r * r], x)


def _render(segments, sr, rng, f0_base):
    """Waveform of a phone sequence; each segment is (phone index, n_samples)."""
    total = sum(n for _, n in segments)
    t = np.arange(total) / sr
    f0 = f0_base * (1.0 - 0.15 * t / max(t[-1], 1e-9))
    jitter = lfilter([1.0], [1.0, -0.999], rng.standard_normal(total) * 0.002)
    f0 = f0 * (1.0 + jitter)
    out = np.zeros(total)
    pos, phase = 0, 0.0
    for ph, n in segments:
        f1, f2, voiced = PHONES[ph]
        if voiced:
            exc = np.zeros(n)
            for i in range(n):
                phase += f0[pos + i] / sr
                if phase >= 1.0:
                    phase -= 1.0
                    exc[i] = np.sqrt(sr / f0[pos + i])
            exc += 0.05 * rng.standard_normal(n)
        else:
            exc = 0.5 * rng.standard_normal(n)
        y = _resonator(exc, f1, 80 + 0.05 * f1, sr) + 0.5 * _resonator(exc, f2, 100 + 0.05 * f2, sr)
        ramp = np.minimum(1.0, np.minimum(np.arange(n) + 1, n - np.arange(n)) / (0.01 * sr))
        out[pos:pos + n] = y * ramp
        pos += n
    return out / (np.abs(out).max() + 1e-12) * 0.5


def toy_linguistic(segments, n_frames: int, hop: int, frame_length: int,
                   sample_rate: int = 16000) -> np.ndarray:
    """Per-frame one-hots of (current, previous, next) phone plus position-in-phone,
    position-in-utterance and phone duration, sampled at the analysis frame centres."""
    n_ph = len(PHONES)
    bounds = np.cumsum([0] + [n for _, n in segments])
    total = bounds[-1]
    feats = np.zeros((n_frames, linguistic_dim(n_ph)))
    centers = np.arange(n_frames) * hop + frame_length // 2
    for i, c in enumerate(centers):
        k = int(np.clip(np.searchsorted(bounds, c, side="right") - 1, 0, len(segments) - 1))
        ph, n = segments[k]
        feats[i, ph] = 1.0
        if k > 0:
            feats[i, n_ph + segments[k - 1][0]] = 1.0
        if k + 1 < len(segments):
            feats[i, 2 * n_ph + segments[k + 1][0]] = 1.0
        feats[i, 3 * n_ph] = (c - bounds[k]) / n
        feats[i, 3 * n_ph + 1] = c / total
        feats[i, 3 * n_ph + 2] = n / sample_rate
    return feats


def make_toy_corpus(out_dir, n_utterances: int = 10, seconds: float = 1.0, sample_rate: int = 16000,
                    frame_length: int = 512, frame_rate: float = 200.0, seed: int = 0,
                    splits=(8, 1, 1)) -> DatasetManifest:
    """Write WAVs, linguistic feature files and manifest.json under ``out_dir``."""
    out_dir = Path(out_dir)
    (out_dir / "wav").mkdir(parents=True, exist_ok=True)
    (out_dir / "lab").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hop = int(round(sample_rate / frame_rate))
    total = int(seconds * sample_rate)
    split_names = ["train"] * splits[0] + ["validation"] * splits[1] + ["test"] * splits[2]
    split_names += ["train"] * (n_utterances - len(split_names))
    utts = []
    for u in range(n_utterances):
        segments, used = [], 0
        while used < total:
            n = min(int(rng.integers(int(0.06 * sample_rate), int(0.2 * sample_rate))), total - used)
            segments.append((int(rng.integers(len(PHONES))), n))
            used += n
        wave = _render(segments, sample_rate, rng, f0_base=float(rng.uniform(100, 160)))
        uid = f"toy{u:03d}"
        wav_path = out_dir / "wav" / f"{uid}.wav"
        lab_path = out_dir / "lab" / f"{uid}.vblf"
        write_wav(wav_path, Waveform(wave, sample_rate), subtype="float32")
        n_frames = (total - frame_length) // hop + 1
        write_linguistic(lab_path, toy_linguistic(segments, n_frames, hop, frame_length, sample_rate), frame_rate)
        utts.append(Utterance(uid, wav_path, lab_path, split_names[u]))
    manifest = DatasetManifest(utts, out_dir / "manifest.json")
    manifest.save(out_dir / "manifest.json")
    return manifest
