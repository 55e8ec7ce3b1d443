"""Deterministic DSP primitives: framing, FFT, STFT/ISTFT and mu-law companding."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

log = logging.getLogger(__name__)

WINDOWS = ("rectangular", "hann", "hamming")


class SignalTooShortError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("only mono waveforms are supported")
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrameConfig:
    frame_length: int
    hop: int
    window: str = "hann"

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise ConfigError(f"unknown window {self.window!r}; expected one of {WINDOWS}")
        if self.frame_length < 1 or not 0 < self.hop <= self.frame_length:
            raise ConfigError(
                f"need 0 < hop <= frame_length, got hop={self.hop} frame_length={self.frame_length}")

    @property
    def n_bins(self) -> int:
        return self.frame_length // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_length:
            return 0
        return (n_samples - self.frame_length) // self.hop + 1

    def signal_length(self, n_frames: int) -> int:
        """Number of samples spanned by ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.frame_length

    def is_cola(self) -> bool:
        if self.window == "rectangular":
            return True
        return self.hop <= self.frame_length // 2


def get_window(name: str, length: int) -> np.ndarray:
    # periodic windows so that hann overlap-adds to a constant at hop = length/4, length/2
    n = np.arange(length)
    if name == "rectangular":
        return np.ones(length)
    if name == "hann":
        return 0.5 - 0.5 * np.cos(2 * np.pi * n / length)
    if name == "hamming":
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / length)
    raise ConfigError(f"unknown window {name!r}")


def frame_signal(wave, cfg: FrameConfig) -> np.ndarray:
    """Slice ``wave`` into windowed frames of shape (N, frame_length).

    Frames that would run past the end of the signal are dropped; no padding
    is applied.
    """
    x = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    if len(x) < cfg.frame_length:
        raise SignalTooShortError(
            f"signal too short: {len(x)} samples < frame_length {cfg.frame_length}")
    n = cfg.n_frames(len(x))
    idx = np.arange(cfg.frame_length)[None, :] + cfg.hop * np.arange(n)[:, None]
    return x[idx] * get_window(cfg.window, cfg.frame_length)[None, :]


# ---------------------------------------------------------------------------
# FFT: iterative radix-2 for powers of two, Bluestein chirp-z otherwise.
# Operates on the last axis, vectorised over leading axes.


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=64)
def _bitrev(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=64)
def _twiddles(n: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(n // 2) / n)


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    lead = x.shape[:-1]
    a = x[..., _bitrev(n)].astype(np.complex128)
    tw_all = _twiddles(n)
    size = 2
    while size <= n:
        half = size // 2
        a = a.reshape(lead + (n // size, size))
        tw = tw_all[:: n // size][:half]
        even = a[..., :half]
        odd = a[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return a.reshape(lead + (n,))


@lru_cache(maxsize=64)
def _bluestein_plan(n: int):
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp argument small for accuracy
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 1).bit_length()
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1:] = np.conj(chirp[1:])[::-1]
    return chirp, m, _fft_pow2(b)


def fft(x) -> np.ndarray:
    """Complex DFT along the last axis: X[f] = sum_t x[t] exp(-2 pi i f t / T)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0:
        raise ValueError("cannot transform an empty sequence")
    if n == 1:
        return x.astype(np.complex128)
    if _is_pow2(n):
        return _fft_pow2(x)
    chirp, m, fb = _bluestein_plan(n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    conv = ifft_pow2(_fft_pow2(a) * fb)
    return conv[..., :n] * chirp


def ifft_pow2(x: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(x))) / x.shape[-1]


def ifft(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


def dft_forward(frame) -> np.ndarray:
    """One-sided DFT of a real frame (length T -> T//2 + 1 bins)."""
    x = np.asarray(frame, dtype=np.float64)
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def dft_inverse(bins, n: int | None = None) -> np.ndarray:
    """Real inverse of :func:`dft_forward`; ``n`` defaults to 2 * (F - 1)."""
    bins = np.asarray(bins, dtype=np.complex128)
    n_bins = bins.shape[-1]
    if n is None:
        n = 2 * (n_bins - 1)
    if n < 1 or n // 2 + 1 != n_bins:
        raise ValueError(f"{n_bins} one-sided bins do not describe a length-{n} signal")
    full = np.empty(bins.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :n_bins] = bins
    # Hermitian completion; DC and (even n) Nyquist must be real
    full[..., 0] = full[..., 0].real
    if n % 2 == 0:
        full[..., n_bins - 1] = full[..., n_bins - 1].real
        full[..., n_bins:] = np.conj(bins[..., 1:n_bins - 1][..., ::-1])
    else:
        full[..., n_bins:] = np.conj(bins[..., 1:][..., ::-1])
    return ifft(full).real


def power_spectrum(spec) -> np.ndarray:
    """p = a^2 + b^2 for every complex bin."""
    s = np.asarray(spec)
    return s.real ** 2 + s.imag ** 2


# ---------------------------------------------------------------------------


def stft(wave, cfg: FrameConfig) -> np.ndarray:
    """Complex spectrogram of shape (N, F)."""
    return dft_forward(frame_signal(wave, cfg))


def _check_cola(cfg: FrameConfig):
    if not cfg.is_cola():
        raise ConfigError(
            f"{cfg.window} window with hop={cfg.hop} > frame_length/2 is not overlap-add invertible")


def istft(spec, cfg: FrameConfig, sample_rate: int | None = None):
    """Least-squares inverse STFT (weighted overlap-add divided by the window energy sum).

    Returns a :class:`Waveform` when ``sample_rate`` is given, otherwise a raw array.
    Samples that no window covers with nonzero weight come back as zero.
    """
    _check_cola(cfg)
    spec = np.asarray(spec)
    n_frames = spec.shape[0]
    win = get_window(cfg.window, cfg.frame_length)
    frames = dft_inverse(spec, cfg.frame_length) * win[None, :]
    length = cfg.signal_length(n_frames)
    out = np.zeros(length)
    norm = np.zeros(length)
    for i in range(n_frames):
        sl = slice(i * cfg.hop, i * cfg.hop + cfg.frame_length)
        out[sl] += frames[i]
        norm[sl] += win ** 2
    nz = norm > 1e-12
    out[nz] /= norm[nz]
    out[~nz] = 0.0
    if sample_rate is None:
        return out
    return Waveform(out, sample_rate)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantizedWave:
    levels: np.ndarray
    n_levels: int = 1024
    mu: float = 1023.0

    def one_hot(self) -> np.ndarray:
        out = np.zeros((len(self.levels), self.n_levels))
        out[np.arange(len(self.levels)), self.levels] = 1.0
        return out


def mu_law_compress(x, mu: float = 1023.0) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mu_law_expand(y, mu: float = 1023.0) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


def mu_law_encode(wave, n_levels: int = 1024, mu: float | None = None) -> QuantizedWave:
    """Compand to [-1, 1] and quantize uniformly into ``n_levels`` bins.

    Bin ``L/2`` starts at zero, so silence maps to level ``L/2``.
    """
    if mu is None:
        mu = float(n_levels - 1)
    x = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
    n_clip = int(np.count_nonzero(np.abs(x) > 1.0))
    if n_clip:
        log.warning("mu_law_encode: clipping %d samples outside [-1, 1]", n_clip)
        x = np.clip(x, -1.0, 1.0)
    y = mu_law_compress(x, mu)
    levels = np.floor((y + 1.0) * 0.5 * n_levels).astype(np.int64)
    return QuantizedWave(np.clip(levels, 0, n_levels - 1), n_levels, float(mu))


def mu_law_decode(q: QuantizedWave, sample_rate: int | None = None):
    levels = np.asarray(q.levels)
    if levels.size and (levels.min() < 0 or levels.max() >= q.n_levels):
        raise ValueError(f"mu-law level out of range [0, {q.n_levels - 1}]")
    y = (levels + 0.5) * 2.0 / q.n_levels - 1.0
    x = mu_law_expand(y, q.mu)
    if sample_rate is None:
        return x
    return Waveform(x, sample_rate)


def mu_law_bin_edges(n_levels: int = 1024, mu: float | None = None) -> np.ndarray:
    """Linear-domain edges of every quantization bin (length ``n_levels + 1``)."""
    if mu is None:
        mu = float(n_levels - 1)
    return mu_law_expand(np.linspace(-1.0, 1.0, n_levels + 1), mu)


def resample(x: np.ndarray, src_rate: int, dst_rate: int) -> np.ndarray:
    """Rational-ratio polyphase resampling."""
    from math import gcd

    from scipy.signal import resample_poly

    if src_rate == dst_rate:
        return np.asarray(x, dtype=np.float64)
    g = gcd(int(src_rate), int(dst_rate))
    return resample_poly(np.asarray(x, dtype=np.float64), dst_rate // g, src_rate // g)
