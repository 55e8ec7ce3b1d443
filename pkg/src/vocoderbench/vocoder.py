"""Source-filter synthesis with mixed excitation, and Griffin-Lim phase recovery."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dsp import ConfigError, FrameConfig, Waveform, dft_forward, dft_inverse, get_window, istft, stft
from .features import (BandAperiodicity, Cepstra, F0Track, band_index, cepstra_to_amplitude,
                       minimum_phase_spectrum)

log = logging.getLogger(__name__)

INIT_PHASES = ("zero", "random", "minimum", "existing")


@dataclass(frozen=True)
class SynthesisConfig:
    sample_rate: int = 16000
    hop: int = 80
    frame_length: int = 512
    noise_seed: int = 0

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(self.frame_length, self.hop, "hann")

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop


def synthesis_window(length: int) -> np.ndarray:
    """Hann offset by half a sample so no tap is exactly zero."""
    return np.sin(np.pi * (np.arange(length) + 0.5) / length) ** 2


def _frame_weights(n_frames: int, cfg: SynthesisConfig) -> np.ndarray:
    """Per-frame windows divided by their overlap sum: they add to exactly 1 at every sample."""
    w = synthesis_window(cfg.frame_length)
    total = np.zeros(cfg.frame.signal_length(n_frames))
    for i in range(n_frames):
        total[i * cfg.hop: i * cfg.hop + cfg.frame_length] += w
    idx = np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.frame_length)[None, :]
    return w[None, :] / total[idx], idx


def pulse_train(f0: F0Track, cfg: SynthesisConfig) -> np.ndarray:
    """Unit-power pulses (height sqrt(period)) from a fractional phase accumulator.

    Each sample takes the F0 of the frame whose centre is nearest; the phase
    keeps running through unvoiced stretches so voiced segments join smoothly.
    """
    n_frames = len(f0)
    length = cfg.frame.signal_length(n_frames)
    frame_of = np.clip(np.round((np.arange(length) - cfg.frame_length // 2) / cfg.hop), 0,
                       n_frames - 1).astype(int)
    f = f0.f0[frame_of]
    out = np.zeros(length)
    phase = 0.0
    for t in range(length):
        if f[t] <= 0:
            continue
        phase += f[t] / cfg.sample_rate
        if phase >= 1.0:
            phase -= np.floor(phase)
            out[t] = np.sqrt(cfg.sample_rate / f[t])
    return out


def _excitation_frames(f0: F0Track, bap: BandAperiodicity, cfg: SynthesisConfig):
    """Spectra (2W-point) of the windowed, band-mixed excitation for every frame."""
    n_frames = len(f0)
    if len(bap) != n_frames:
        raise ValueError(f"F0 ({n_frames}) and BAP ({len(bap)}) frame counts differ")
    w, idx = _frame_weights(n_frames, cfg)
    length = cfg.frame.signal_length(n_frames)
    noise = np.random.default_rng(cfg.noise_seed).standard_normal(length)
    pulses = pulse_train(f0, cfg)
    n_fft = 2 * cfg.frame_length
    pad = np.zeros((n_frames, n_fft - cfg.frame_length))
    P = dft_forward(np.concatenate([pulses[idx] * w, pad], axis=1))
    N = dft_forward(np.concatenate([noise[idx] * w, pad], axis=1))
    n_bins = n_fft // 2 + 1
    b = np.clip(bap.frames[:, band_index(n_bins, bap.frames.shape[1])], 0.0, 1.0)
    voiced = (f0.f0 > 0)[:, None]
    b = np.where(voiced, b, 1.0)
    return np.sqrt(1.0 - b) * P + np.sqrt(b) * N, idx


def _overlap_add(frames: np.ndarray, idx: np.ndarray, length: int) -> np.ndarray:
    """Add 2W-long frames starting at each frame's first sample; the tail past ``length`` is cut."""
    out = np.zeros(length + frames.shape[1])
    for i in range(len(frames)):
        s = idx[i, 0]
        out[s:s + frames.shape[1]] += frames[i]
    return out[:length]


def mixed_excitation(f0: F0Track, bap: BandAperiodicity, cfg: SynthesisConfig = SynthesisConfig()) -> Waveform:
    """Per-band blend sqrt(1-bap) * pulses + sqrt(bap) * noise; unvoiced frames are all noise."""
    X, idx = _excitation_frames(f0, bap, cfg)
    frames = dft_inverse(X, 2 * cfg.frame_length)
    return Waveform(_overlap_add(frames, idx, cfg.frame.signal_length(len(f0))), cfg.sample_rate)


def analysis_gain(frame_length: int) -> float:
    """Envelope level the cepstral analysis reports for unit-power white noise.

    A hann-windowed DFT bin of such noise has RMS magnitude sqrt(sum w^2), and
    its log magnitude averages ln of that minus euler_gamma / 2 (Rayleigh
    amplitude), which is what the cepstrum's zeroth coefficient tracks.
    """
    w = get_window("hann", frame_length)
    return float(np.sqrt(np.sum(w * w)) * np.exp(-0.5 * np.euler_gamma))


def source_filter_synthesize(mgc: Cepstra, f0: F0Track, bap: BandAperiodicity,
                             cfg: SynthesisConfig = SynthesisConfig()) -> Waveform:
    """Filter the mixed excitation frame by frame with the minimum-phase spectral envelope.

    The envelope is divided by ``analysis_gain`` so that re-analysing the
    output reproduces the input envelope level.
    """
    if not (len(mgc) == len(f0) == len(bap)):
        raise ValueError("MGC, F0 and BAP frame counts differ")
    X, idx = _excitation_frames(f0, bap, cfg)
    n_bins = cfg.frame_length + 1
    amp = cepstra_to_amplitude(mgc, n_bins) / analysis_gain(cfg.frame_length)
    H = minimum_phase_spectrum(amp)
    frames = dft_inverse(H * X, 2 * cfg.frame_length)
    return Waveform(_overlap_add(frames, idx, cfg.frame.signal_length(len(f0))), cfg.sample_rate)


# ---------------------------------------------------------------------------
# Griffin-Lim


@dataclass(frozen=True)
class GriffinLimConfig:
    iterations: int = 60
    frame_length: int = 512
    hop: int = 80
    init_phase: str = "zero"
    tolerance: float = 0.0  # stop once E drops below this
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.init_phase not in INIT_PHASES:
            raise ConfigError(f"init_phase must be one of {INIT_PHASES}")

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(self.frame_length, self.hop, "hann")


@dataclass
class GriffinLimResult:
    wave: np.ndarray
    errors: list[float] = field(default_factory=list)  # E_0 .. E_i


def _bin_weights(n_bins: int, frame_length: int) -> np.ndarray:
    # one-sided bins stand for two two-sided bins except DC (and Nyquist for even lengths)
    w = np.full(n_bins, 2.0)
    w[0] = 1.0
    if frame_length % 2 == 0:
        w[-1] = 1.0
    return w


def spectral_convergence(amplitude: np.ndarray, spec: np.ndarray, frame_length: int) -> float:
    """|| |S| - A || / ||A|| over the full two-sided spectrum."""
    w = _bin_weights(amplitude.shape[1], frame_length)
    den = np.sum(w * amplitude ** 2)
    if den == 0.0:
        return 0.0
    return float(np.sqrt(np.sum(w * (np.abs(spec) - amplitude) ** 2) / den))


def _initial_phase(amplitude, glc: GriffinLimConfig, phase):
    if glc.init_phase == "existing":
        if phase is None:
            raise ValueError("init_phase='existing' needs a phase array")
        return np.exp(1j * np.angle(phase)) if np.iscomplexobj(phase) else np.exp(1j * phase)
    if glc.init_phase == "random":
        rng = np.random.default_rng(glc.seed)
        return np.exp(2j * np.pi * rng.random(amplitude.shape))
    if glc.init_phase == "minimum":
        return np.exp(1j * np.angle(minimum_phase_spectrum(amplitude)))
    return np.ones(amplitude.shape, dtype=complex)


def griffin_lim(target_amplitude, glc: GriffinLimConfig = GriffinLimConfig(),
                phase=None) -> GriffinLimResult:
    """x <- istft(A * phase(stft(x))), recording the spectral convergence E after each step."""
    cfg = glc.frame
    if not cfg.is_cola():
        raise ConfigError(f"hop {glc.hop} too large for frame length {glc.frame_length}")
    amp = np.atleast_2d(np.asarray(target_amplitude, dtype=np.float64))
    if np.any(amp < 0) or not np.all(np.isfinite(amp)):
        raise ValueError("target amplitude must be finite and non-negative")
    if amp.shape[1] != cfg.n_bins:
        raise ValueError(f"expected {cfg.n_bins} bins, got {amp.shape[1]}")
    x = istft(amp * _initial_phase(amp, glc, phase), cfg)
    spec = stft(x, cfg)
    errors = [spectral_convergence(amp, spec, glc.frame_length)]
    for _ in range(glc.iterations):
        if errors[-1] <= glc.tolerance:
            break
        mag = np.abs(spec)
        unit = np.where(mag > 0, spec / np.where(mag > 0, mag, 1.0), 1.0)
        x = istft(amp * unit, cfg)
        spec = stft(x, cfg)
        errors.append(spectral_convergence(amp, spec, glc.frame_length))
    return GriffinLimResult(x, errors)


def phase_recovery_enhance(wave: Waveform, glc: GriffinLimConfig = GriffinLimConfig()) -> tuple[Waveform, GriffinLimResult]:
    """Re-estimate the phase of ``wave`` from its own STFT magnitude.

    The output has the input's length; samples past the last full frame are
    copied from the input since no frame constrains them.
    """
    cfg = glc.frame
    spec = stft(wave, cfg)
    if spec.shape[0] == 0:
        return wave, GriffinLimResult(wave.samples.copy(), [0.0])
    res = griffin_lim(np.abs(spec), glc, phase=spec if glc.init_phase == "existing" else None)
    out = wave.samples.copy()
    out[:len(res.wave)] = res.wave
    return Waveform(out, wave.sample_rate), res
