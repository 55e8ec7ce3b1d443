"""Acoustic feature chain: power spectrum -> warped cepstra, minimum-phase
inversion, autocorrelation F0 tracking with log-spaced quantization, and
comb-residual band aperiodicity."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .dsp import FrameConfig, Waveform, dft_forward, dft_inverse, fft, ifft, get_window, stft

SPECTRAL_FLOOR = 1e-10
UNVOICED = 0
N_F0_LEVELS = 255


@dataclass(frozen=True)
class Cepstra:
    frames: np.ndarray  # (N, M)
    warp_alpha: float = 0.0

    @property
    def order(self) -> int:
        return self.frames.shape[1]

    def __len__(self):
        return self.frames.shape[0]


@dataclass(frozen=True)
class F0Track:
    f0: np.ndarray  # Hz, 0 = unvoiced
    frame_rate: float = 200.0

    @property
    def voiced(self) -> np.ndarray:
        return self.f0 > 0

    def __len__(self):
        return len(self.f0)


@dataclass(frozen=True)
class BandAperiodicity:
    frames: np.ndarray  # (N, B), values in [0, 1]

    def __len__(self):
        return self.frames.shape[0]


# ---------------------------------------------------------------------------
# cepstra


def floor_power(p) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    floor = np.maximum(SPECTRAL_FLOOR * p.max(axis=-1, keepdims=True), 1e-300)
    return np.maximum(p, floor)


def _sym_to_causal_weights(n: int, nyquist_last: bool) -> np.ndarray:
    w = np.full(n, 2.0)
    w[0] = 1.0
    if nyquist_last and n > 1:
        w[-1] = 1.0
    return w


@lru_cache(maxsize=32)
def frequency_warp_matrix(n_in: int, n_out: int, alpha: float) -> np.ndarray:
    """Linear map taking a causal cepstrum of length ``n_in`` to its all-pass
    warped counterpart of length ``n_out`` (first-order all-pass, coefficient ``alpha``)."""
    beta = 1.0 - alpha * alpha
    basis = np.eye(n_in)
    out = np.zeros((n_out, n_in))
    for i in range(n_in - 1, -1, -1):
        prev = out.copy()
        out[0] = basis[i] + alpha * prev[0]
        if n_out > 1:
            out[1] = beta * prev[0] + alpha * prev[1]
        for j in range(2, n_out):
            out[j] = prev[j - 1] + alpha * (prev[j] - out[j - 1])
    out.setflags(write=False)
    return out


def warp_cepstrum(c_sym: np.ndarray, n_out: int, alpha: float, nyquist_in: bool,
                  nyquist_out: bool) -> np.ndarray:
    """Warp symmetric-convention cepstra (rows) by ``alpha``; alpha=0 only truncates/pads."""
    n_in = c_sym.shape[-1]
    if alpha == 0.0:
        out = np.zeros(c_sym.shape[:-1] + (n_out,))
        k = min(n_in, n_out)
        out[..., :k] = c_sym[..., :k]
        return out
    causal = c_sym * _sym_to_causal_weights(n_in, nyquist_in)
    warped = causal @ frequency_warp_matrix(n_in, n_out, float(alpha)).T
    return warped / _sym_to_causal_weights(n_out, nyquist_out)


def _log_amplitude_from_sym(c_sym: np.ndarray) -> np.ndarray:
    """Evaluate log|A| on F = len bins from half a symmetric cepstrum (indices 0..T/2)."""
    n_bins = c_sym.shape[-1]
    t = 2 * (n_bins - 1)
    full = np.concatenate([c_sym, c_sym[..., 1:n_bins - 1][..., ::-1]], axis=-1)
    return fft(full)[..., :n_bins].real if t > 0 else c_sym.copy()


def cepstral_analysis(p, order: int = 60, alpha: float = 0.0) -> Cepstra:
    """Cepstra of the log-amplitude spectrum ``log sqrt(p)``, warped and truncated.

    ``order`` may equal the number of bins, in which case (with alpha=0) the
    transform is invertible.
    """
    p = floor_power(p)
    n_bins = p.shape[-1]
    if order > n_bins:
        raise ValueError(f"cepstral order {order} exceeds the {n_bins} spectral bins (need M <= F)")
    if not -1.0 < alpha < 1.0:
        raise ValueError("warping coefficient must lie in (-1, 1)")
    c_sym = dft_inverse(0.5 * np.log(p))[..., :n_bins]
    return Cepstra(warp_cepstrum(c_sym, order, alpha, True, order == n_bins), float(alpha))


def cepstra_to_amplitude(c, n_bins: int, alpha: float | None = None) -> np.ndarray:
    """Linear amplitude spectrum (sqrt p) on ``n_bins`` one-sided bins."""
    if isinstance(c, Cepstra):
        frames, a = c.frames, c.warp_alpha
    else:
        frames, a = np.atleast_2d(np.asarray(c, dtype=np.float64)), 0.0
    if alpha is not None:
        a = alpha
    if frames.shape[-1] > n_bins:
        raise ValueError("more cepstral coefficients than spectral bins")
    c_sym = warp_cepstrum(frames, n_bins, -a, frames.shape[-1] == n_bins, True)
    return np.exp(_log_amplitude_from_sym(c_sym))


def minimum_phase_spectrum(amplitude) -> np.ndarray:
    """Minimum-phase complex spectrum with the given one-sided amplitude (homomorphic folding)."""
    amp = np.atleast_2d(np.asarray(amplitude, dtype=np.float64))
    amp = np.sqrt(floor_power(amp ** 2))
    n_bins = amp.shape[-1]
    t = 2 * (n_bins - 1)
    cep = dft_inverse(np.log(amp))
    fold = np.zeros_like(cep)
    fold[..., 0] = cep[..., 0]
    fold[..., 1:t // 2] = 2.0 * cep[..., 1:t // 2]
    fold[..., t // 2] = cep[..., t // 2]
    return np.exp(dft_forward(fold))


# ---------------------------------------------------------------------------
# F0


def frame_centers(n_frames: int, cfg: FrameConfig) -> np.ndarray:
    return np.arange(n_frames) * cfg.hop + cfg.frame_length // 2


def _segments(x: np.ndarray, starts: np.ndarray, length: int) -> np.ndarray:
    pad = length + int(np.abs(starts).max(initial=0)) + 1
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    idx = starts[:, None] + pad + np.arange(length)[None, :]
    return xp[idx]


def extract_f0(wave: Waveform, cfg: FrameConfig, f_min: float = 55.0, f_max: float = 600.0,
               voicing_threshold: float = 0.3, silence_db: float = -60.0,
               n_frames: int | None = None) -> F0Track:
    """Normalised cross-correlation pitch tracker, one estimate per analysis frame."""
    sr = wave.sample_rate
    if sr < 4 * f_max:
        raise ValueError(f"sample rate {sr} Hz too low for f_max={f_max} Hz")
    x = wave.samples
    if n_frames is None:
        n_frames = cfg.n_frames(len(x))
    frame_rate = sr / cfg.hop
    if n_frames == 0:
        return F0Track(np.zeros(0), frame_rate)
    lag_min = max(int(np.floor(sr / f_max)), 2)
    lag_max = int(np.ceil(sr / f_min))
    win = int(np.ceil(2.0 * sr / f_min))
    seg_len = win + lag_max + 1
    starts = frame_centers(n_frames, cfg) - seg_len // 2
    seg = _segments(x, starts, seg_len)
    head = seg[:, :win]
    nfft = 1 << (seg_len + win).bit_length()
    a = np.zeros((n_frames, nfft))
    a[:, :win] = head
    y = np.zeros((n_frames, nfft))
    y[:, :seg_len] = seg
    corr = ifft(np.conj(fft(a)) * fft(y)).real[:, : lag_max + 2]
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(seg ** 2, axis=1)], axis=1)
    lags = np.arange(lag_max + 2)
    e_lag = csum[:, np.minimum(lags + win, seg_len)] - csum[:, lags]
    e0 = e_lag[:, :1]
    nccf = corr / np.sqrt(np.maximum(e0 * e_lag, 1e-300))
    nccf[:, :lag_min] = -np.inf

    f0 = np.zeros(n_frames)
    rms = np.sqrt(e0[:, 0] / win)
    loud = 20 * np.log10(np.maximum(rms, 1e-300)) > silence_db
    for n in range(n_frames):
        if not loud[n]:
            continue
        r = nccf[n]
        band = r[lag_min:lag_max + 1]
        peak = band.max()
        if peak < voicing_threshold:
            continue
        # first local maximum reaching 85% of the global peak avoids octave-down errors
        tau = lag_min + int(np.argmax(band))
        for k in range(lag_min, lag_max + 1):
            if r[k] >= 0.85 * peak and r[k] >= r[k - 1] and r[k] >= r[k + 1]:
                tau = k
                break
        lo, mid, hi = r[tau - 1], r[tau], r[tau + 1]
        shift = 0.0
        if np.isfinite(lo) and np.isfinite(hi):
            denom = lo - 2 * mid + hi
            if denom < 0:
                shift = float(np.clip(0.5 * (lo - hi) / denom, -0.5, 0.5))
        f0[n] = np.clip(sr / (tau + shift), f_min, f_max)
    return F0Track(f0, frame_rate)


@dataclass(frozen=True)
class F0Codebook:
    """255 log-spaced voiced levels; level 0 is reserved for unvoiced frames."""

    log_min: float
    log_max: float
    n_levels: int = N_F0_LEVELS

    @property
    def step(self) -> float:
        return (self.log_max - self.log_min) / (self.n_levels - 1)

    @property
    def centers(self) -> np.ndarray:
        return np.exp(self.log_min + self.step * np.arange(self.n_levels))

    def to_dict(self) -> dict:
        return asdict(self)


def build_f0_codebook(f0_values, low_pct: float = 1.0, high_pct: float = 99.0,
                      n_levels: int = N_F0_LEVELS) -> F0Codebook:
    f0 = np.concatenate([np.ravel(np.asarray(v, dtype=np.float64)) for v in f0_values]) \
        if isinstance(f0_values, (list, tuple)) else np.ravel(np.asarray(f0_values, dtype=np.float64))
    voiced = f0[f0 > 0]
    if voiced.size == 0:
        raise ValueError("cannot build an F0 codebook without voiced frames")
    lo, hi = np.log(np.percentile(voiced, [low_pct, high_pct]))
    if hi - lo < 1e-6:
        lo, hi = lo - 0.05, hi + 0.05
    return F0Codebook(float(lo), float(hi), n_levels)


def quantize_f0(track, codebook: F0Codebook) -> np.ndarray:
    """Nearest log-F0 level in 1..255; unvoiced frames map to 0."""
    f0 = track.f0 if isinstance(track, F0Track) else np.asarray(track, dtype=np.float64)
    out = np.zeros(len(f0), dtype=np.int64)
    v = f0 > 0
    idx = np.rint((np.log(f0[v]) - codebook.log_min) / codebook.step)
    out[v] = np.clip(idx, 0, codebook.n_levels - 1).astype(np.int64) + 1
    return out


def dequantize_f0(levels, codebook: F0Codebook, frame_rate: float = 200.0) -> F0Track:
    levels = np.asarray(levels, dtype=np.int64)
    if levels.size and (levels.min() < 0 or levels.max() > codebook.n_levels):
        raise ValueError("quantized F0 level out of range")
    f0 = np.zeros(len(levels))
    v = levels > 0
    f0[v] = codebook.centers[levels[v] - 1]
    return F0Track(f0, frame_rate)


# ---------------------------------------------------------------------------
# band aperiodicity


def band_index(n_bins: int, n_bands: int) -> np.ndarray:
    """Equal-width band assignment of the one-sided bins 0..n_bins-1."""
    return np.minimum((np.arange(n_bins) * n_bands) // n_bins, n_bands - 1)


def _pool3(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    out[1:] += a[:-1]
    out[:-1] += a[1:]
    return out


def estimate_band_aperiodicity(wave: Waveform, f0: F0Track, cfg: FrameConfig,
                               n_bands: int = 25, floor_db: float = -30.0) -> BandAperiodicity:
    """Per-band comb residual ratio sum|X_t - X_{t+kP}|^2 / sum(|X_t|^2 + |X_{t+kP}|^2).

    ``X_{t+kP}`` is the spectrum k pitch periods later (k chosen so the shift is
    at least half a window), phase-corrected for the fractional part of the
    shift. Bands far below the average spectral level (``floor_db``) are
    pushed towards 1. Energies are pooled over adjacent voiced
    frames before taking the ratio. Unvoiced frames are exactly 1.
    """
    sr = wave.sample_rate
    n_frames = len(f0)
    out = np.ones((n_frames, n_bands))
    voiced = np.flatnonzero(f0.f0 > 0)
    if voiced.size == 0:
        return BandAperiodicity(out)
    w = cfg.frame_length
    win = get_window("hann", w)
    n_bins = w // 2 + 1
    bidx = band_index(n_bins, n_bands)
    counts = np.bincount(bidx, minlength=n_bands)
    # compare against the frame a whole number of periods later, at least half a
    # window away so that the two frames share little data
    period = sr / f0.f0[voiced]
    shift = np.ceil(0.5 * w / period) * period
    s_int = np.floor(shift).astype(np.int64)
    frac = shift - s_int
    starts = voiced * cfg.hop
    xa = _segments(wave.samples, starts, w) * win
    xb = _segments(wave.samples, starts + s_int, w) * win
    spec_a = dft_forward(xa)
    omega = 2 * np.pi * np.arange(n_bins) / w
    spec_b = dft_forward(xb) * np.exp(1j * omega[None, :] * frac[:, None])
    # for uncorrelated input the expected residual is (|A|^2+|B|^2)(1 - rho cos(omega shift)),
    # rho being the window overlap correlation; dividing it out makes noise read as 1
    win_energy = np.sum(win ** 2)
    rho = np.array([np.dot(win[k:], win[:w - k]) for k in np.minimum(s_int, w)]) / win_energy
    expected = 1.0 - rho[:, None] * np.cos(omega[None, :] * shift[:, None])
    resid = np.abs(spec_a - spec_b) ** 2 / expected
    total = np.abs(spec_a) ** 2 + np.abs(spec_b) ** 2
    floor = 10 ** (floor_db / 10) * total.mean(axis=1, keepdims=True) * counts[None, :]
    r_band = np.zeros((n_frames, n_bands))
    t_band = np.zeros((n_frames, n_bands))
    f_band = np.zeros((n_frames, n_bands))
    r_band[voiced] = [np.bincount(bidx, weights=row, minlength=n_bands) for row in resid]
    t_band[voiced] = [np.bincount(bidx, weights=row, minlength=n_bands) for row in total]
    f_band[voiced] = floor
    # pool each voiced frame with its voiced neighbours to tame the estimator variance
    pooled = [_pool3(a) for a in (r_band, t_band, f_band)]
    ratio = (pooled[0] + pooled[2]) / np.maximum(pooled[1] + pooled[2], 1e-300)
    out[voiced] = np.clip(ratio[voiced], 0.0, 1.0)
    return BandAperiodicity(out)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalysisConfig:
    frame_length: int = 512
    hop: int = 80
    window: str = "hann"
    mgc_order: int = 60
    warp_alpha: float = 0.55
    bap_bands: int = 25
    f0_min: float = 55.0
    f0_max: float = 600.0
    voicing_threshold: float = 0.3
    silence_db: float = -60.0

    @property
    def frame(self) -> FrameConfig:
        return FrameConfig(self.frame_length, self.hop, self.window)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class AcousticFrameSequence:
    mgc: Cepstra
    bap: BandAperiodicity
    f0: F0Track
    qf0: np.ndarray | None = None

    def __post_init__(self):
        lengths = {len(self.mgc), len(self.bap), len(self.f0)}
        if self.qf0 is not None:
            lengths.add(len(self.qf0))
        if len(lengths) != 1:
            raise ValueError(f"acoustic streams disagree on frame count: {sorted(lengths)}")

    def __len__(self):
        return len(self.f0)


def analyze(wave: Waveform, cfg: AnalysisConfig) -> AcousticFrameSequence:
    """MGC, BAP and F0 for every analysis frame of ``wave``."""
    fc = cfg.frame
    p = np.abs(stft(wave, fc)) ** 2
    mgc = cepstral_analysis(p, cfg.mgc_order, cfg.warp_alpha)
    f0 = extract_f0(wave, fc, cfg.f0_min, cfg.f0_max, cfg.voicing_threshold, cfg.silence_db,
                    n_frames=p.shape[0])
    bap = estimate_band_aperiodicity(wave, f0, fc, cfg.bap_bands)
    return AcousticFrameSequence(mgc, bap, f0)
