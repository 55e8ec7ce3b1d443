import numpy as np
import pytest
from scipy.signal import lfilter

from vocoderbench.dsp import FrameConfig, Waveform
from vocoderbench.features import (AnalysisConfig, F0Track, analyze, band_index, build_f0_codebook,
                                   cepstra_to_amplitude, cepstral_analysis, dequantize_f0,
                                   estimate_band_aperiodicity, extract_f0, minimum_phase_spectrum,
                                   quantize_f0)
from vocoderbench.store import StoreFormatError, read_acoustic, read_linguistic, write_acoustic, write_linguistic

SR = 16000
FC = FrameConfig(512, 80)


def pulse_vowel(f0=150.0, seconds=0.5):
    period = SR / f0
    x = np.zeros(int(SR * seconds))
    x[np.arange(0, len(x), period).astype(int)] = 1.0
    r = np.exp(-np.pi * 100 / SR)
    return Waveform(lfilter([1 - r], [1, -2 * r * np.cos(2 * np.pi * 800 / SR), r * r], x), SR)


def test_constant_spectrum_gives_only_c0():
    c = cepstral_analysis(np.full((1, 257), 4.0), order=20)
    assert c.frames[0, 0] == pytest.approx(np.log(2.0))
    np.testing.assert_allclose(c.frames[0, 1:], 0.0, atol=1e-12)


def test_warped_round_trip_smooth_envelope():
    f = np.linspace(0, np.pi, 257)
    amp = np.exp(np.cos(f) + 0.3 * np.cos(3 * f))
    c = cepstral_analysis(amp ** 2, order=60, alpha=0.42)
    back = cepstra_to_amplitude(c, 257)[0]
    assert np.max(np.abs(np.log(back / amp))) < 1e-3


def test_order_above_bins_rejected():
    with pytest.raises(ValueError):
        cepstral_analysis(np.ones((1, 9)), order=10)
    with pytest.raises(ValueError):
        cepstral_analysis(np.ones((1, 9)), order=4, alpha=1.0)


def test_minimum_phase_recovers_one_pole_filter():
    # |1 / (1 - 0.5 z^-1)| has the causal minimum-phase response 0.5^n
    w = np.linspace(0, np.pi, 257)
    amp = 1.0 / np.abs(1 - 0.5 * np.exp(-1j * w))
    h = np.fft.irfft(minimum_phase_spectrum(amp)[0])
    np.testing.assert_allclose(h[:40], 0.5 ** np.arange(40), atol=1e-10)


@pytest.mark.parametrize("f0", [90.0, 150.0, 320.0])
def test_f0_on_pulse_train(f0):
    track = extract_f0(pulse_vowel(f0), FC)
    v = track.f0[track.voiced]
    assert track.voiced.mean() > 0.9
    assert np.median(np.abs(v - f0) / f0) < 0.01


def test_noise_and_silence_unvoiced():
    rng = np.random.default_rng(1)
    assert extract_f0(Waveform(rng.standard_normal(8000), SR), FC).voiced.mean() < 0.2
    assert not extract_f0(Waveform(np.zeros(8000), SR), FC).voiced.any()


def test_codebook_levels():
    cb = build_f0_codebook(np.linspace(80, 300, 500))
    assert cb.n_levels == 255
    q = quantize_f0(np.array([0.0, 80.0, 300.0, 1e4, 1.0]), cb)
    assert list(q) == [0, 1, 255, 255, 1]
    lo, hi = np.percentile(np.linspace(80, 300, 500), [1, 99])
    np.testing.assert_allclose(dequantize_f0(q[:3], cb).f0, [0.0, lo, hi], rtol=1e-9)
    with pytest.raises(ValueError):
        build_f0_codebook(np.zeros(10))
    with pytest.raises(ValueError):
        dequantize_f0([256], cb)


def test_quantization_error_bounded_by_half_step():
    cb = build_f0_codebook(np.linspace(80, 300, 500), 0, 100)
    f0 = np.random.default_rng(2).uniform(80, 300, 200)
    back = dequantize_f0(quantize_f0(f0, cb), cb).f0
    assert np.max(np.abs(np.log(back / f0))) <= cb.step / 2 + 1e-12


def test_band_index_partition():
    idx = band_index(257, 25)
    assert idx[0] == 0 and idx[-1] == 24
    assert np.all(np.diff(idx) >= 0) and len(set(idx)) == 25


def test_bap_periodic_low_noise_high():
    wave = pulse_vowel(150.0)
    track = extract_f0(wave, FC)
    bap = estimate_band_aperiodicity(wave, track, FC).frames
    assert np.median(bap[track.voiced][:, :8]) < 0.1
    unv = F0Track(np.zeros(len(track)), track.frame_rate)
    assert np.all(estimate_band_aperiodicity(wave, unv, FC).frames == 1.0)


def test_store_round_trip(tmp_path):
    feats = analyze(pulse_vowel(), AnalysisConfig(mgc_order=30, warp_alpha=0.42))
    p = tmp_path / "u.vbaf"
    write_acoustic(p, feats, {"analysis": {"warp_alpha": 0.42}})
    back = read_acoustic(p)
    assert back.mgc.warp_alpha == 0.42
    np.testing.assert_allclose(back.mgc.frames, feats.mgc.frames, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(back.f0.f0, feats.f0.f0.astype(np.float32))
    (tmp_path / "bad.vbaf").write_bytes(p.read_bytes()[:-4])
    with pytest.raises(StoreFormatError):
        read_acoustic(tmp_path / "bad.vbaf")


def test_linguistic_round_trip(tmp_path):
    x = np.random.default_rng(3).standard_normal((7, 5)).astype(np.float32)
    write_linguistic(tmp_path / "l.vblf", x)
    np.testing.assert_array_equal(read_linguistic(tmp_path / "l.vblf"), x)
