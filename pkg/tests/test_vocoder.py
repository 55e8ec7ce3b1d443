import numpy as np
import pytest

from vocoderbench.dsp import ConfigError, FrameConfig, Waveform, stft
from vocoderbench.features import BandAperiodicity, Cepstra, F0Track
from vocoderbench.vocoder import (GriffinLimConfig, SynthesisConfig, griffin_lim, mixed_excitation,
                                  phase_recovery_enhance, pulse_train, source_filter_synthesize,
                                  spectral_convergence)

CFG = SynthesisConfig()


def track(n, f0):
    return F0Track(np.full(n, float(f0)), 200.0)


def test_pulse_spacing_and_power():
    p = pulse_train(track(40, 100.0), CFG)
    where = np.flatnonzero(p)
    assert np.all(np.diff(where) == 160)
    assert np.allclose(p[where], np.sqrt(160))
    assert np.mean(p[where[0]:where[-1]] ** 2) == pytest.approx(1.0)
    assert not pulse_train(track(10, 0.0), CFG).any()


def test_mixed_excitation_extremes():
    n = 30
    length = CFG.frame.signal_length(n)
    pure = mixed_excitation(track(n, 125.0), BandAperiodicity(np.zeros((n, 25))), CFG).samples
    np.testing.assert_allclose(pure, pulse_train(track(n, 125.0), CFG), atol=1e-10)
    noise = mixed_excitation(track(n, 125.0), BandAperiodicity(np.ones((n, 25))), CFG).samples
    ref = np.random.default_rng(CFG.noise_seed).standard_normal(length)
    np.testing.assert_allclose(noise, ref, atol=1e-10)


def test_flat_envelope_output_length_and_level():
    n = 50
    mgc = Cepstra(np.zeros((n, 30)), 0.42)
    unvoiced = track(n, 0.0)
    y = source_filter_synthesize(mgc, unvoiced, BandAperiodicity(np.ones((n, 25))), CFG)
    assert len(y) == (n - 1) * CFG.hop + CFG.frame_length
    with pytest.raises(ValueError):
        source_filter_synthesize(mgc, track(n - 1, 0.0), BandAperiodicity(np.ones((n, 25))), CFG)


def test_griffin_lim_existing_phase_is_fixed_point():
    x = np.random.default_rng(1).standard_normal(3000)
    glc = GriffinLimConfig(iterations=10, init_phase="existing")
    spec = stft(x, glc.frame)
    res = griffin_lim(np.abs(spec), glc, phase=spec)
    assert res.errors[0] < 1e-10
    with pytest.raises(ValueError):
        griffin_lim(np.abs(spec), glc)


def test_griffin_lim_error_trace():
    amp = np.abs(np.random.default_rng(2).standard_normal((12, 257)))
    res = griffin_lim(amp, GriffinLimConfig(iterations=15, init_phase="random", seed=3))
    assert len(res.errors) == 16
    assert np.all(np.diff(res.errors) <= 1e-7)
    stopped = griffin_lim(amp, GriffinLimConfig(iterations=15, tolerance=10.0))
    assert len(stopped.errors) == 1


def test_griffin_lim_validation():
    with pytest.raises(ConfigError):
        GriffinLimConfig(init_phase="magic")
    with pytest.raises(ConfigError):
        griffin_lim(np.ones((3, 257)), GriffinLimConfig(hop=400))
    with pytest.raises(ValueError):
        griffin_lim(-np.ones((3, 257)))


def test_spectral_convergence_scale():
    amp = np.ones((4, 5))
    assert spectral_convergence(amp, amp.astype(complex), 8) == 0.0
    assert spectral_convergence(amp, 2 * amp.astype(complex), 8) == pytest.approx(1.0)


def test_phase_recovery_keeps_length():
    w = Waveform(np.random.default_rng(4).standard_normal(2000), 16000)
    out, res = phase_recovery_enhance(w, GriffinLimConfig(iterations=5))
    assert len(out) == len(w) and len(res.errors) == 6
    np.testing.assert_array_equal(out.samples[len(res.wave):], w.samples[len(res.wave):])
