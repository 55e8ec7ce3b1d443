"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL (or WARN) line.

Run with ``pytest tests/test_acceptance.py -v``; the summary of all criteria is
printed at the end of the session.
"""

import math
import time
import warnings

import numpy as np
import pytest
from scipy.signal import lfilter

from vocoderbench import pipeline
from vocoderbench.acoustic import AcousticModel, rnn_nll, sar_nll, sar_recursion
from vocoderbench.config import ExperimentConfig, write_default_config
from vocoderbench.corpus import make_toy_corpus
from vocoderbench.dsp import (FrameConfig, Waveform, dft_forward, fft, mu_law_bin_edges, mu_law_decode,
                              mu_law_encode, stft)
from vocoderbench.features import (AnalysisConfig, analyze, cepstra_to_amplitude, cepstral_analysis,
                                   minimum_phase_spectrum)
from vocoderbench.metrics import if_deviation_std, instantaneous_frequency, log_spectral_distortion
from vocoderbench.nn import KINDS, OptimizerConfig
from vocoderbench.nn.gradcheck import gradient_check, random_spec
from vocoderbench.vocoder import GriffinLimConfig, SynthesisConfig, griffin_lim, source_filter_synthesize
from vocoderbench.wavenet import (ConditioningTrack, Wavenet, WavenetConfig, receptive_field,
                                  train_wavenet, uniform_nll)

from conftest import record


def _check(tag, ok, detail, elapsed, budget):
    within = elapsed < budget
    record(tag, "PASS" if ok and within else "FAIL", f"{detail} ({elapsed:.1f}s, budget {budget:.0f}s)")
    assert ok, detail
    assert within, f"took {elapsed:.1f}s, budget {budget}s"


def _soft(tag, ok, detail, elapsed, budget):
    record(tag, "PASS" if ok else "WARN", f"{detail} ({elapsed:.1f}s, budget {budget:.0f}s)")
    if not ok:
        warnings.warn(f"{tag}: {detail}")
    assert elapsed < budget


def naive_dft(x):
    n = len(x)
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) @ x


def vowel(sr=16000, f0=120.0, seconds=1.0):
    period = sr / f0
    x = np.zeros(int(sr * seconds))
    x[np.arange(0, len(x), period).astype(int)] = np.sqrt(period)
    for fc, bw in [(700, 80), (1200, 100)]:
        r = np.exp(-np.pi * bw / sr)
        x = lfilter([1 - r], [1, -2 * r * np.cos(2 * np.pi * fc / sr), r * r], x)
    return Waveform(x, sr)


def periodic_clip(sr=16000, period=160):
    n = np.arange(sr)
    parts = [(1, 0.3, 0.0), (2, 0.2, 1.0), (3, 0.15, 2.0), (5, 0.1, 0.5), (7, 0.05, 1.3)]
    return Waveform(sum(a * np.sin(2 * np.pi * k * n / period + ph) for k, a, ph in parts), sr)


# ---------------------------------------------------------------------------


def test_01_dft_oracle():
    t0 = time.time()
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(4, 513))
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        worst = max(worst, np.max(np.abs(fft(x) - naive_dft(x))))
        r = x.real
        worst = max(worst, np.max(np.abs(dft_forward(r) - naive_dft(r)[: n // 2 + 1])))
    _check("criterion 1 (DFT oracle)", worst < 1e-10, f"max error {worst:.2e}", time.time() - t0, 10)


def test_02_mu_law_scan():
    t0 = time.time()
    x = np.linspace(-1.0, 1.0, 10001)
    q = mu_law_encode(x, 1024)
    xr = mu_law_decode(q)
    edges = mu_law_bin_edges(1024)
    monotone = bool(np.all(np.diff(q.levels) >= 0) and np.all(np.diff(xr) >= 0))
    step = edges[q.levels + 1] - edges[q.levels]
    err = np.abs(xr - x)
    ok = monotone and bool(np.all(err <= step))
    _check("criterion 2 (mu-law scan)", ok, f"monotone={monotone}, max err/step {np.max(err / step):.3f}",
           time.time() - t0, 5)


def test_03_cepstral_bijection():
    t0 = time.time()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        f = int(rng.integers(9, 258))
        amp = np.exp(rng.uniform(-3, 3, f))
        c = cepstral_analysis(amp ** 2, order=f, alpha=0.0)
        back = cepstra_to_amplitude(c, f)[0]
        worst = max(worst, np.max(np.abs(back - amp) / amp))
    _check("criterion 3 (cepstral bijection)", worst < 1e-8, f"max rel error {worst:.2e}", time.time() - t0, 10)


def test_04_minimum_phase_magnitude():
    t0 = time.time()
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        f = int(rng.integers(3, 513))
        amp = np.exp(rng.uniform(-4, 4, f))
        mag = np.abs(minimum_phase_spectrum(amp))[0]
        worst = max(worst, np.max(np.abs(mag - amp) / amp))
    _check("criterion 4 (minimum phase)", worst < 1e-6, f"max rel error {worst:.2e}", time.time() - t0, 10)


def test_05_gradient_checks():
    t0 = time.time()
    rng = np.random.default_rng(5)
    worst, where = 0.0, ""
    for kind in KINDS:
        for i in range(20):
            rep = gradient_check(random_spec(kind, rng), seed=int(rng.integers(1 << 31)),
                                 seq_len=int(rng.integers(2, 7)))
            if rep.max_error > worst:
                worst, where = rep.max_error, f"{kind}#{i}"
    _check("criterion 5 (gradient checks)", worst < 1e-4,
           f"{len(KINDS)} kinds x 20 shapes, max rel error {worst:.2e} at {where}", time.time() - t0, 120)


def test_06_sar_reduces_to_rnn():
    t0 = time.time()
    rng = np.random.default_rng(6)
    equal = True
    for i in range(20):
        n, d, k = int(rng.integers(2, 40)), int(rng.integers(1, 8)), int(rng.integers(1, 4))
        h, a = rng.standard_normal((n, d)), rng.standard_normal((n, d))
        equal &= sar_nll(h, a, np.zeros((k, d)), np.zeros(d)) == rnn_nll(h, a)
        equal &= np.array_equal(sar_recursion(h, np.zeros((k, d)), np.zeros(d)), h)
        # whole models: identical body, SAR parameters left at zero
        in_dim = int(rng.integers(2, 6))
        streams = (("mgc", d), ("bap", 2))
        rnn = AcousticModel(in_dim, streams, None, ff=(8,), bi=(4,), uni=(4,), seed=i)
        sar = AcousticModel(in_dim, streams, {"mgc": k, "bap": 0}, ff=(8,), bi=(4,), uni=(4,), seed=i)
        ling, ac = rng.standard_normal((n, in_dim)), rng.standard_normal((n, d + 2))
        equal &= rnn.nll(ling, ac) == sar.nll(ling, ac)
        equal &= np.array_equal(rnn.generate(ling), sar.generate(ling))
    _check("criterion 6 (SAR reduces to RNN)", bool(equal), "bit-equal on 20 cases", time.time() - t0, 10)


def test_07_sar_closed_form():
    t0 = time.time()
    n = np.arange(1, 61)
    out = sar_recursion(np.ones((60, 1)), np.array([[0.5]]), np.zeros(1))[:, 0]
    err = np.max(np.abs(out - (2.0 - 2.0 ** (1 - n))))
    _check("criterion 7 (SAR closed form)", err < 1e-12, f"max error {err:.1e}", time.time() - t0, 1)


def _structural_reach(model):
    """Offsets j such that the input at t - j feeds the output at t, walking the block graph."""
    reach = {0}
    for blk in reversed(model.blocks):
        reach |= {j + blk.dilation for j in reach}
    return len(reach)


def test_08_wavenet_receptive_field():
    t0 = time.time()
    cfg = WavenetConfig.full(mgc_dim=2)
    model = Wavenet(cfg)
    t = 6000
    rng = np.random.default_rng(8)
    levels = rng.integers(0, cfg.n_levels, t)
    cond = ConditioningTrack(rng.standard_normal((t, 2)), rng.integers(0, cfg.f0_levels, t), np.ones(t, bool))
    nll = model.nll(levels, cond)
    # perturbation oracle: give the zero output layer random weights so every
    # hidden change reaches the logits, then flip one input sample
    model.post2.W.value[...] = rng.standard_normal(model.post2.W.value.shape)
    base = model.forward(levels, cond)
    s = 200
    pert = levels.copy()
    pert[s] = (pert[s] + cfg.n_levels // 2) % cfg.n_levels
    changed = np.nonzero(np.any(model.forward(pert, cond) != base, axis=1))[0] - s
    r = receptive_field(cfg)
    measured = int(changed.max()) if changed.size else 0
    ok = (r == 4093 and _structural_reach(model) == r and measured == r and changed.min() == 1
          and len(changed) == r and abs(nll - math.log(1024)) < 1e-3)
    _check("criterion 8 (Wavenet receptive field)", ok,
           f"R={r}, traversal={_structural_reach(model)}, perturbation={measured}, "
           f"uniform NLL {nll:.6f} vs ln 1024 {uniform_nll(1024):.6f}", time.time() - t0, 60)


@pytest.fixture(scope="module")
def overfit():
    t0 = time.time()
    clip = periodic_clip()
    q = mu_law_encode(clip, n_levels=256)
    n = len(q.levels)
    cond = ConditioningTrack(np.zeros((n, 3)), np.full(n, 100), np.ones(n, bool))
    model = Wavenet(WavenetConfig.tiny(mgc_dim=3))
    train_wavenet(model, [(q.levels, cond)], 400, crop=1600, opt_config=OptimizerConfig("adam", 3e-3))
    return model, q, cond, time.time() - t0


@pytest.mark.slow
def test_09_wavenet_overfit(overfit):
    model, q, cond, train_time = overfit
    t0 = time.time()
    acc = model.accuracy(q, cond)
    g1 = model.generate(cond, "greedy", seed=1)
    g2 = model.generate(cond, "greedy", seed=2)
    same = np.array_equal(g1.levels, g2.levels)
    _check("criterion 9 (Wavenet overfit)", acc >= 0.95 and same,
           f"teacher-forced accuracy {acc:.4f}, greedy seed-invariant={same}",
           train_time + time.time() - t0, 900)


def test_10_griffin_lim():
    t0 = time.time()
    rng = np.random.default_rng(10)
    worst_rise = -np.inf
    glc = GriffinLimConfig(iterations=20, frame_length=64, hop=16, init_phase="random")
    for i in range(50):
        target = np.abs(rng.standard_normal((int(rng.integers(4, 20)), 33)))
        e = np.array(griffin_lim(target, GriffinLimConfig(**{**glc.__dict__, "seed": i})).errors)
        worst_rise = max(worst_rise, np.max(np.diff(e)))
    amp = np.abs(stft(vowel(), FrameConfig(512, 80)))
    e60 = griffin_lim(amp, GriffinLimConfig(iterations=60)).errors[-1]
    ok = worst_rise <= 1e-7 and e60 < 0.1
    _check("criterion 10 (Griffin-Lim)", ok, f"largest error increase {worst_rise:.1e}, E_60 {e60:.4f}",
           time.time() - t0, 60)


def test_11_analysis_synthesis():
    t0 = time.time()
    wave = vowel()
    cfg = AnalysisConfig(warp_alpha=0.42, mgc_order=30)
    a = analyze(wave, cfg)
    y = source_filter_synthesize(a.mgc, a.f0, a.bap, SynthesisConfig())
    b = analyze(y, cfg)
    lsd = log_spectral_distortion(cepstra_to_amplitude(a.mgc, 257), cepstra_to_amplitude(b.mgc, 257))
    _check("criterion 11 (analysis-synthesis LSD)", lsd < 3.0, f"LSD {lsd:.2f} dB", time.time() - t0, 10)


def test_12_level_normalization():
    t0 = time.time()
    rng = np.random.default_rng(12)
    worst = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(20):
            x = rng.standard_normal(int(rng.integers(100, 48000))) * rng.uniform(1e-4, 2.0)
            y = pipeline.normalize_level(Waveform(x, 16000), -26.0)
            worst = max(worst, abs(pipeline.dbov(y.samples) + 26.0))
    _check("criterion 12 (level normalization)", worst <= 0.01, f"max deviation {worst:.2e} dB",
           time.time() - t0, 5)


# ---------------------------------------------------------------------------
# toy pipeline, run twice from scratch with the same seed


def _run_pipeline(root):
    make_toy_corpus(root / "corpus", 10, seed=0)
    cfg = ExperimentConfig.load(write_default_config(root / "config.toml", seed=0))
    assert pipeline.cmd_extract(cfg).exit_code == 0
    pipeline.cmd_train(cfg)
    assert pipeline.cmd_synthesize(cfg).exit_code == 0
    assert pipeline.cmd_normalize(cfg).exit_code == 0
    # GV over the whole 10-utterance set for the two acoustic models without post-processing
    all_ids = [f"toy{u:03d}" for u in range(10)]
    assert pipeline.cmd_synthesize(cfg, ["RNN-Wo", "SAR-Wo"], all_ids).exit_code == 0
    cfg.values["methods"] = ["RNN-Wo", "SAR-Wo"]
    return cfg, pipeline.cmd_report(cfg, all_ids)


@pytest.fixture(scope="module")
def toy_runs(tmp_path_factory):
    t0 = time.time()
    runs = [_run_pipeline(tmp_path_factory.mktemp(f"run{i}")) for i in range(2)]
    return runs, time.time() - t0


@pytest.mark.slow
def test_13_gv_ordering(toy_runs):
    (runs, elapsed) = toy_runs
    frac = runs[0][1]["sar_gv_ge_rnn_fraction"]
    _soft("criterion 13 (SAR GV >= RNN GV)", frac >= 0.7, f"fraction of MGC dims {frac:.2f}",
          elapsed / 2, 1200)


@pytest.mark.slow
def test_14_if_regularity(overfit):
    model, q, cond, _ = overfit
    t0 = time.time()
    frame = FrameConfig(512, 80)
    voiced = np.ones(frame.n_frames(len(cond)), bool)

    def spread(mode, seed):
        w = mu_law_decode(model.generate(cond, mode, seed), 16000)
        return if_deviation_std(instantaneous_frequency(w, frame), voiced)

    greedy = spread("greedy", 1)
    rand = float(np.mean([spread("random", s) for s in (1, 2)]))
    _soft("criterion 14 (greedy IF more regular)", greedy < rand,
          f"IF std greedy {greedy:.2f} Hz vs random {rand:.2f} Hz", time.time() - t0, 300)


@pytest.mark.slow
def test_15_end_to_end_determinism(toy_runs):
    (runs, elapsed) = toy_runs
    files = []
    mismatched = []
    for (cfg_a, _), (cfg_b, _) in [runs]:
        for wav in sorted(pipeline.Layout(cfg_a).synth.glob("*/*.wav")):
            rel = wav.relative_to(pipeline.Layout(cfg_a).synth)
            other = pipeline.Layout(cfg_b).synth / rel
            files.append(rel)
            if not other.exists() or other.read_bytes() != wav.read_bytes():
                mismatched.append(str(rel))
    methods = {p.parts[0] for p in files}
    ok = not mismatched and len(methods) == 6
    _check("criterion 15 (end-to-end determinism)", ok,
           f"{len(files)} WAVs over {len(methods)} systems, {len(mismatched)} differ", elapsed, 1800)
