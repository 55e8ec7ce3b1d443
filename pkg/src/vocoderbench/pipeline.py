"""Experiment orchestration: extract -> train -> synthesize -> normalize -> report."""

from __future__ import annotations

import hashlib
import json
import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acoustic import (AcousticModel, F0Model, GanPostfilter, Normalizer, train_acoustic, train_f0,
                       train_gan)
from .config import ExperimentConfig
from .corpus import DatasetManifest, Utterance
from .dsp import FrameConfig, Waveform, mu_law_decode, mu_law_encode, resample
from .features import (AcousticFrameSequence, AnalysisConfig, BandAperiodicity, Cepstra, F0Codebook,
                       analyze, build_f0_codebook, cepstra_to_amplitude, dequantize_f0, quantize_f0)
from .metrics import (global_variance, if_deviation_std, instantaneous_frequency,
                      log_spectral_distortion, modulation_spectrum, write_csv, write_gv_csv, write_json, write_ms_csv)
from .nn import OptimizerConfig, load_checkpoint, save_checkpoint
from .store import read_acoustic, read_linguistic, sidecar_path, write_acoustic
from .vocoder import GriffinLimConfig, SynthesisConfig, phase_recovery_enhance, source_filter_synthesize
from .wavenet import Wavenet, WavenetConfig, train_wavenet, upsample_conditioning
from .wavio import WavFormatError, read_wav, write_wav

log = logging.getLogger("vocoderbench")

# models each method needs, in training order
REQUIRES = {
    "RNN-Wo": ("f0", "rnn"),
    "RGA-Wo": ("f0", "rnn", "gan_rnn"),
    "SAR-Wo": ("f0", "sar"),
    "SGA-Wo": ("f0", "sar", "gan_sar"),
    "SAR-Pr": ("f0", "sar"),
    "SAR-Wa": ("f0", "sar", "wavenet"),
}
# fixed offsets so each model draws from its own seed
SEED_OFFSETS = {"rnn": 11, "sar": 11, "f0": 23, "gan_rnn": 37, "gan_sar": 37, "wavenet": 53}


class PipelineError(RuntimeError):
    pass


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def utt_seed(base: int, uid: str) -> int:
    return (int(base) * 1_000_003 + zlib.crc32(uid.encode())) % (2 ** 32)


def _map(fn, items: list, workers: int) -> list:
    """Apply ``fn`` to every item, in order; a process pool when workers > 1."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


class Layout:
    """Where everything lives under the output directory."""

    def __init__(self, cfg: ExperimentConfig):
        self.root = cfg.output_dir
        self.features = self.root / "features"
        self.models = self.root / "models"
        self.synth = self.root / "synth"
        self.report = self.root / "report"

    def feature(self, uid: str) -> Path:
        return self.features / f"{uid}.vbaf"

    @property
    def codebook(self) -> Path:
        return self.features / "f0_codebook.json"

    def model(self, name: str) -> Path:
        return self.models / f"{name}.vbck"

    def method_dir(self, method: str) -> Path:
        return self.synth / method


def analysis_config(cfg: ExperimentConfig, sample_rate: int) -> AnalysisConfig:
    a = cfg["analysis"]
    hop = sample_rate / a["frame_rate"]
    if abs(hop - round(hop)) > 1e-9:
        raise PipelineError(f"sample rate {sample_rate} is not a multiple of frame rate {a['frame_rate']}")
    return AnalysisConfig(int(a["frame_length"]), int(round(hop)), a["window"], int(a["mgc_order"]),
                          float(a["warp_alpha"]), int(a["bap_bands"]), float(a["f0_min"]),
                          float(a["f0_max"]), float(a["voicing_threshold"]), float(a["silence_db"]))


def load_codebook(layout: Layout) -> F0Codebook:
    if not layout.codebook.exists():
        raise PipelineError("no F0 codebook; run extract first")
    d = json.loads(layout.codebook.read_text())
    return F0Codebook(d["log_min"], d["log_max"], d["n_levels"])


# ---------------------------------------------------------------------------
# extract


@dataclass
class StepResult:
    written: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: dict[str, str] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def _analyze_job(job):
    uid, wav_path, cfg_values = job
    cfg = ExperimentConfig.from_dict(cfg_values)
    try:
        data = Path(wav_path).read_bytes()
        wave = read_wav(wav_path)
        acfg = analysis_config(cfg, wave.sample_rate)
        feats = _as_stored(analyze(wave, acfg))
    except (OSError, WavFormatError, ValueError, PipelineError) as exc:
        return uid, None, f"{type(exc).__name__}: {exc}"
    return uid, (feats, acfg.to_dict(), sha256_bytes(data), wave.sample_rate), None


def _as_stored(f: AcousticFrameSequence) -> AcousticFrameSequence:
    # round to the store's float32 so a fresh analysis and a cached file agree exactly
    r = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)
    return AcousticFrameSequence(Cepstra(r(f.mgc.frames), f.mgc.warp_alpha), BandAperiodicity(r(f.bap.frames)),
                                 type(f.f0)(r(f.f0.f0), f.f0.frame_rate), f.qf0)


def _sidecar(path) -> dict | None:
    side = sidecar_path(path)
    if not side.exists():
        return None
    try:
        return json.loads(side.read_text())
    except ValueError:
        return None


def cmd_extract(cfg: ExperimentConfig) -> StepResult:
    """Analyse every manifest WAV into the feature store.

    Files whose WAV content, analysis settings and F0 codebook are unchanged are
    left alone. A corrupt WAV is reported and skipped; the rest still run.
    """
    manifest = DatasetManifest.load(cfg.manifest_path)
    layout = Layout(cfg)
    layout.features.mkdir(parents=True, exist_ok=True)
    res = StepResult()
    analysis_key = cfg.section_hash("analysis")

    cached, jobs = {}, []
    for u in manifest.utterances:
        side = _sidecar(layout.feature(u.id))
        try:
            wav_hash = sha256_bytes(u.wav.read_bytes())
        except OSError as exc:
            res.failed[u.id] = f"OSError: {exc}"
            continue
        if side and side.get("wav_sha256") == wav_hash and side.get("analysis_key") == analysis_key:
            try:
                cached[u.id] = (read_acoustic(layout.feature(u.id)), side)
                continue
            except ValueError:
                pass
        jobs.append((u.id, str(u.wav), cfg.values))

    fresh = {}
    for uid, out, err in _map(_analyze_job, jobs, int(cfg["workers"])):
        if err is not None:
            res.failed[uid] = err
            log.error("extract failed", extra={"utterance": uid, "error": err})
        else:
            fresh[uid] = out

    train_f0 = [f.f0.f0 for uid, (f, _) in cached.items() if manifest.by_id(uid).split == "train"]
    train_f0 += [out[0].f0.f0 for uid, out in fresh.items() if manifest.by_id(uid).split == "train"]
    if not train_f0:
        raise PipelineError("no training utterances could be analysed")
    codebook = build_f0_codebook(train_f0, n_levels=int(cfg["analysis"]["f0_levels"]))
    cb_json = json.dumps(codebook.to_dict(), sort_keys=True)
    cb_hash = sha256_bytes(cb_json.encode())
    if not layout.codebook.exists() or layout.codebook.read_text() != cb_json:
        layout.codebook.write_text(cb_json)

    for u in manifest.utterances:
        if u.id in cached:
            feats, side = cached[u.id]
            if side.get("codebook_sha256") == cb_hash:
                res.skipped.append(u.id)
                continue
            wav_hash, acfg, sr = side["wav_sha256"], side["analysis"], side["sample_rate"]
        elif u.id in fresh:
            feats, acfg, wav_hash, sr = fresh[u.id]
        else:
            continue
        feats = AcousticFrameSequence(feats.mgc, feats.bap, feats.f0, quantize_f0(feats.f0, codebook))
        write_acoustic(layout.feature(u.id), feats, {
            "utterance": u.id, "wav_sha256": wav_hash, "analysis": acfg, "analysis_key": analysis_key,
            "codebook_sha256": cb_hash, "sample_rate": sr})
        res.written.append(u.id)
    if res.failed:
        write_json(layout.features / "extract_failures.json", res.failed)
    log.info("extract done", extra={"written": len(res.written), "skipped": len(res.skipped),
                                    "failed": sorted(res.failed)})
    return res


# ---------------------------------------------------------------------------
# train


@dataclass
class Example:
    uid: str
    ling: np.ndarray
    feats: AcousticFrameSequence

    @property
    def acoustic(self) -> np.ndarray:
        return np.concatenate([self.feats.mgc.frames, self.feats.bap.frames], axis=1)


def load_examples(cfg: ExperimentConfig, utts: list[Utterance]) -> list[Example]:
    layout = Layout(cfg)
    out = []
    for u in utts:
        path = layout.feature(u.id)
        if not path.exists():
            raise PipelineError(f"missing features for utterance {u.id!r}; run extract first")
        feats = read_acoustic(path)
        ling = read_linguistic(u.linguistic)
        if len(ling) != len(feats):
            raise PipelineError(f"{u.id}: {len(ling)} linguistic frames vs {len(feats)} acoustic frames")
        out.append(Example(u.id, ling, feats))
    return out


def _opt(section: dict) -> OptimizerConfig:
    return OptimizerConfig(section["optimizer"], float(section["learning_rate"]),
                           momentum=float(section.get("momentum", 0.9)),
                           clip_norm=float(section["clip_norm"]))


def _data_hash(examples: list[Example], layout: Layout) -> str:
    h = hashlib.sha256()
    for ex in examples:
        h.update(layout.feature(ex.uid).read_bytes())
        h.update(ex.ling.tobytes())
    return h.hexdigest()


def _write_losses(path: Path, losses) -> None:
    if losses and isinstance(losses[0], dict):
        keys = sorted(losses[0])
        write_csv(path, ["step", *keys], [(i, *(float(l[k]) for k in keys)) for i, l in enumerate(losses)])
    else:
        write_csv(path, ["step", "loss"], [(i, float(v)) for i, v in enumerate(losses)])


class Trainer:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.layout = Layout(cfg)
        self.manifest = DatasetManifest.load(cfg.manifest_path)
        self.train = load_examples(cfg, self.manifest.split("train"))
        if not self.train:
            raise PipelineError("manifest has no training utterances")
        self.data_hash = _data_hash(self.train, self.layout)
        self.hashes: dict[str, str] = {}

    def model_hash(self, name: str) -> str:
        section = {"rnn": "acoustic", "sar": "acoustic", "f0": "f0_model", "gan_rnn": "gan",
                   "gan_sar": "gan", "wavenet": "wavenet"}[name]
        parts = {"name": name, "seed": self.cfg["seed"], "data": self.data_hash,
                 "config": self.cfg.section_hash(section, "analysis")}
        if name.startswith("gan_"):
            parts["upstream"] = self.hashes[name[4:]]
        return sha256_bytes(json.dumps(parts, sort_keys=True).encode())

    def ensure(self, name: str):
        """Train ``name`` unless an up-to-date checkpoint exists; returns the loaded model."""
        h = self.model_hash(name)
        self.hashes[name] = h
        path = self.layout.model(name)
        meta_path = path.with_suffix(".json")
        if path.exists() and meta_path.exists() and json.loads(meta_path.read_text()).get("hash") == h:
            log.info("model up to date", extra={"model": name})
            return load_checkpoint(path)
        self.layout.models.mkdir(parents=True, exist_ok=True)
        log.info("training", extra={"model": name})
        model, losses = getattr(self, f"_train_{name.split('_')[0]}")(name)
        digest = save_checkpoint(path, model)
        _write_losses(path.with_suffix(".loss.csv"), losses)
        meta_path.write_text(json.dumps({"hash": h, "sha256": digest, "steps": len(losses)}, indent=2))
        return load_checkpoint(path)

    def _seed(self, name):
        return int(self.cfg["seed"]) + SEED_OFFSETS[name]

    def _train_rnn(self, name):
        return self._train_acoustic(name, None)

    def _train_sar(self, name):
        a = self.cfg["acoustic"]
        return self._train_acoustic(name, {"mgc": int(a["mgc_ar_order"]), "bap": int(a["bap_ar_order"])})

    def _train_acoustic(self, name, ar_orders):
        a = self.cfg["acoustic"]
        ex0 = self.train[0]
        m, b = ex0.feats.mgc.order, ex0.feats.bap.frames.shape[1]
        model = AcousticModel(ex0.ling.shape[1], (("mgc", m), ("bap", b)), ar_orders, a["ff"], a["bi"],
                              a["uni"], self._seed(name),
                              Normalizer.fit([e.ling for e in self.train]),
                              Normalizer.fit([e.acoustic for e in self.train]))
        losses = train_acoustic(model, [(e.ling, e.acoustic) for e in self.train], int(a["steps"]),
                                _opt(a), self._seed(name))
        return model, losses

    def _train_f0(self, name):
        s = self.cfg["f0_model"]
        ex0 = self.train[0]
        model = F0Model(ex0.ling.shape[1], int(self.cfg["analysis"]["f0_levels"]) + 1, int(s["ff"]),
                        int(s["bi"]), int(s["ar_hidden"]), self._seed(name),
                        Normalizer.fit([e.ling for e in self.train]))
        losses = train_f0(model, [(e.ling, e.feats.qf0) for e in self.train], int(s["steps"]), _opt(s),
                          self._seed(name))
        return model, losses

    def _train_gan(self, name):
        s = self.cfg["gan"]
        upstream = load_checkpoint(self.layout.model(name[4:]))
        ex0 = self.train[0]
        m, b = ex0.feats.mgc.order, ex0.feats.bap.frames.shape[1]
        pf = GanPostfilter(m, b, int(s["channels"]), int(s["g_layers"]), int(s["d_layers"]),
                           int(s["kernel"]), float(s["anchor_weight"]), self._seed(name),
                           Normalizer.fit([e.feats.mgc.frames for e in self.train]))
        pairs = [(e.acoustic, upstream.generate(e.ling)) for e in self.train]
        return pf, train_gan(pf, pairs, int(s["steps"]), _opt(s), self._seed(name))

    def _train_wavenet(self, name):
        s = self.cfg["wavenet"]
        wcfg = wavenet_config(self.cfg, self.train[0].feats.mgc.order)
        model = Wavenet(wcfg, Normalizer.fit([e.feats.mgc.frames for e in self.train]))
        data = []
        for e in self.train:
            wave = read_wav(self.manifest.by_id(e.uid).wav)
            levels = wavenet_targets(self.cfg, wave, len(e.feats))
            data.append((levels, upsample_conditioning(e.feats, int(s["sample_rate"]))))
        losses = train_wavenet(model, data, int(s["steps"]), int(s["crop"]), _opt(s), self._seed(name))
        return model, losses


def wavenet_config(cfg: ExperimentConfig, mgc_dim: int) -> WavenetConfig:
    s = cfg["wavenet"]
    return WavenetConfig(int(s["blocks"]), int(s["cycle"]), int(s["channels"]), int(s["skip_channels"]),
                         int(s["post_channels"]), int(s["n_levels"]), mgc_dim,
                         int(cfg["analysis"]["f0_levels"]) + 1, int(s["f0_embed"]),
                         int(cfg["seed"]) + SEED_OFFSETS["wavenet"])


def wavenet_offset(cfg: ExperimentConfig, sample_rate: int) -> int:
    """Samples (at the Wavenet rate) between the waveform start and frame 0's repeat span.

    Frame n is centred at n * hop + W / 2 in the analysis signal; its repeated
    conditioning covers n * r .. (n + 1) * r, so the waveform is shifted by
    W / 2 - hop / 2 to line the two up.
    """
    a = cfg["analysis"]
    wn_rate = int(cfg["wavenet"]["sample_rate"])
    hop = sample_rate / a["frame_rate"]
    return int(round((a["frame_length"] / 2 - hop / 2) * wn_rate / sample_rate))


def wavenet_targets(cfg: ExperimentConfig, wave: Waveform, n_frames: int) -> np.ndarray:
    wn_rate = int(cfg["wavenet"]["sample_rate"])
    x = wave.samples if wave.sample_rate == wn_rate else resample(wave.samples, wave.sample_rate, wn_rate)
    off = wavenet_offset(cfg, wave.sample_rate)
    n = n_frames * int(round(wn_rate / cfg["analysis"]["frame_rate"]))
    seg = np.zeros(n)
    avail = x[off:off + n]
    seg[:len(avail)] = avail
    return mu_law_encode(Waveform(seg, wn_rate), n_levels=int(cfg["wavenet"]["n_levels"])).levels


def cmd_train(cfg: ExperimentConfig, methods=None) -> dict[str, str]:
    """Train (or reuse) every model the methods need; returns model name -> checkpoint path."""
    methods = list(methods or cfg["methods"])
    trainer = Trainer(cfg)
    out = {}
    for method in methods:
        if method not in REQUIRES:
            raise PipelineError(f"unknown method {method!r}")
        for name in REQUIRES[method]:
            if name not in out:
                trainer.ensure(name)
                out[name] = str(trainer.layout.model(name))
    return out


# ---------------------------------------------------------------------------
# synthesize


def dbov(x: np.ndarray) -> float:
    """RMS level in dB relative to a full-scale square wave (RMS 1)."""
    return float(10.0 * np.log10(np.mean(np.square(x))))


def normalize_level(wave: Waveform, target_dbov: float = -26.0) -> Waveform:
    x = wave.samples
    if not np.any(x):
        raise ValueError("cannot level-normalize an all-zero signal")
    y = x * 10.0 ** ((target_dbov - dbov(x)) / 20.0)
    n_clip = int(np.sum(np.abs(y) > 1.0))
    if n_clip:
        log.warning("normalized signal exceeds full scale", extra={"clipped_samples": n_clip})
    return Waveform(y, wave.sample_rate)


class Synthesizer:
    def __init__(self, cfg: ExperimentConfig, method: str):
        if method not in REQUIRES:
            raise PipelineError(f"unknown method {method!r}")
        self.cfg, self.method = cfg, method
        self.layout = Layout(cfg)
        self.codebook = load_codebook(self.layout)
        self.models = {}
        for name in REQUIRES[method]:
            path = self.layout.model(name)
            if not path.exists():
                raise PipelineError(f"missing checkpoint for model {name!r} ({path}); run train first")
            self.models[name] = load_checkpoint(path)
        self.acoustic = self.models["sar" if method.startswith(("SAR", "SGA")) else "rnn"]

    def acoustic_features(self, ling: np.ndarray, frame_rate: float, warp_alpha: float):
        qf0 = self.models["f0"].generate(ling)
        f0 = dequantize_f0(qf0, self.codebook, frame_rate)
        a_hat = self.acoustic.generate(ling)
        base_hash = sha256_bytes(np.ascontiguousarray(a_hat).tobytes() + qf0.tobytes())
        gan = self.models.get("gan_sar") or self.models.get("gan_rnn")
        if gan is not None:
            a_hat = gan.apply(a_hat)
        m = self.acoustic.streams[0][1]
        feats = AcousticFrameSequence(Cepstra(a_hat[:, :m], warp_alpha),
                                      BandAperiodicity(np.clip(a_hat[:, m:], 0.0, 1.0)), f0, qf0)
        return feats, base_hash

    def run(self, u: Utterance) -> dict:
        cfg = self.cfg
        ref_path = self.layout.feature(u.id)
        if not ref_path.exists():
            raise PipelineError(f"missing reference features for {u.id!r}")
        ref_side = _sidecar(ref_path) or {}
        sr = int(ref_side.get("sample_rate", cfg["wavenet"]["sample_rate"]))
        acfg = analysis_config(cfg, sr)
        ling = read_linguistic(u.linguistic)
        n_ref = len(read_acoustic(ref_path))
        if len(ling) != n_ref:
            raise PipelineError(f"{u.id}: linguistic frames ({len(ling)}) != reference frames ({n_ref})")
        frame_rate = float(cfg["analysis"]["frame_rate"])
        feats, base_hash = self.acoustic_features(ling, frame_rate, acfg.warp_alpha)
        seed = utt_seed(cfg["seed"], u.id)
        info = {"utterance": u.id, "method": self.method, "acoustic_sha256": base_hash, "frames": len(feats)}
        if self.method.endswith("Wa"):
            wn = self.models["wavenet"]
            wn_rate = int(cfg["wavenet"]["sample_rate"])
            q = wn.generate(upsample_conditioning(feats, wn_rate), cfg["wavenet"]["voiced_mode"], seed)
            body = mu_law_decode(q)
            x = np.concatenate([np.zeros(wavenet_offset(cfg, sr)), np.asarray(body)])
            wave = Waveform(x, wn_rate)
        else:
            scfg = SynthesisConfig(sr, acfg.hop, acfg.frame_length, seed)
            wave = source_filter_synthesize(feats.mgc, feats.f0, feats.bap, scfg)
            if self.method.endswith("Pr"):
                g = cfg["griffin_lim"]
                glc = GriffinLimConfig(int(g["iterations"]), acfg.frame_length, acfg.hop, g["init_phase"],
                                       seed=seed)
                wave, gl = phase_recovery_enhance(wave, glc)
                info["griffin_lim_errors"] = gl.errors
        wave = normalize_level(wave, float(cfg["normalize"]["target_dbov"]))
        out_dir = self.layout.method_dir(self.method)
        out_dir.mkdir(parents=True, exist_ok=True)
        wav_path = out_dir / f"{u.id}.wav"
        write_wav(wav_path, wave, subtype=cfg["synthesis"]["wav_subtype"])
        write_acoustic(out_dir / f"{u.id}.vbaf", feats, {"utterance": u.id, "method": self.method,
                                                          "analysis": {"warp_alpha": acfg.warp_alpha}})
        info.update({"wav": wav_path.name, "sample_rate": wave.sample_rate, "samples": len(wave),
                     "wav_sha256": sha256_bytes(wav_path.read_bytes())})
        write_json(out_dir / f"{u.id}.log.json", info)
        return info


def _synth_job(job):
    cfg_values, cfg_path, method, uid = job
    cfg = ExperimentConfig(cfg_values, Path(cfg_path) if cfg_path else None)
    manifest = DatasetManifest.load(cfg.manifest_path)
    try:
        return uid, Synthesizer(cfg, method).run(manifest.by_id(uid)), None
    except (PipelineError, ValueError, OSError) as exc:
        return uid, None, f"{type(exc).__name__}: {exc}"


def synthesis_ids(cfg: ExperimentConfig, ids=None) -> list[str]:
    manifest = DatasetManifest.load(cfg.manifest_path)
    if ids:
        for uid in ids:
            manifest.by_id(uid)
        return list(ids)
    split = cfg["synthesis"]["split"]
    return [u.id for u in (manifest.utterances if split == "all" else manifest.split(split))]


def cmd_synthesize(cfg: ExperimentConfig, methods=None, ids=None) -> StepResult:
    res = StepResult()
    uids = synthesis_ids(cfg, ids)
    for method in list(methods or cfg["methods"]):
        if method not in REQUIRES:
            raise PipelineError(f"unknown method {method!r}")
        Synthesizer(cfg, method)  # fail early on missing checkpoints
        jobs = [(cfg.values, str(cfg.path) if cfg.path else None, method, uid) for uid in uids]
        for uid, info, err in _map(_synth_job, jobs, int(cfg["workers"])):
            key = f"{method}/{uid}"
            if err:
                res.failed[key] = err
                log.error("synthesis failed", extra={"item": key, "error": err})
            else:
                res.written.append(key)
        log.info("synthesized", extra={"method": method, "utterances": len(uids)})
    return res


# ---------------------------------------------------------------------------
# normalize / report


def cmd_normalize(cfg: ExperimentConfig, paths=None) -> StepResult:
    """Rewrite WAVs at the configured dBov level (default: every synthesized WAV)."""
    res = StepResult()
    if not paths:
        paths = sorted(Layout(cfg).synth.glob("*/*.wav"))
    target = float(cfg["normalize"]["target_dbov"])
    for p in map(Path, paths):
        try:
            wave = normalize_level(read_wav(p), target)
            write_wav(p, wave, subtype=cfg["synthesis"]["wav_subtype"])
            res.written.append(str(p))
        except (OSError, WavFormatError, ValueError) as exc:
            res.failed[str(p)] = f"{type(exc).__name__}: {exc}"
            log.error("normalize failed", extra={"path": str(p), "error": str(exc)})
    return res


def gv_ordering(gv_low: np.ndarray, gv_high: np.ndarray) -> float:
    """Fraction of dimensions where ``gv_high`` >= ``gv_low``."""
    return float(np.mean(np.asarray(gv_high) >= np.asarray(gv_low)))


def cmd_report(cfg: ExperimentConfig, ids=None) -> dict:
    layout = Layout(cfg)
    layout.report.mkdir(parents=True, exist_ok=True)
    rc = cfg["report"]
    uids = synthesis_ids(cfg, ids)
    systems = {"natural": {uid: read_acoustic(layout.feature(uid)) for uid in uids}}
    for method in cfg["methods"]:
        d = layout.method_dir(method)
        got = {uid: read_acoustic(d / f"{uid}.vbaf") for uid in uids if (d / f"{uid}.vbaf").exists()}
        if got:
            systems[method] = got
    summary: dict = {"utterances": uids, "gv": {}, "ms_dim": rc["ms_dim"]}
    rows = []
    for name, feats in systems.items():
        sdir = layout.report / name
        sdir.mkdir(exist_ok=True)
        gv = global_variance([f.mgc.frames for f in feats.values()])
        summary["gv"][name] = gv.mean
        for uid, per in zip(feats, gv.per_utterance):
            write_gv_csv(sdir, uid, per)
            mgc = feats[uid].mgc.frames
            if rc["ms_dim"] < mgc.shape[1]:
                n = max(int(rc["ms_fft_size"]), 1 << int(np.ceil(np.log2(len(mgc)))))
                write_ms_csv(sdir, uid, modulation_spectrum(mgc, int(rc["ms_dim"]), n,
                                                            float(cfg["analysis"]["frame_rate"])))
        rows += [(name, i, float(v)) for i, v in enumerate(gv.mean)]
    write_csv(layout.report / "gv.csv", ["system", "dim", "gv"], rows)

    frame = FrameConfig(int(rc["if_frame_length"]), int(rc["if_hop"]))
    if_summary = {}
    for method in cfg["methods"]:
        for uid in rc["if_utterances"]:
            p = layout.method_dir(method) / f"{uid}.wav"
            if not p.exists():
                continue
            wave = read_wav(p)
            (layout.report / method).mkdir(exist_ok=True)
            ifm = instantaneous_frequency(wave, frame)
            np.savez_compressed(layout.report / method / f"{uid}.if.npz", deviation=ifm.deviation,
                                magnitude=ifm.magnitude)
            if_summary[f"{method}/{uid}"] = if_deviation_std(ifm)
    summary["if_std_hz"] = if_summary

    if "RNN-Wo" in systems and "SAR-Wo" in systems:
        frac = gv_ordering(summary["gv"]["RNN-Wo"], summary["gv"]["SAR-Wo"])
        summary["sar_gv_ge_rnn_fraction"] = frac
        if frac < 0.7:
            log.warning("SAR GV exceeds RNN GV on fewer than 70% of dimensions", extra={"fraction": frac})
    write_json(layout.report / "summary.json", summary)
    return summary


def envelope_lsd(a: AcousticFrameSequence, b: AcousticFrameSequence, n_bins: int = 257) -> float:
    return log_spectral_distortion(cepstra_to_amplitude(a.mgc, n_bins), cepstra_to_amplitude(b.mgc, n_bins))
