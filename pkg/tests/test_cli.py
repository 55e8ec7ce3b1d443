import json
import os

import numpy as np
import pytest

from vocoderbench import pipeline
from vocoderbench.cli import main
from vocoderbench.config import ExperimentConfig, write_default_config
from vocoderbench.corpus import DatasetManifest, ManifestError, make_toy_corpus
from vocoderbench.dsp import Waveform
from vocoderbench.store import read_acoustic
from vocoderbench.wavio import read_wav, write_wav

FAST = {
    "acoustic": {"ff": [16], "bi": [8], "uni": [8], "steps": 20},
    "f0_model": {"ff": 16, "bi": 8, "ar_hidden": 16, "steps": 20},
    "gan": {"channels": 8, "steps": 10},
    "wavenet": {"blocks": 4, "cycle": 4, "channels": 4, "skip_channels": 8, "post_channels": 8,
                "f0_embed": 4, "steps": 5, "crop": 400},
    "griffin_lim": {"iterations": 5},
}


def _json_lines(err: str) -> list[dict]:
    return [json.loads(line) for line in err.splitlines() if line.startswith("{")]


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    make_toy_corpus(root / "corpus", 4, seconds=0.5, seed=1, splits=(2, 1, 1))
    return write_default_config(root / "config.toml", **FAST)


def test_usage_errors_exit_2(toy, capsys):
    for argv in ([], ["extract"], ["bogus", "--config", str(toy)],
                 ["extract", "--config", str(toy), "--workers", "many"]):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2
    assert main(["synthesize", "--config", str(toy), "--method", "SAR-Xx"]) == 2
    assert main(["extract", "--config", str(toy.parent / "missing.toml")]) == 2
    assert any(r["level"] == "error" for r in _json_lines(capsys.readouterr().err))


def test_hidden_defaults_warning(tmp_path, capsys):
    (tmp_path / "c.toml").write_text('manifest = "nowhere.json"\n')
    assert main(["extract", "--config", str(tmp_path / "c.toml")]) == 2  # manifest missing
    logs = _json_lines(capsys.readouterr().err)
    warn = [r for r in logs if r["msg"] == "config relies on defaults"]
    assert warn and "analysis.warp_alpha" in warn[0]["keys"]


def test_full_cli_run(toy, capsys):
    cfg = ExperimentConfig.load(toy)
    layout = pipeline.Layout(cfg)
    assert main(["extract", "--config", str(toy)]) == 0
    stamps = {p: p.stat().st_mtime_ns for p in layout.features.glob("*.vbaf")}
    assert len(stamps) == 4 and layout.codebook.exists()
    assert main(["extract", "--config", str(toy)]) == 0
    assert {p: p.stat().st_mtime_ns for p in layout.features.glob("*.vbaf")} == stamps

    assert main(["train", "--config", str(toy)]) == 0
    ckpts = {p: p.stat().st_mtime_ns for p in layout.models.glob("*.vbck")}
    assert {p.stem for p in ckpts} == {"rnn", "sar", "f0", "gan_rnn", "gan_sar", "wavenet"}
    assert main(["train", "--config", str(toy)]) == 0
    assert {p: p.stat().st_mtime_ns for p in layout.models.glob("*.vbck")} == ckpts

    assert main(["synthesize", "--config", str(toy)]) == 0
    logs = {m: json.loads((layout.method_dir(m) / "toy003.log.json").read_text()) for m in cfg["methods"]}
    assert len({logs[m]["acoustic_sha256"] for m in ("SAR-Wo", "SAR-Pr", "SAR-Wa")}) == 1
    assert logs["RNN-Wo"]["acoustic_sha256"] != logs["SAR-Wo"]["acoustic_sha256"]
    assert len(logs["SAR-Pr"]["griffin_lim_errors"]) == 6
    for m in cfg["methods"]:
        w = read_wav(layout.method_dir(m) / "toy003.wav")
        assert pipeline.dbov(w.samples) == pytest.approx(-26.0, abs=0.01)

    assert main(["report", "--config", str(toy), "--ids", "toy003"]) == 0
    summary = json.loads((layout.report / "summary.json").read_text())
    assert set(summary["gv"]) == {"natural", *cfg["methods"]}
    assert "sar_gv_ge_rnn_fraction" in summary
    assert (layout.report / "SAR-Wo" / "toy003.gv.csv").exists()
    assert (layout.report / "SAR-Wo" / "toy003.ms.csv").exists()
    assert (layout.report / "gv.csv").exists()


def test_normalize_command(tmp_path):
    cfg_path = write_default_config(tmp_path / "c.toml")
    p = tmp_path / "x.wav"
    write_wav(p, Waveform(0.001 * np.random.default_rng(0).standard_normal(4000), 16000), "float32")
    assert main(["normalize", "--config", str(cfg_path), str(p)]) == 0
    assert pipeline.dbov(read_wav(p).samples) == pytest.approx(-26.0, abs=0.01)
    write_wav(p, Waveform(np.zeros(100), 16000), "float32")
    assert main(["normalize", "--config", str(cfg_path), str(p)]) == 1


def test_truncated_wav_is_reported_and_skipped(tmp_path):
    make_toy_corpus(tmp_path / "corpus", 3, seconds=0.5, seed=2, splits=(2, 0, 1))
    bad = tmp_path / "corpus" / "wav" / "toy002.wav"
    bad.write_bytes(bad.read_bytes()[:500])
    cfg_path = write_default_config(tmp_path / "c.toml")
    assert main(["extract", "--config", str(cfg_path)]) == 1
    out = tmp_path / "out" / "features"
    failures = json.loads((out / "extract_failures.json").read_text())
    assert list(failures) == ["toy002"] and "truncated" in failures["toy002"]
    assert sorted(p.stem for p in out.glob("*.vbaf")) == ["toy000", "toy001"]


def test_normalize_level_edge_cases(caplog):
    with pytest.raises(ValueError):
        pipeline.normalize_level(Waveform(np.zeros(10), 16000))
    spiky = np.zeros(1000)
    spiky[0] = 1.0
    out = pipeline.normalize_level(Waveform(spiky, 16000), -26.0)
    assert np.max(np.abs(out.samples)) > 1.0
    assert "exceeds full scale" in caplog.text


def test_manifest_validation(tmp_path):
    make_toy_corpus(tmp_path, 2, seconds=0.2, seed=0, splits=(1, 0, 1))
    m = DatasetManifest.load(tmp_path / "manifest.json")
    assert [u.split for u in m.utterances] == ["train", "test"]
    raw = json.loads((tmp_path / "manifest.json").read_text())
    raw["utterances"].append(dict(raw["utterances"][0]))
    (tmp_path / "dup.json").write_text(json.dumps(raw))
    with pytest.raises(ManifestError, match="duplicate"):
        DatasetManifest.load(tmp_path / "dup.json")
    os.remove(m.utterances[0].wav)
    with pytest.raises(ManifestError, match="missing"):
        DatasetManifest.load(tmp_path / "manifest.json")


def test_toy_corpus_features_align(tmp_path):
    make_toy_corpus(tmp_path / "corpus", 2, seconds=0.5, seed=3, splits=(2, 0, 0))
    cfg = ExperimentConfig.load(write_default_config(tmp_path / "c.toml"))
    assert pipeline.cmd_extract(cfg).exit_code == 0
    from vocoderbench.store import read_linguistic
    for u in DatasetManifest.load(cfg.manifest_path).utterances:
        assert len(read_linguistic(u.linguistic)) == len(read_acoustic(pipeline.Layout(cfg).feature(u.id)))


def test_parallel_extract_matches_serial(tmp_path):
    make_toy_corpus(tmp_path / "corpus", 3, seconds=0.5, seed=4, splits=(3, 0, 0))
    serial = write_default_config(tmp_path / "a.toml", output_dir="out_a")
    parallel = write_default_config(tmp_path / "b.toml", output_dir="out_b", workers=2)
    assert main(["extract", "--config", str(serial)]) == 0
    assert main(["extract", "--config", str(parallel)]) == 0
    for p in sorted((tmp_path / "out_a" / "features").glob("*.vbaf")):
        assert p.read_bytes() == (tmp_path / "out_b" / "features" / p.name).read_bytes()
