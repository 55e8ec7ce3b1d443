"""Experiment configuration: a TOML (or JSON) file merged over a complete default tree."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

METHODS = ("RNN-Wo", "RGA-Wo", "SAR-Wo", "SGA-Wo", "SAR-Pr", "SAR-Wa")

DEFAULTS: dict = {
    "seed": 0,
    "manifest": "corpus/manifest.json",
    "output_dir": "out",
    "methods": list(METHODS),
    "workers": 1,
    "analysis": {
        "frame_rate": 200.0,
        "frame_length": 512,
        "window": "hann",
        "mgc_order": 30,
        "warp_alpha": 0.42,
        "bap_bands": 25,
        "f0_min": 55.0,
        "f0_max": 600.0,
        "voicing_threshold": 0.3,
        "silence_db": -60.0,
        "f0_levels": 255,
    },
    "acoustic": {
        "ff": [64, 64],
        "bi": [32],
        "uni": [32],
        "mgc_ar_order": 1,
        "bap_ar_order": 0,
        "steps": 400,
        "optimizer": "adam",
        "learning_rate": 0.003,
        "clip_norm": 5.0,
    },
    "f0_model": {
        "ff": 64,
        "bi": 32,
        "ar_hidden": 64,
        "steps": 300,
        "optimizer": "adam",
        "learning_rate": 0.003,
        "clip_norm": 5.0,
    },
    "gan": {
        "channels": 32,
        "g_layers": 3,
        "d_layers": 2,
        "kernel": 5,
        "anchor_weight": 10.0,
        "steps": 400,
        "optimizer": "adam",
        "learning_rate": 0.01,
        "momentum": 0.5,
        "clip_norm": 5.0,
    },
    "wavenet": {
        "sample_rate": 16000,
        "blocks": 8,
        "cycle": 8,
        "channels": 16,
        "skip_channels": 32,
        "post_channels": 32,
        "n_levels": 256,
        "f0_embed": 8,
        "steps": 300,
        "crop": 1600,
        "optimizer": "adam",
        "learning_rate": 0.003,
        "clip_norm": 5.0,
        "voiced_mode": "greedy",
    },
    "griffin_lim": {
        "iterations": 100,
        "init_phase": "zero",
    },
    "synthesis": {
        "split": "test",
        "wav_subtype": "float32",
    },
    "normalize": {
        "target_dbov": -26.0,
    },
    "report": {
        "ms_dim": 11,
        "ms_fft_size": 512,
        "if_utterances": [],
        "if_frame_length": 512,
        "if_hop": 80,
    },
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        key = f"{path}{k}"
        if k not in base:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be a table")
            out[k] = _merge(base[k], v, key + ".")
        else:
            out[k] = v
    return out


def _leaves(d: dict, path: str = ""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _leaves(v, f"{path}{k}.")
        else:
            yield f"{path}{k}"


def hidden_defaults(file_values: dict) -> list[str]:
    """Dotted keys that take their value from DEFAULTS because the file leaves them out."""
    present = set(_leaves(file_values))
    return [k for k in _leaves(DEFAULTS) if k not in present]


def parse_text(text: str, suffix: str = ".toml") -> dict:
    if suffix == ".json" or text.lstrip().startswith("{"):
        return json.loads(text)
    return tomllib.loads(text)


class ExperimentConfig:
    def __init__(self, values: dict, path: Path | None = None, file_values: dict | None = None):
        self.values = values
        self.path = path
        self.file_values = file_values if file_values is not None else values
        for m in values["methods"]:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = parse_text(path.read_text(), path.suffix)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(_merge(DEFAULTS, raw), path, raw)

    @classmethod
    def from_dict(cls, values: dict) -> "ExperimentConfig":
        return cls(_merge(DEFAULTS, values), None, values)

    def __getitem__(self, key):
        return self.values[key]

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path else Path.cwd()

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.values["output_dir"])

    @property
    def manifest_path(self) -> Path:
        return self.resolve(self.values["manifest"])

    def with_overrides(self, seed=None, workers=None) -> "ExperimentConfig":
        values = copy.deepcopy(self.values)
        if seed is not None:
            values["seed"] = int(seed)
        if workers is not None:
            values["workers"] = int(workers)
        return ExperimentConfig(values, self.path, self.file_values)

    def section_hash(self, *sections: str) -> str:
        blob = json.dumps({s: self.values[s] for s in sections}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def dump_toml(values: dict) -> str:
    return tomli_w.dumps(values)


def write_default_config(path, **overrides) -> Path:
    """Write a config file that spells out every key (no hidden defaults)."""
    values = _merge(DEFAULTS, overrides)
    path = Path(path)
    path.write_text(dump_toml(values))
    return path
