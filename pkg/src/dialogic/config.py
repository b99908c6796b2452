"""Pipeline configuration: defaults < JSON file < command-line flags."""

from __future__ import annotations

import copy
import json
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from dialogic.corpus import INSTRUCTIONS
from dialogic.models.lstm import TrainConfig
from dialogic.vad import VadConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "out": "run",
    "paths": {
        "audio_dir": "audio",
        "transcripts": "transcripts.jsonl",
        "segments_dir": "{out}/segments",
        "utterances_dir": "{out}/utterances",
        "datasets_dir": "{out}/data",
        "embeddings": "{out}/embeddings.txt",
        "models_dir": "{out}/models",
        "reports_dir": "{out}/reports",
        "timeline_dir": "{out}/timeline",
    },
    "vad": asdict(VadConfig()),
    "asr": {
        "mode": "offline",
        "endpoint": None,
        "timeout_ms": 5000,
        "max_retries": 2,
        "max_in_flight": 4,
        "backoff_ms": 100,
    },
    "data": {"sentences_per_type": 2940, "positive_fraction": 0.5},
    "split": {"ratios": [0.8, 0.1, 0.1]},
    "embeddings": {
        "dim": 64, "window": 2, "negatives": 5, "epochs": 5,
        "learning_rate": 0.025, "min_count": 1,
    },
    "train": {k: v for k, v in asdict(TrainConfig()).items() if k != "seed"},
    "baselines": {
        "logreg": {"l2": 1e-3, "epochs": 500, "lr": 0.5},
        "svm": {"c": 1.0, "epochs": 500, "lr": 0.5},
        "gbdt": {"n_trees": 100, "max_depth": 3, "shrinkage": 0.1},
    },
    "thresholds": {t.value: 0.5 for t in INSTRUCTIONS},
    "gradcheck": {"instances": 20, "max_dim": 8, "max_hidden": 8, "max_len": 10,
                  "epsilon": 1e-5, "tolerance": 1e-4},
}


def _merge(base, override, where=""):
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value
    return base


def _parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def set_dotted(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if k not in node or not isinstance(node[k], dict):
            raise ConfigError(f"unknown config key {dotted}")
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {dotted}")
    node[keys[-1]] = value


class PipelineConfig:
    """Resolved configuration with typed accessors per stage."""

    def __init__(self, raw: dict, base_dir: Path):
        self.raw = raw
        self.base_dir = base_dir
        ratios = raw["split"]["ratios"]
        if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
            raise ConfigError(f"split ratios must be three values summing to 1, got {ratios}")
        try:
            self.vad = VadConfig(**raw["vad"])
            self.train = TrainConfig(seed=self.stage_seed("train"), **raw["train"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path=None, overrides=None, seed=None, out=None) -> "PipelineConfig":
        raw = copy.deepcopy(DEFAULTS)
        base_dir = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                doc = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
            _merge(raw, doc)
            base_dir = path.parent.resolve()
        for item in overrides or ():
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, value = item.split("=", 1)
            set_dotted(raw, key, _parse_value(value))
        if seed is not None:
            raw["seed"] = seed
        if out is not None:
            raw["out"] = str(Path(out).resolve())
        return cls(raw, base_dir)

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def stage_seed(self, stage: str, *extra: int) -> int:
        """Deterministic per-stage seed derived from the root seed."""
        seq = np.random.SeedSequence([self.seed, zlib.crc32(stage.encode()), *extra])
        return int(seq.generate_state(1)[0])

    def path(self, name: str) -> Path:
        out = self.raw["out"]
        template = self.raw["paths"][name]
        p = Path(template.replace("{out}", out))
        return p if p.is_absolute() else self.base_dir / p

    def asr(self, mode=None, endpoint=None):
        from dialogic.transcription import AsrBackendConfig

        opts = dict(self.raw["asr"])
        if mode:
            opts["mode"] = mode
        if endpoint:
            opts["endpoint"] = endpoint
        transcript = str(self.path("transcripts")) if opts["mode"] == "offline" else None
        try:
            return AsrBackendConfig(transcript_path=transcript, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def section(self, name):
        return self.raw[name]

    def as_dict(self):
        return copy.deepcopy(self.raw)


