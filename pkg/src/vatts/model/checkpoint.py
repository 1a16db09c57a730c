"""Trained-model bundle and its JSON checkpoint.

A checkpoint is one JSON document with lexicographically sorted keys and
parameters as row-major nested lists; serializing the same model twice is
byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ModelConfig, TrainConfig
from .params import Params, check_params, param_shapes

SCHEMA_VERSION = 1
_STD_FLOOR = 1e-6


@dataclass
class Normalizer:
    """Per-column standardization of speech and listener inputs, fitted on training data."""

    speech_mean: np.ndarray
    speech_std: np.ndarray
    listener_mean: np.ndarray
    listener_std: np.ndarray

    @classmethod
    def identity(cls, cfg: ModelConfig) -> "Normalizer":
        return cls(
            np.zeros(cfg.speech_dim), np.ones(cfg.speech_dim), np.zeros(cfg.listener_dim), np.ones(cfg.listener_dim)
        )

    @classmethod
    def fit(cls, speech_rows: np.ndarray, listener_rows: np.ndarray, cfg: ModelConfig) -> "Normalizer":
        def stats(rows, dim):
            if len(rows) == 0:
                return np.zeros(dim), np.ones(dim)
            std = rows.std(axis=0)
            return rows.mean(axis=0), np.where(std > _STD_FLOOR, std, 1.0)

        sm, ss = stats(np.asarray(speech_rows).reshape(-1, cfg.speech_dim), cfg.speech_dim)
        lm, ls = stats(np.asarray(listener_rows).reshape(-1, cfg.listener_dim), cfg.listener_dim)
        return cls(sm, ss, lm, ls)

    def speech(self, x):
        return (np.asarray(x, dtype=np.float64) - self.speech_mean) / self.speech_std

    def listener(self, x):
        return (np.asarray(x, dtype=np.float64) - self.listener_mean) / self.listener_std

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("speech_mean", "speech_std", "listener_mean", "listener_std")}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("speech_mean", "speech_std", "listener_mean", "listener_std")))


@dataclass
class ProsodyModel:
    cfg: ModelConfig
    params: Params
    normalizer: Normalizer
    vocab: list[str] = field(default_factory=list)
    seed: int = 0
    train_cfg: TrainConfig | None = None

    def phoneme_id(self, symbol: str) -> int:
        try:
            return self.vocab.index(symbol)
        except ValueError:
            raise ValueError(f"unknown phoneme {symbol!r}") from None

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model_config": self.cfg.to_dict(),
            "train_config": self.train_cfg.to_dict() if self.train_cfg else None,
            "seed": self.seed,
            "vocab": list(self.vocab),
            "normalizer": self.normalizer.to_dict(),
            "params": {k: self.params[k].tolist() for k in sorted(self.params)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProsodyModel":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported checkpoint schema {d.get('schema_version')!r}")
        cfg = ModelConfig.from_dict(d["model_config"])
        params = {k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()}
        # Zero-size tensors lose their shape in JSON.
        for name, shape in param_shapes(cfg).items():
            if name in params and params[name].size == 0:
                params[name] = params[name].reshape(shape)
        check_params(params, cfg)
        tc = TrainConfig.from_dict(d["train_config"]) if d.get("train_config") else None
        return cls(cfg, params, Normalizer.from_dict(d["normalizer"]), list(d.get("vocab", [])), int(d["seed"]), tc)


def dumps(model: ProsodyModel) -> str:
    return json.dumps(model.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def save_checkpoint(path, model: ProsodyModel) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_checkpoint(path) -> ProsodyModel:
    return ProsodyModel.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
