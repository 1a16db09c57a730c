"""Parameter layout and seeded initialization."""

from __future__ import annotations

import numpy as np

from .config import ModelConfig

Params = dict[str, np.ndarray]


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, hid = cfg.d_model, cfg.lstm_hidden
    shapes: dict[str, tuple[int, ...]] = {
        "speaker_emb": (cfg.speaker_count, d),
        "phoneme_emb": (cfg.phoneme_vocab, d),
        "fusion_token": (d,),
        "proj_speech.w": (cfg.speech_dim, d),
        "proj_speech.b": (d,),
        "proj_listener.w": (hid, d),
        "proj_listener.b": (d,),
        "head.w": (d, cfg.out_dim),
        "head.b": (cfg.out_dim,),
    }
    for layer in range(cfg.lstm_layers):
        n_in = cfg.listener_dim if layer == 0 else hid
        shapes[f"lstm.{layer}.w_ih"] = (n_in, 4 * hid)
        shapes[f"lstm.{layer}.w_hh"] = (hid, 4 * hid)
        shapes[f"lstm.{layer}.b"] = (4 * hid,)
    for k in range(cfg.blocks_k):
        p = f"block.{k}."
        for name in ("ln1", "ln2"):
            shapes[p + name + ".gain"] = (d,)
            shapes[p + name + ".bias"] = (d,)
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + "attn." + name] = (d, d)
            shapes[p + "attn.b" + name[1]] = (d,)
        shapes[p + "ffn.w1"] = (d, cfg.ffn_mult * d)
        shapes[p + "ffn.b1"] = (cfg.ffn_mult * d,)
        shapes[p + "ffn.w2"] = (cfg.ffn_mult * d, d)
        shapes[p + "ffn.b2"] = (d,)
    return dict(sorted(shapes.items()))


def _fan_in(name: str, cfg: ModelConfig, shape: tuple[int, ...]) -> int:
    if name.startswith("lstm."):
        layer = int(name.split(".")[1])
        return cfg.listener_dim if layer == 0 and name.endswith("w_ih") else cfg.lstm_hidden
    if name in ("speaker_emb", "phoneme_emb", "fusion_token"):
        return cfg.d_model
    if len(shape) == 2:
        return shape[0]
    # Biases share the fan-in of their weight matrix.
    if name == "proj_speech.b":
        return cfg.speech_dim
    if name == "proj_listener.b":
        return cfg.lstm_hidden
    if name.endswith("ffn.b2"):
        return cfg.ffn_mult * cfg.d_model
    return cfg.d_model


def init_params(cfg: ModelConfig, seed: int) -> Params:
    """Uniform(+-1/sqrt(fan_in)) everywhere except layer norms (gain 1, bias 0)."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".gain"):
            params[name] = np.ones(shape)
        elif name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(_fan_in(name, cfg, shape))
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def zeros_like(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_params(params: Params, cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise ValueError(f"parameter names mismatch: missing {missing}, unexpected {extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(f"{name}: expected shape {shape}, got {params[name].shape}")
