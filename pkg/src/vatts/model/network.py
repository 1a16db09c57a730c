"""Visual-aware prosody predictor: listener recurrence, fusion-token attention stack, prosody head.

Per phoneme the attention stack sees five tokens::

    [fusion, speaker, tanh(speech @ Ws + bs), phoneme, tanh(h @ Wh + bh)]

and the head reads the fusion position after the last block. Output order
is (log pitch, log energy, log duration).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .config import ModelConfig
from .params import Params, zeros_like

N_TOKENS = 5


@dataclass
class Utterance:
    """One training/evaluation example with inputs already normalized."""

    speaker: int
    phoneme_ids: np.ndarray
    speech: np.ndarray
    frames: np.ndarray
    cutoffs: list[int]
    targets: np.ndarray | None = None
    mask: np.ndarray | None = None
    uid: str = ""

    def __post_init__(self):
        self.phoneme_ids = np.asarray(self.phoneme_ids, dtype=np.int64)
        self.speech = np.asarray(self.speech, dtype=np.float64)
        self.frames = np.asarray(self.frames, dtype=np.float64)
        self.cutoffs = [int(a) for a in self.cutoffs]
        n = len(self.phoneme_ids)
        if len(self.speech) != n or len(self.cutoffs) != n:
            raise ValueError(
                f"utterance {self.uid!r}: {n} phonemes but {len(self.speech)} speech rows and {len(self.cutoffs)} cutoffs"
            )
        if self.targets is not None:
            self.targets = np.asarray(self.targets, dtype=np.float64)
            self.mask = np.ones(n, bool) if self.mask is None else np.asarray(self.mask, dtype=bool)


def lstm_layers(params: Params, cfg: ModelConfig):
    return [
        (params[f"lstm.{k}.w_ih"], params[f"lstm.{k}.w_hh"], params[f"lstm.{k}.b"])
        for k in range(cfg.lstm_layers)
    ]


def lstm_encode(params: Params, cfg: ModelConfig, frames: np.ndarray):
    """Top-layer hidden states ``h_1..h_T`` (row ``t-1`` holds ``h_t``) and per-layer caches."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or (len(frames) and frames.shape[1] != cfg.listener_dim):
        raise ValueError(f"listener frames must have {cfg.listener_dim} columns, got shape {frames.shape}")
    if len(frames) == 0:
        return np.zeros((0, cfg.lstm_hidden)), []
    caches = []
    x = frames
    for w_ih, w_hh, b in lstm_layers(params, cfg):
        x, cache = layers.lstm_layer_forward(x, w_ih, w_hh, b)
        caches.append(cache)
    return x, caches


def gather_listener_states(hidden: np.ndarray, cutoffs) -> np.ndarray:
    """Pick ``h_{a_i}`` per phoneme; cutoff 0 yields the zero state."""
    hidden = np.asarray(hidden)
    out = np.zeros((len(cutoffs), hidden.shape[1]))
    for i, a in enumerate(cutoffs):
        if a > len(hidden):
            raise ValueError(f"cutoff {a} for phoneme {i} exceeds {len(hidden)} available states")
        if a < 0:
            raise ValueError(f"negative cutoff {a} for phoneme {i}")
        if a > 0:
            out[i] = hidden[a - 1]
    return out


@dataclass
class FuseCache:
    speaker: int
    phoneme_ids: np.ndarray
    speech: np.ndarray
    listener: np.ndarray
    speech_tok: np.ndarray
    listener_tok: np.ndarray
    blocks: list = field(default_factory=list)
    final: np.ndarray | None = None

    @property
    def attention(self) -> list[np.ndarray]:
        """Attention weights per block, each ``(n, heads, 5, 5)``."""
        return [b[1][4] for b in self.blocks]


def fuse_forward(params: Params, cfg: ModelConfig, speaker_id: int, speech, phoneme_ids, listener):
    """Batched fusion over ``n`` phonemes of one speaker.

    Returns ``(fusion_state, predictions, cache)`` with shapes ``(n, d)`` and ``(n, 3)``.
    """
    phoneme_ids = np.asarray(phoneme_ids, dtype=np.int64).reshape(-1)
    speech = np.asarray(speech, dtype=np.float64).reshape(len(phoneme_ids), -1)
    listener = np.asarray(listener, dtype=np.float64).reshape(len(phoneme_ids), -1)
    n, d = len(phoneme_ids), cfg.d_model
    if not 0 <= speaker_id < cfg.speaker_count:
        raise ValueError(f"unknown speaker id {speaker_id} (speaker_count {cfg.speaker_count})")
    if n and (phoneme_ids.min() < 0 or phoneme_ids.max() >= cfg.phoneme_vocab):
        raise ValueError(f"phoneme id out of range [0, {cfg.phoneme_vocab})")
    if speech.shape[1] != cfg.speech_dim or listener.shape[1] != cfg.lstm_hidden:
        raise ValueError("speech/listener feature dimensions do not match the model config")

    speech_tok = np.tanh(speech @ params["proj_speech.w"] + params["proj_speech.b"])
    listener_tok = np.tanh(listener @ params["proj_listener.w"] + params["proj_listener.b"])
    x = np.empty((n, N_TOKENS, d))
    x[:, 0] = params["fusion_token"]
    x[:, 1] = params["speaker_emb"][speaker_id]
    x[:, 2] = speech_tok
    x[:, 3] = params["phoneme_emb"][phoneme_ids]
    x[:, 4] = listener_tok

    cache = FuseCache(speaker_id, phoneme_ids, speech, listener, speech_tok, listener_tok)
    for k in range(cfg.blocks_k):
        p = f"block.{k}."
        u, ln1 = layers.layer_norm_forward(x, params[p + "ln1.gain"], params[p + "ln1.bias"])
        attn_out, attn_cache = layers.mhsa_forward(u, params, p + "attn.", cfg.heads)
        y = x + attn_out
        v, ln2 = layers.layer_norm_forward(y, params[p + "ln2.gain"], params[p + "ln2.bias"])
        ffn_out, ffn_cache = layers.ffn_forward(v, params, p + "ffn.")
        x = y + ffn_out
        cache.blocks.append((ln1, attn_cache, ln2, ffn_cache))
    fused = x[:, 0]
    cache.final = fused
    pred = fused @ params["head.w"] + params["head.b"]
    return fused, pred, cache


def fuse_backward(dpred: np.ndarray, cache: FuseCache, params: Params, cfg: ModelConfig, grads: Params) -> np.ndarray:
    """Accumulate parameter gradients into ``grads``; return d loss / d listener state."""
    n, d = len(cache.phoneme_ids), cfg.d_model
    dfused, dw, db = layers.affine_backward(dpred, cache.final, params["head.w"])
    grads["head.w"] += dw
    grads["head.b"] += db
    dx = np.zeros((n, N_TOKENS, d))
    dx[:, 0] = dfused
    for k in range(cfg.blocks_k - 1, -1, -1):
        p = f"block.{k}."
        ln1, attn_cache, ln2, ffn_cache = cache.blocks[k]
        dv = layers.ffn_backward(dx, ffn_cache, params, p + "ffn.", grads)
        dy_ln, dg, dbias = layers.layer_norm_backward(dv, ln2)
        grads[p + "ln2.gain"] += dg
        grads[p + "ln2.bias"] += dbias
        dy = dx + dy_ln
        du = layers.mhsa_backward(dy, attn_cache, params, p + "attn.", cfg.heads, grads)
        dx_ln, dg, dbias = layers.layer_norm_backward(du, ln1)
        grads[p + "ln1.gain"] += dg
        grads[p + "ln1.bias"] += dbias
        dx = dy + dx_ln

    grads["fusion_token"] += dx[:, 0].sum(axis=0)
    grads["speaker_emb"][cache.speaker] += dx[:, 1].sum(axis=0)
    np.add.at(grads["phoneme_emb"], cache.phoneme_ids, dx[:, 3])
    dpre = dx[:, 2] * (1.0 - cache.speech_tok**2)
    _, dw, db = layers.affine_backward(dpre, cache.speech, params["proj_speech.w"])
    grads["proj_speech.w"] += dw
    grads["proj_speech.b"] += db
    dpre = dx[:, 4] * (1.0 - cache.listener_tok**2)
    dlistener, dw, db = layers.affine_backward(dpre, cache.listener, params["proj_listener.w"])
    grads["proj_listener.w"] += dw
    grads["proj_listener.b"] += db
    return dlistener


def _loss_weights(targets: np.ndarray, mask) -> np.ndarray:
    w = np.ones_like(targets)
    w[:, 0] = np.asarray(mask, dtype=np.float64)
    return w


def prosody_loss(predictions, targets, mask) -> float:
    """Masked mean squared error over (pitch, energy, duration) terms actually counted."""
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape or len(mask) != len(targets):
        raise ValueError(f"shape mismatch: predictions {predictions.shape}, targets {targets.shape}, mask {len(mask)}")
    w = _loss_weights(targets, mask)
    err = predictions - targets
    return float((w * err * err).sum() / w.sum())


def prosody_loss_grad(predictions, targets, mask) -> np.ndarray:
    w = _loss_weights(targets, mask)
    return 2.0 * w * (predictions - targets) / w.sum()


def listener_states(params: Params, cfg: ModelConfig, utt: Utterance):
    """Gathered ``h_{a_i}`` plus what the backward pass needs; never touches frames in blind mode."""
    if cfg.visual_blind:
        return np.zeros((len(utt.cutoffs), cfg.lstm_hidden)), None, 0
    used = max(utt.cutoffs, default=0)
    if used > len(utt.frames):
        raise ValueError(f"utterance {utt.uid!r}: cutoff {used} beyond {len(utt.frames)} listener frames")
    hidden, caches = lstm_encode(params, cfg, utt.frames[:used])
    return gather_listener_states(hidden, utt.cutoffs), caches, used


def forward_utterance(params: Params, cfg: ModelConfig, utt: Utterance) -> np.ndarray:
    h, _, _ = listener_states(params, cfg, utt)
    _, pred, _ = fuse_forward(params, cfg, utt.speaker, utt.speech, utt.phoneme_ids, h)
    return pred


def loss_and_grads(params: Params, cfg: ModelConfig, utt: Utterance) -> tuple[float, Params]:
    """Loss of one utterance and exact reverse-mode gradients for every parameter."""
    h, caches, used = listener_states(params, cfg, utt)
    _, pred, fcache = fuse_forward(params, cfg, utt.speaker, utt.speech, utt.phoneme_ids, h)
    loss = prosody_loss(pred, utt.targets, utt.mask)
    grads = zeros_like(params)
    dh = fuse_backward(prosody_loss_grad(pred, utt.targets, utt.mask), fcache, params, cfg, grads)
    if caches:
        dhidden = np.zeros((used, cfg.lstm_hidden))
        for i, a in enumerate(utt.cutoffs):
            if a > 0:
                dhidden[a - 1] += dh[i]
        for k in range(cfg.lstm_layers - 1, -1, -1):
            dhidden, dw_ih, dw_hh, db = layers.lstm_layer_backward(dhidden, caches[k])
            grads[f"lstm.{k}.w_ih"] += dw_ih
            grads[f"lstm.{k}.w_hh"] += dw_hh
            grads[f"lstm.{k}.b"] += db
    return loss, grads
