"""Per-utterance Adam training with cosine-annealed learning rate."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .checkpoint import Normalizer, ProsodyModel
from .config import ModelConfig, TrainConfig
from .network import Utterance, loss_and_grads
from .optim import AdamState, adam_step, cosine_lr
from .params import init_params

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class Example:
    """Raw (un-normalized) utterance with teacher cutoffs from forced alignment."""

    uid: str
    speaker: int
    phoneme_ids: np.ndarray
    speech: np.ndarray
    frames: np.ndarray
    cutoffs: list[int]
    targets: np.ndarray
    mask: np.ndarray


@dataclass
class TrainResult:
    model: ProsodyModel
    epoch_loss: list[float]
    final_lr: float


def prepare(example: Example, norm: Normalizer) -> Utterance:
    return Utterance(
        example.speaker,
        example.phoneme_ids,
        norm.speech(example.speech),
        norm.listener(example.frames),
        example.cutoffs,
        example.targets,
        example.mask,
        uid=example.uid,
    )


def _target_means(examples: list[Example]) -> np.ndarray:
    targets = np.concatenate([e.targets for e in examples])
    mask = np.concatenate([np.asarray(e.mask, bool) for e in examples])
    means = targets.mean(axis=0)
    means[0] = targets[mask, 0].mean() if mask.any() else 0.0
    return means


def train(
    examples: list[Example],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig = TrainConfig(),
    vocab: list[str] | None = None,
    progress=None,
) -> TrainResult:
    """Fit a model; deterministic given ``train_cfg.seed``.

    The epoch order is a seeded shuffle and every utterance is one Adam
    step. The learning rate follows a cosine from ``lr_max`` on the first
    step to ``lr_min`` on the last. The head bias starts at the training
    target means so the log-scale offsets need not be learned from zero.
    """
    if not examples:
        raise ValueError("training set is empty")
    for e in examples:
        for name in ("speech", "frames", "targets"):
            if not np.all(np.isfinite(getattr(e, name))):
                raise ValueError(f"utterance {e.uid!r}: non-finite {name}")
    norm = Normalizer.fit(
        np.concatenate([e.speech for e in examples]),
        np.concatenate([e.frames for e in examples]),
        model_cfg,
    )
    params = init_params(model_cfg, train_cfg.seed)
    params["head.b"][:] = _target_means(examples)
    utts = [prepare(e, norm) for e in examples]

    state = AdamState.zeros(params)
    rng = np.random.default_rng([train_cfg.seed, 1])
    total = train_cfg.epochs * len(utts)
    last = total - 1
    step = 0
    lr = train_cfg.lr_max
    epoch_loss = []
    for epoch in range(train_cfg.epochs):
        losses = []
        for idx in rng.permutation(len(utts)):
            utt = utts[idx]
            loss, grads = loss_and_grads(params, model_cfg, utt)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch + 1}, utterance {utt.uid!r}")
            lr = cosine_lr(step, last, train_cfg)
            adam_step(params, grads, state, lr, train_cfg)
            losses.append(loss)
            step += 1
        epoch_loss.append(float(np.mean(losses)))
        if progress is not None:
            progress(epoch + 1, epoch_loss[-1], lr)
        log.debug("epoch %d loss %.6f lr %.3g", epoch + 1, epoch_loss[-1], lr)

    model = ProsodyModel(model_cfg, params, norm, list(vocab or []), train_cfg.seed, train_cfg)
    return TrainResult(model, epoch_loss, lr)
