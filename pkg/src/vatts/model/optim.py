from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .params import Params


@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0

    @classmethod
    def zeros(cls, params: Params) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: Params, grads: Params, state: AdamState, lr: float, cfg: TrainConfig = TrainConfig()) -> None:
    """Bias-corrected Adam update, in place: ``theta -= lr * m_hat / (sqrt(v_hat) + eps)``."""
    if set(grads) != set(params):
        raise ValueError("gradient names do not match parameter names")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)


def cosine_lr(step: int, total_steps: int, cfg: TrainConfig = TrainConfig()) -> float:
    """Cosine annealing from ``lr_max`` at step 0 to ``lr_min`` at ``total_steps`` (clamped beyond)."""
    if total_steps <= 0 or step >= total_steps:
        return cfg.lr_min
    step = max(step, 0)
    return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
