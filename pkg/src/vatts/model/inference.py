"""Streaming inference: listener frames are consumed only up to each phoneme's cutoff."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..align import StreamClock, causal_cutoff, start_frame
from ..features import ListenerFeatureStream
from .checkpoint import ProsodyModel
from .layers import LSTMStepper
from .network import Utterance, forward_utterance, fuse_forward, lstm_layers


@dataclass(frozen=True)
class ProsodyPrediction:
    phoneme: str
    log_pitch: float
    log_energy: float
    log_duration: float
    cutoff: int

    @property
    def pitch_hz(self) -> float:
        return math.exp(self.log_pitch)

    @property
    def energy(self) -> float:
        return math.exp(self.log_energy)

    @property
    def duration_ms(self) -> float:
        return math.exp(self.log_duration)

    def as_array(self) -> np.ndarray:
        return np.array([self.log_pitch, self.log_energy, self.log_duration])

    def to_dict(self) -> dict:
        return {
            "phoneme": self.phoneme,
            "log_pitch": self.log_pitch,
            "log_energy": self.log_energy,
            "log_duration": self.log_duration,
            "a_i": self.cutoff,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProsodyPrediction":
        return cls(d["phoneme"], float(d["log_pitch"]), float(d["log_energy"]), float(d["log_duration"]), int(d["a_i"]))


def infer_streaming(
    model: ProsodyModel,
    phoneme_ids,
    speaker_id: int,
    speech_reprs,
    stream: ListenerFeatureStream,
    clock: StreamClock,
    phonemes: list[str] | None = None,
) -> list[ProsodyPrediction]:
    """Predict prosody phoneme by phoneme.

    The start of phoneme ``i`` is the sum of the durations predicted for the
    earlier phonemes; its cutoff follows from the clock and is clamped to the
    frames the stream actually holds. The recurrent state is advanced one
    frame at a time and never past the current cutoff.
    """
    cfg = model.cfg
    phoneme_ids = [int(p) for p in phoneme_ids]
    speech = model.normalizer.speech(np.asarray(speech_reprs).reshape(len(phoneme_ids), -1))
    if phonemes is None:
        phonemes = [model.vocab[p] if p < len(model.vocab) else str(p) for p in phoneme_ids]
    stepper = None if cfg.visual_blind else LSTMStepper(lstm_layers(model.params, cfg))
    h = np.zeros(cfg.lstm_hidden)
    out = []
    start_s = 0.0
    for i, pid in enumerate(phoneme_ids):
        a = min(causal_cutoff(start_frame(start_s, clock.tau_s), clock.phi), stream.frame_count)
        if stepper is not None:
            while stepper.consumed < a:
                h = stepper.step(model.normalizer.listener(stream.frames[stepper.consumed]))
            h_i = h if a > 0 else np.zeros(cfg.lstm_hidden)
        else:
            h_i = np.zeros(cfg.lstm_hidden)
        _, pred, _ = fuse_forward(model.params, cfg, speaker_id, speech[i : i + 1], [pid], h_i[None, :])
        lp, le, ld = (float(v) for v in pred[0])
        out.append(ProsodyPrediction(phonemes[i], lp, le, ld, a))
        start_s += math.exp(ld) / 1000.0
    return out


def predict_teacher_forced(model: ProsodyModel, speaker_id: int, phoneme_ids, speech_reprs, frames, cutoffs) -> np.ndarray:
    """Training-mode forward with given cutoffs; returns ``(n, 3)`` log-scale predictions."""
    utt = Utterance(
        speaker_id,
        phoneme_ids,
        model.normalizer.speech(speech_reprs),
        model.normalizer.listener(frames),
        cutoffs,
    )
    return forward_utterance(model.params, model.cfg, utt)
