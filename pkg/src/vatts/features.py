"""Listener coefficient streams and per-phoneme prosody / speech representations."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import PhonemeAlignment
from .dsp import (
    LOG_FLOOR,
    AudioBuffer,
    F0Config,
    SpectralConfig,
    estimate_f0,
    f0_frame_centers_s,
    frame_energy,
    log_mel,
    spectral_frame_centers_s,
)

LISTENER_DIM = 70
EXPRESSION_DIM = 64
POSE_DIM = 6
ENERGY_FLOOR = 1e-8


@dataclass
class ListenerFeatureStream:
    """Per-frame listener vectors: 64 expression coefficients then 6 pose values."""

    fps: float
    frames: np.ndarray

    def __post_init__(self):
        if not self.fps > 0:
            raise ValueError(f"fps must be positive, got {self.fps}")
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.size == 0:
            frames = frames.reshape(0, LISTENER_DIM)
        if frames.ndim != 2 or frames.shape[1] != LISTENER_DIM:
            raise ValueError(f"expected {LISTENER_DIM} columns, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("listener features must be finite")
        self.frames = frames

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def tau_s(self) -> float:
        return 1.0 / self.fps

    @property
    def expression(self) -> np.ndarray:
        return self.frames[:, :EXPRESSION_DIM]

    @property
    def pose(self) -> np.ndarray:
        return self.frames[:, EXPRESSION_DIM:]


def load_listener_features(path, fps: float) -> ListenerFeatureStream:
    """Read a headerless CSV with exactly 70 numeric columns per row."""
    text = Path(path).read_text(encoding="utf-8")
    rows = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cells = line.rstrip("\r").split(",")
        if len(cells) != LISTENER_DIM:
            raise ValueError(f"{path}: row {lineno}: expected {LISTENER_DIM} columns, got {len(cells)}")
        row = []
        for col, cell in enumerate(cells, start=1):
            try:
                row.append(float(cell))
            except ValueError:
                raise ValueError(f"{path}: row {lineno}, column {col}: non-numeric cell {cell!r}") from None
        rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty listener feature file")
    return ListenerFeatureStream(fps, np.array(rows))


def write_listener_features(path, stream: ListenerFeatureStream) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in stream.frames:
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


@dataclass(frozen=True)
class ProsodyTarget:
    """Per-phoneme prosody in log scale: ln Hz, ln energy, ln milliseconds."""

    log_pitch: float
    pitch_mask: bool
    log_energy: float
    log_duration: float

    def __post_init__(self):
        if not self.pitch_mask and self.log_pitch != 0.0:
            raise ValueError("unvoiced target must carry log_pitch = 0")
        for v in (self.log_pitch, self.log_energy, self.log_duration):
            if not math.isfinite(v):
                raise ValueError("prosody targets must be finite")

    @property
    def pitch_hz(self) -> float:
        return math.exp(self.log_pitch) if self.pitch_mask else 0.0

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
            "log_pitch": self.log_pitch,
            "pitch_mask": self.pitch_mask,
            "log_energy": self.log_energy,
            "log_duration": self.log_duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProsodyTarget":
        return cls(float(d["log_pitch"]), bool(d["pitch_mask"]), float(d["log_energy"]), float(d["log_duration"]))


def targets_to_arrays(targets) -> tuple[np.ndarray, np.ndarray]:
    """Stack targets into ``(n, 3)`` values and an ``(n,)`` pitch mask."""
    values = np.array([t.as_array() for t in targets]).reshape(-1, 3)
    mask = np.array([t.pitch_mask for t in targets], dtype=bool)
    return values, mask


def duration_ms(start_s: float, end_s: float) -> float:
    """Span length in ms, rounded to 1e-6 ms so decimal alignments give exact values."""
    return round((end_s - start_s) * 1000.0, 6)


def _members(centers: np.ndarray, start: float, end: float) -> np.ndarray:
    return np.nonzero((centers >= start) & (centers < end))[0]


def _nearest(centers: np.ndarray, start: float, end: float) -> int:
    mid = 0.5 * (start + end)
    return int(np.argmin(np.abs(centers - mid)))


def _check_span(align: PhonemeAlignment, audio: AudioBuffer, slack_s: float) -> None:
    limit = audio.duration_s + slack_s
    for i, e in enumerate(align.entries):
        if e.start_s >= limit:
            raise ValueError(
                f"phoneme {i} ({e.phoneme!r}) starts at {e.start_s:.3f} s, outside audio of {audio.duration_s:.3f} s"
            )


def extract_prosody_targets(
    audio: AudioBuffer,
    align: PhonemeAlignment,
    f0cfg: F0Config = F0Config(),
    speccfg: SpectralConfig = SpectralConfig(),
) -> list[ProsodyTarget]:
    """Measure per-phoneme mean F0, mean frame energy and duration.

    Frames belong to a phoneme when their centre falls in ``[start, end)``.
    Pitch averages voiced F0 frames only; a phoneme without voiced frames is
    masked. A phoneme holding no energy frame borrows the nearest one.
    """
    _check_span(align, audio, speccfg.hop_ms / 1000.0)
    track = estimate_f0(audio, f0cfg)
    f0_centers = f0_frame_centers_s(len(track), audio.sample_rate, f0cfg)
    energy = frame_energy(audio, speccfg)
    e_centers = spectral_frame_centers_s(len(energy), audio.sample_rate, speccfg)

    targets = []
    for e in align.entries:
        idx = _members(f0_centers, e.start_s, e.end_s)
        voiced = idx[track.voiced[idx]]
        if voiced.size:
            log_pitch, mask = math.log(float(np.mean(track.f0_hz[voiced]))), True
        else:
            log_pitch, mask = 0.0, False

        idx = _members(e_centers, e.start_s, e.end_s)
        mean_energy = float(np.mean(energy[idx])) if idx.size else float(energy[_nearest(e_centers, e.start_s, e.end_s)])
        log_energy = math.log(max(mean_energy, ENERGY_FLOOR))

        log_duration = math.log(duration_ms(e.start_s, e.end_s))
        targets.append(ProsodyTarget(log_pitch, mask, log_energy, log_duration))
    return targets


def extract_speech_reprs(
    reference: AudioBuffer,
    align: PhonemeAlignment,
    speccfg: SpectralConfig = SpectralConfig(),
) -> np.ndarray:
    """Per-phoneme mean log-mel vector, shape ``(n_phonemes, mel_bands)``."""
    _check_span(align, reference, speccfg.hop_ms / 1000.0)
    mel = log_mel(reference, speccfg)
    centers = spectral_frame_centers_s(len(mel), reference.sample_rate, speccfg)
    out = np.empty((align.n, speccfg.mel_bands))
    for i, e in enumerate(align.entries):
        idx = _members(centers, e.start_s, e.end_s)
        out[i] = mel[idx].mean(axis=0) if idx.size else mel[_nearest(centers, e.start_s, e.end_s)]
    return out


__all__ = [
    "LISTENER_DIM",
    "LOG_FLOOR",
    "ListenerFeatureStream",
    "ProsodyTarget",
    "extract_prosody_targets",
    "extract_speech_reprs",
    "load_listener_features",
    "targets_to_arrays",
    "write_listener_features",
]
