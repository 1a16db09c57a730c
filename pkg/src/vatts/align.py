"""Causal timing between phonemes and listener video frames.

Frames are 1-based: frame ``j`` covers ``[(j-1)*tau, j*tau)``. A cutoff of
``0`` means no listener frame may be consumed for that phoneme.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

log = logging.getLogger(__name__)

#: Prosody synthesis cost per phoneme, in seconds.
DEFAULT_LATENCY_S = 2.67e-3
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class PhonemeEntry:
    phoneme: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.end_s > self.start_s:
            raise ValueError(f"phoneme {self.phoneme!r}: end {self.end_s} must exceed start {self.start_s}")
        if self.start_s < 0:
            raise ValueError(f"phoneme {self.phoneme!r}: negative start {self.start_s}")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class PhonemeAlignment:
    entries: tuple[PhonemeEntry, ...]

    def __post_init__(self):
        entries = tuple(self.entries)
        if not entries:
            raise ValueError("alignment needs at least one phoneme")
        for i in range(1, len(entries)):
            if entries[i].start_s < entries[i - 1].end_s - 1e-9:
                raise ValueError(f"phoneme {i} overlaps or precedes phoneme {i - 1}")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def phonemes(self) -> list[str]:
        return [e.phoneme for e in self.entries]

    @property
    def starts(self) -> np.ndarray:
        return np.array([e.start_s for e in self.entries])

    @property
    def ends(self) -> np.ndarray:
        return np.array([e.end_s for e in self.entries])

    @property
    def durations_s(self) -> np.ndarray:
        return self.ends - self.starts

    @classmethod
    def from_durations(cls, phonemes: Sequence[str], durations_s: Sequence[float], start_s: float = 0.0):
        entries, t = [], start_s
        for p, d in zip(phonemes, durations_s):
            entries.append(PhonemeEntry(p, t, t + d))
            t += d
        return cls(tuple(entries))


@dataclass(frozen=True)
class StreamClock:
    tau_s: float
    phi: int

    def __post_init__(self):
        if self.tau_s <= 0:
            raise ValueError("tau_s must be positive")
        if self.phi < 0:
            raise ValueError("phi must be non-negative")

    @classmethod
    def from_fps(cls, fps: float, latency_s: float = DEFAULT_LATENCY_S) -> "StreamClock":
        tau = 1.0 / fps
        return cls(tau, compute_phi(tau, latency_s))


def compute_phi(tau_s: float, latency_s: float) -> int:
    """Smallest integer lag ``phi >= 1`` with ``phi * tau_s >= latency_s``."""
    if not tau_s > 0:
        raise ValueError(f"tau_s must be positive, got {tau_s}")
    if latency_s < 0:
        raise ValueError(f"latency_s must be non-negative, got {latency_s}")
    return max(1, _ceil_ratio(latency_s, tau_s))


def _snap(q: float) -> int | None:
    # Ratios within float noise of an integer count as exact ties (tau = 1/fps is inexact).
    r = round(q)
    if abs(q - r) <= _TIE_RTOL * max(1.0, abs(q)):
        return int(r)
    return None


def _ceil_ratio(num: float, den: float) -> int:
    q = num / den
    tie = _snap(q)
    return tie if tie is not None else int(math.ceil(q))


def _frames_before(t_s: float, tau_s: float) -> int:
    """floor(t / tau) with tie snapping."""
    q = t_s / tau_s
    tie = _snap(q)
    return tie if tie is not None else int(math.floor(q))


def start_frame(start_s: float, tau_s: float) -> int:
    """1-based index of the frame containing ``start_s`` (boundaries go to the later frame)."""
    if start_s < 0:
        raise ValueError(f"start_s must be non-negative, got {start_s}")
    return _frames_before(start_s, tau_s) + 1


def causal_cutoff(a_hat: int, phi: int) -> int:
    return max(a_hat - phi, 0)


def align_offline(align: PhonemeAlignment, clock: StreamClock, frame_count: int) -> list[int]:
    """Last usable listener frame per phoneme from forced-alignment start times."""
    if frame_count < 0:
        raise ValueError("frame_count must be non-negative")
    if align.entries[-1].start_s > (frame_count + 1) * clock.tau_s and frame_count > 0:
        log.warning(
            "alignment reaches %.3f s but the listener stream ends at %.3f s",
            align.entries[-1].start_s,
            frame_count * clock.tau_s,
        )
    return [
        min(causal_cutoff(start_frame(e.start_s, clock.tau_s), clock.phi), frame_count)
        for e in align.entries
    ]


def align_streaming(pred_durations_s: Sequence[float], clock: StreamClock) -> list[int]:
    """Cutoffs from prefix sums of predicted durations (start of phoneme i = sum of earlier durations)."""
    cutoffs, start = [], 0.0
    for i, d in enumerate(pred_durations_s):
        if d < 0:
            raise ValueError(f"negative predicted duration {d} at phoneme {i}")
        cutoffs.append(causal_cutoff(start_frame(start, clock.tau_s), clock.phi))
        start += float(d)
    return cutoffs


def read_alignment_tsv(path) -> PhonemeAlignment:
    """Parse ``phoneme<TAB>start_s<TAB>end_s`` lines (no header)."""
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\r").split("\t")
        if len(cols) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
        try:
            entries.append(PhonemeEntry(cols[0], float(cols[1]), float(cols[2])))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not entries:
        raise ValueError(f"{path}: empty alignment")
    return PhonemeAlignment(tuple(entries))


def write_alignment_tsv(path, align: PhonemeAlignment) -> None:
    lines = [f"{e.phoneme}\t{e.start_s:.6f}\t{e.end_s:.6f}\n" for e in align.entries]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)
