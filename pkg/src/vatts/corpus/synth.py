"""Deterministic synthetic corpus whose prosody reacts to listener patterns.

Each phoneme is a three-harmonic tone (partials 1, 0.5, 0.25) joined to
its neighbours by 5 ms linear fades, so its pitch, energy and duration are known exactly. The
listener stream is smooth noise with contiguous pattern windows:

* ``negative``: a step in head pose; stretches duration and lowers pitch.
* ``positive``: an oscillation over expression coefficients; raises energy.

A phoneme is modified when a pattern covers its causal cutoff frame ``a_i``,
which is computed from the (already modified) start time, so the generator
obeys the same causality as the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..align import DEFAULT_LATENCY_S, PhonemeAlignment, StreamClock, causal_cutoff, start_frame
from ..dsp import AudioBuffer, SpectralConfig, hann
from ..features import EXPRESSION_DIM, LISTENER_DIM, ListenerFeatureStream, ProsodyTarget

HARMONICS = (1.0, 0.5, 0.25)
FADE_MS = 5.0
PATTERNS = ("none", "negative", "positive")
AMPLITUDE_GRID = (0.2, 0.24, 0.28, 0.32, 0.36, 0.4)

DEFAULT_RULES = {
    "negative": {"duration": 1.3, "pitch": 0.9},
    "positive": {"energy": 1.2},
}


@dataclass(frozen=True)
class SyntheticSpec:
    n_utterances: int = 16
    phonemes_per_utterance: tuple[int, int] = (8, 14)
    base_f0_hz: tuple[float, float] = (110.0, 240.0)
    duration_ms: tuple[int, int] = (80, 300)
    sample_rate: int = 22050
    fps: float = 30.0
    seed: int = 0
    vocab_size: int = 12
    speakers: int = 4
    pitch_jitter: float = 0.02
    segment_frames: tuple[int, int] = (12, 30)
    latency_s: float = DEFAULT_LATENCY_S
    feedback_rules: dict = field(default_factory=lambda: {k: dict(v) for k, v in DEFAULT_RULES.items()})

    def __post_init__(self):
        for name in ("phonemes_per_utterance", "base_f0_hz", "duration_ms", "segment_frames"):
            lo, hi = getattr(self, name)
            if not lo <= hi or lo <= 0:
                raise ValueError(f"degenerate range {name}={lo, hi}")
        if self.duration_ms[0] < 2 * FADE_MS:
            raise ValueError("phoneme durations must allow both fades")
        if self.n_utterances < 0 or self.vocab_size < 1 or self.speakers < 1:
            raise ValueError("counts must be positive")
        for cls, mods in self.feedback_rules.items():
            if cls not in PATTERNS[1:]:
                raise ValueError(f"unknown pattern class {cls!r}")
            for key, m in mods.items():
                if key not in ("duration", "pitch", "energy") or not m > 0:
                    raise ValueError(f"invalid modifier {cls}.{key}={m}")

    @property
    def vocab(self) -> list[str]:
        return [f"p{i:02d}" for i in range(self.vocab_size)]


@dataclass
class SyntheticUtterance:
    uid: str
    speaker: int
    audio: AudioBuffer
    alignment: PhonemeAlignment
    stream: ListenerFeatureStream
    targets: list[ProsodyTarget]
    reference: AudioBuffer
    ref_alignment: PhonemeAlignment
    phoneme_ids: list[int]
    cutoffs: list[int]
    active: list[str]
    frame_classes: np.ndarray


@dataclass(frozen=True)
class _Tables:
    base_ms: np.ndarray
    pitch_ratio: np.ndarray
    amplitude: np.ndarray
    speaker_f0: np.ndarray


def _tables(spec: SyntheticSpec) -> _Tables:
    rng = np.random.default_rng([spec.seed, 0xB0CAB])
    lo, hi = spec.duration_ms
    steps = np.arange(int(math.ceil(lo / 10)) * 10, hi + 1, 10)
    if steps.size == 0:
        steps = np.array([lo])
    return _Tables(
        base_ms=rng.choice(steps, size=spec.vocab_size).astype(np.int64),
        pitch_ratio=rng.uniform(0.92, 1.08, size=spec.vocab_size),
        amplitude=rng.choice(np.array(AMPLITUDE_GRID), size=spec.vocab_size),
        speaker_f0=rng.uniform(*spec.base_f0_hz, size=spec.speakers),
    )


def expected_frame_energy(amplitude: float, sample_rate: int, cfg: SpectralConfig = SpectralConfig()) -> float:
    """Closed-form steady-state frame energy of the harmonic tone.

    By Parseval the one-sided magnitude spectrum of a windowed frame carries
    ``n_fft / 2 * sum((w x)^2)`` and a sum of sinusoids averages to
    ``sum(w^2) * sum(a_h^2) / 2``.
    """
    win = cfg.window_samples(sample_rate)
    n_fft = 1 << (win - 1).bit_length()
    w2 = float(np.sum(hann(win) ** 2))
    power = sum(h * h for h in HARMONICS) / 2.0
    return amplitude * math.sqrt(n_fft / 2.0 * w2 * power)


def _smooth_noise(rng, frames: int, dims: int, std: float = 0.1) -> np.ndarray:
    white = rng.normal(size=(frames, dims))
    out = np.empty_like(white)
    acc = np.zeros(dims)
    alpha = 0.3
    for t in range(frames):
        acc = (1 - alpha) * acc + alpha * white[t]
        out[t] = acc
    # Stationary std of this filter is sqrt(alpha / (2 - alpha)).
    return out * std / math.sqrt(alpha / (2 - alpha))


def _frame_classes(rng, frames: int, spec: SyntheticSpec) -> np.ndarray:
    classes = np.zeros(frames, dtype=np.int64)
    t = 0
    while t < frames:
        length = int(rng.integers(spec.segment_frames[0], spec.segment_frames[1] + 1))
        classes[t : t + length] = int(rng.integers(len(PATTERNS)))
        t += length
    return classes


def _listener_frames(rng, classes: np.ndarray, fps: float) -> np.ndarray:
    frames = _smooth_noise(rng, len(classes), LISTENER_DIM)
    t = np.arange(len(classes)) / fps
    neg = classes == PATTERNS.index("negative")
    frames[neg, EXPRESSION_DIM] -= 0.6
    frames[neg, EXPRESSION_DIM + 2] += 0.4
    pos = classes == PATTERNS.index("positive")
    for k in range(8):
        frames[pos, k] += 0.6 * np.sin(2 * np.pi * 1.5 * t[pos] + k * np.pi / 4)
    return frames


def _ramped(values, bounds: np.ndarray, ramp: int) -> np.ndarray:
    # Piecewise-constant per phoneme, linear over `ramp` samples centred on each inner boundary.
    out = np.repeat(np.asarray(values, dtype=np.float64), np.diff(bounds))
    half = ramp // 2
    for k in range(1, len(bounds) - 1):
        a, b = max(bounds[k] - half, bounds[k - 1]), min(bounds[k] + half, bounds[k + 1])
        if b > a:
            out[a:b] = np.linspace(values[k - 1], values[k], b - a + 2)[1:-1]
    return out


def render(f0_hz, amplitudes, durations_ms, sample_rate: int, phase0: float = 0.0) -> AudioBuffer:
    """Render a phoneme sequence as one continuous-phase harmonic tone.

    Amplitude and F0 cross-fade linearly over 5 ms at inner phoneme
    boundaries; the utterance fades in and out over 5 ms at its edges.
    """
    bounds = np.round(np.concatenate([[0], np.cumsum(durations_ms)]) * sample_rate / 1000.0).astype(np.int64)
    ramp = int(round(FADE_MS * sample_rate / 1000.0))
    f0 = _ramped(f0_hz, bounds, ramp)
    amp = _ramped(amplitudes, bounds, ramp)
    n = len(f0)
    f = min(ramp, n // 2)
    if f > 0:
        edge = np.arange(f) / f
        amp[:f] *= edge
        amp[n - f :] *= edge[::-1]
    phase = phase0 + 2 * np.pi * np.concatenate([[0.0], np.cumsum(f0[:-1])]) / sample_rate
    tone = sum(h * np.sin((k + 1) * phase) for k, h in enumerate(HARMONICS))
    return AudioBuffer(amp * tone, sample_rate)


def generate_utterance(spec: SyntheticSpec, index: int, speccfg: SpectralConfig = SpectralConfig()) -> SyntheticUtterance:
    """Render utterance ``index``; identical ``(spec, index)`` gives bit-identical output."""
    tables = _tables(spec)
    rng = np.random.default_rng([spec.seed, 1, index])
    n = int(rng.integers(spec.phonemes_per_utterance[0], spec.phonemes_per_utterance[1] + 1))
    speaker = int(rng.integers(spec.speakers))
    ids = rng.integers(spec.vocab_size, size=n)
    jitter = 1.0 + rng.uniform(-spec.pitch_jitter, spec.pitch_jitter, size=n)

    clock = StreamClock.from_fps(spec.fps, spec.latency_s)
    max_ms = n * spec.duration_ms[1] * max(
        [1.0] + [m.get("duration", 1.0) for m in spec.feedback_rules.values()]
    )
    max_frames = int(math.ceil(max_ms / 1000.0 * spec.fps)) + 2
    classes = _frame_classes(rng, max_frames, spec)
    frames = _listener_frames(rng, classes, spec.fps)

    base_f0 = tables.speaker_f0[speaker] * tables.pitch_ratio[ids] * jitter
    base_amp = tables.amplitude[ids]
    base_ms = tables.base_ms[ids]

    f0s, amps, durs, cutoffs, active = [], [], [], [], []
    start_ms = 0
    for i in range(n):
        a = causal_cutoff(start_frame(start_ms / 1000.0, clock.tau_s), clock.phi)
        cls = PATTERNS[classes[a - 1]] if a > 0 else "none"
        mods = spec.feedback_rules.get(cls, {})
        dur = int(round(base_ms[i] * mods.get("duration", 1.0)))
        f0s.append(base_f0[i] * mods.get("pitch", 1.0))
        amps.append(base_amp[i] * mods.get("energy", 1.0))
        durs.append(dur)
        cutoffs.append(a)
        active.append(cls)
        start_ms += dur

    total_frames = int(math.ceil(start_ms / 1000.0 * spec.fps))
    phonemes = [spec.vocab[i] for i in ids]
    audio = render(f0s, amps, durs, spec.sample_rate)
    reference = render(base_f0, base_amp, base_ms, spec.sample_rate)
    alignment = PhonemeAlignment.from_durations(phonemes, [d / 1000.0 for d in durs])
    ref_alignment = PhonemeAlignment.from_durations(phonemes, [d / 1000.0 for d in base_ms])
    energy_unit = expected_frame_energy(1.0, spec.sample_rate, speccfg)
    targets = [
        ProsodyTarget(math.log(f), True, math.log(amp * energy_unit), math.log(d))
        for f, amp, d in zip(f0s, amps, durs)
    ]
    return SyntheticUtterance(
        uid=f"utt{index:04d}",
        speaker=speaker,
        audio=audio,
        alignment=alignment,
        stream=ListenerFeatureStream(spec.fps, frames[:total_frames]),
        targets=targets,
        reference=reference,
        ref_alignment=ref_alignment,
        phoneme_ids=[int(i) for i in ids],
        cutoffs=cutoffs,
        active=active,
        frame_classes=classes[:total_frames],
    )


def split_indices(n: int, n_test: int, seed: int) -> tuple[list[int], list[int]]:
    """Seeded train/test partition of ``range(n)``; both halves sorted."""
    order = np.random.default_rng([seed, 2]).permutation(n)
    return sorted(int(i) for i in order[n_test:]), sorted(int(i) for i in order[:n_test])
