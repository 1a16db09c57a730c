"""Signal-processing primitives: STFT, mel filterbank, mel cepstra, YIN F0 and frame energy.

Everything here is a pure function of in-memory buffers. Frames are never
zero-padded: trailing samples shorter than one window are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform with samples in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("mono required: samples must be one-dimensional")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate)


@dataclass(frozen=True)
class SpectralConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    mel_bands: int = 80
    fmin: float = 0.0
    fmax: float | None = None  # None -> min(8000, Nyquist)
    cepstral_order: int = 13

    def __post_init__(self):
        if self.hop_ms <= 0 or self.window_ms <= 0:
            raise ValueError("window_ms and hop_ms must be positive")
        if self.hop_ms > self.window_ms:
            raise ValueError("hop_ms must not exceed window_ms")
        if self.mel_bands < self.cepstral_order:
            raise ValueError("mel_bands must be >= cepstral_order")

    def window_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.window_ms / 1000.0))

    def hop_samples(self, sample_rate: int) -> int:
        return int(round(sample_rate * self.hop_ms / 1000.0))

    def resolved_fmax(self, sample_rate: int) -> float:
        nyquist = sample_rate / 2.0
        fmax = min(8000.0, nyquist) if self.fmax is None else self.fmax
        if fmax > nyquist:
            raise ValueError(f"fmax {fmax} exceeds Nyquist {nyquist}")
        return fmax


#: Front-end used for MCD: 40 mel bands, 13 cepstra.
CEPSTRAL_CONFIG = SpectralConfig(mel_bands=40)


@dataclass(frozen=True)
class F0Config:
    frame_ms: float = 40.0
    hop_ms: float = 10.0
    fmin: float = 60.0
    fmax: float = 500.0
    cmnd_threshold: float = 0.15
    silence_floor_db: float = -60.0

    def __post_init__(self):
        if not self.fmin < self.fmax:
            raise ValueError("fmin must be below fmax")
        if not 0.0 < self.cmnd_threshold < 1.0:
            raise ValueError("cmnd_threshold must lie in (0, 1)")


@dataclass
class F0Track:
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_ms: float = 10.0

    def __post_init__(self):
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0_hz.shape != self.voiced.shape:
            raise ValueError("f0_hz and voiced must have equal length")

    @classmethod
    def from_f0(cls, f0_hz, hop_ms: float = 10.0) -> "F0Track":
        """Build a track where voicing is implied by ``f0 > 0``."""
        f0 = np.asarray(f0_hz, dtype=np.float64)
        return cls(np.where(f0 > 0, f0, 0.0), f0 > 0, hop_ms)

    def __len__(self):
        return len(self.f0_hz)


def _frame(x: np.ndarray, length: int, hop: int) -> np.ndarray:
    n_frames = (len(x) - length) // hop + 1
    return np.lib.stride_tricks.as_strided(
        x, shape=(n_frames, length), strides=(x.strides[0] * hop, x.strides[0]), writeable=False
    )


def stft(audio: AudioBuffer, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Magnitude STFT with a periodic Hann window.

    Returns
    -------
    np.ndarray
        ``(frames, n_fft // 2 + 1)`` magnitudes, where ``n_fft`` is the
        smallest power of two holding one window.
    """
    win = cfg.window_samples(audio.sample_rate)
    hop = cfg.hop_samples(audio.sample_rate)
    if len(audio.samples) < win:
        raise ValueError(
            f"audio has {len(audio.samples)} samples, shorter than one window ({win})"
        )
    n_fft = 1 << (win - 1).bit_length()
    frames = _frame(audio.samples, win, hop) * hann(win)
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1))


def hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_centers_s(n_frames: int, window_samples: int, hop_samples: int, sample_rate: int) -> np.ndarray:
    return (np.arange(n_frames) * hop_samples + window_samples / 2.0) / sample_rate


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular HTK-mel filters with unit peaks, shape ``(n_mels, n_fft // 2 + 1)``."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    left, center, right = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - left) / (center - left)
    falling = (right - freqs) / (right - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def log_mel(audio: AudioBuffer, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    mag = stft(audio, cfg)
    n_fft = 2 * (mag.shape[1] - 1)
    fb = mel_filterbank(
        audio.sample_rate, n_fft, cfg.mel_bands, cfg.fmin, cfg.resolved_fmax(audio.sample_rate)
    )
    return np.log(np.maximum(mag @ fb.T, LOG_FLOOR))


def mel_cepstra(audio: AudioBuffer, cfg: SpectralConfig = CEPSTRAL_CONFIG) -> np.ndarray:
    """Cepstral coefficients c1..c_order (c0 dropped), shape ``(frames, order)``."""
    cep = scipy.fft.dct(log_mel(audio, cfg), type=2, norm="ortho", axis=1)
    return cep[:, 1 : cfg.cepstral_order + 1]


def frame_energy(audio: AudioBuffer, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    """Per-frame L2 norm of the STFT magnitude row."""
    return np.linalg.norm(stft(audio, cfg), axis=1)


def _difference_function(frames: np.ndarray, max_lag: int) -> np.ndarray:
    # d(tau) = sum_{j<W} (x_j - x_{j+tau})^2 over a fixed integration window W.
    n = frames.shape[1]
    w = n - max_lag
    n_fft = 1 << (n + w - 1).bit_length()
    head = frames[:, :w]
    spec = np.fft.rfft(frames, n_fft, axis=1) * np.conj(np.fft.rfft(head, n_fft, axis=1))
    corr = np.fft.irfft(spec, n_fft, axis=1)[:, : max_lag + 1]
    sq = np.concatenate([np.zeros((len(frames), 1)), np.cumsum(frames**2, axis=1)], axis=1)
    energy_head = sq[:, w][:, None]
    lags = np.arange(max_lag + 1)
    energy_shift = sq[:, lags + w] - sq[:, lags]
    d = energy_head + energy_shift - 2.0 * corr
    d[:, 0] = 0.0
    return np.maximum(d, 0.0)


def _cmnd(d: np.ndarray) -> np.ndarray:
    out = np.ones_like(d)
    lags = np.arange(1, d.shape[1])
    running = np.cumsum(d[:, 1:], axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d[:, 1:] * lags / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def estimate_f0(audio: AudioBuffer, cfg: F0Config = F0Config()) -> F0Track:
    """YIN pitch tracker.

    Per frame: cumulative-mean-normalized difference (CMND), the first lag in
    ``[rate/fmax, rate/fmin]`` dipping under ``cmnd_threshold`` (walked down
    to its local minimum), otherwise the global CMND minimum in range, then
    parabolic interpolation. A frame is voiced when the chosen CMND value is
    under the threshold and the frame RMS is above ``silence_floor_db``.
    """
    sr = audio.sample_rate
    frame_len = int(round(sr * cfg.frame_ms / 1000.0))
    hop = int(round(sr * cfg.hop_ms / 1000.0))
    if len(audio.samples) < frame_len:
        raise ValueError(
            f"audio has {len(audio.samples)} samples, shorter than one F0 frame ({frame_len})"
        )
    min_lag = max(1, int(np.floor(sr / cfg.fmax)))
    max_lag = int(np.ceil(sr / cfg.fmin))
    if max_lag >= frame_len - 1:
        raise ValueError("F0 frame too short for fmin; lengthen frame_ms or raise fmin")
    frames = _frame(audio.samples, frame_len, hop)
    cmnd = _cmnd(_difference_function(frames, max_lag))

    n_frames = len(frames)
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    rms = np.sqrt(np.mean(frames**2, axis=1))
    with np.errstate(divide="ignore"):
        rms_db = 20.0 * np.log10(rms)

    for t in range(n_frames):
        row = cmnd[t]
        below = np.nonzero(row[min_lag : max_lag + 1] < cfg.cmnd_threshold)[0]
        if below.size:
            lag = min_lag + int(below[0])
            while lag < max_lag and row[lag + 1] < row[lag]:
                lag += 1
        else:
            lag = min_lag + int(np.argmin(row[min_lag : max_lag + 1]))
        value = row[lag]
        shift = 0.0
        if min_lag < lag < max_lag:
            a, b, c = row[lag - 1], row[lag], row[lag + 1]
            denom = a - 2.0 * b + c
            if denom > 0:
                shift = 0.5 * (a - c) / denom
        est = sr / (lag + shift)
        if value < cfg.cmnd_threshold and rms_db[t] > cfg.silence_floor_db and cfg.fmin <= est <= cfg.fmax:
            f0[t] = est
            voiced[t] = True
    return F0Track(f0, voiced, cfg.hop_ms)


def f0_frame_centers_s(track_len: int, sample_rate: int, cfg: F0Config = F0Config()) -> np.ndarray:
    frame_len = int(round(sample_rate * cfg.frame_ms / 1000.0))
    hop = int(round(sample_rate * cfg.hop_ms / 1000.0))
    return frame_centers_s(track_len, frame_len, hop, sample_rate)


def spectral_frame_centers_s(n_frames: int, sample_rate: int, cfg: SpectralConfig = SpectralConfig()) -> np.ndarray:
    return frame_centers_s(n_frames, cfg.window_samples(sample_rate), cfg.hop_samples(sample_rate), sample_rate)
