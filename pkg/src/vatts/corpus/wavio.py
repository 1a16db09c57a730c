"""16-bit PCM mono WAV reading and writing."""

from __future__ import annotations

import wave

import numpy as np

from ..dsp import AudioBuffer

_SCALE = 32768.0


def read_wav(path) -> AudioBuffer:
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n = fh.getnframes()
            raw = fh.readframes(n)
    except wave.Error as exc:
        raise ValueError(f"{path}: not a PCM WAV file ({exc})") from None
    except EOFError:
        raise ValueError(f"{path}: truncated WAV header") from None
    if channels != 1:
        raise ValueError(f"{path}: mono required, file has {channels} channels")
    if width != 2:
        raise ValueError(f"{path}: 16-bit PCM required, file has {8 * width}-bit samples")
    if len(raw) != 2 * n:
        raise ValueError(f"{path}: truncated data chunk ({len(raw)} of {2 * n} bytes)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return AudioBuffer(pcm.astype(np.float64) / _SCALE, rate)


def quantize(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768, round half away from zero, clamp to int16."""
    x = np.asarray(samples, dtype=np.float64) * _SCALE
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path, audio: AudioBuffer) -> None:
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(audio.sample_rate)
        fh.writeframes(quantize(audio.samples).tobytes())
