import math

import numpy as np
import pytest

from vatts.align import PhonemeAlignment
from vatts.dsp import AudioBuffer, log_mel
from vatts.features import (
    ENERGY_FLOOR,
    ListenerFeatureStream,
    extract_prosody_targets,
    extract_speech_reprs,
    load_listener_features,
    write_listener_features,
)


def harmonic(f0, seconds, sr=22050, amp=0.3):
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * sum(a * np.sin(2 * np.pi * k * f0 * t) for k, a in ((1, 1.0), (2, 0.5), (3, 0.25)))


def test_load_listener_features(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text("\n".join(",".join(["0.5"] * 70) for _ in range(3)) + "\n")
    s = load_listener_features(p, 30)
    assert s.frame_count == 3
    assert s.expression.shape == (3, 64) and s.pose.shape == (3, 6)


def test_listener_wrong_columns(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text(",".join(["0"] * 70) + "\n" + ",".join(["0"] * 69) + "\n")
    with pytest.raises(ValueError, match="row 2: expected 70 columns"):
        load_listener_features(p, 30)


def test_listener_non_numeric_and_empty(tmp_path):
    p = tmp_path / "l.csv"
    p.write_text(",".join(["0"] * 69 + ["x"]) + "\n")
    with pytest.raises(ValueError, match="row 1, column 70"):
        load_listener_features(p, 30)
    p.write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_listener_features(p, 30)


def test_listener_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    s = ListenerFeatureStream(30, rng.normal(size=(12, 70)))
    write_listener_features(tmp_path / "l.csv", s)
    back = load_listener_features(tmp_path / "l.csv", 30)
    assert np.max(np.abs(back.frames - s.frames)) <= 1e-6


def test_single_phoneme_tone():
    audio = AudioBuffer(harmonic(220, 0.3), 22050)
    (t,) = extract_prosody_targets(audio, PhonemeAlignment.from_durations(["a"], [0.3]))
    assert t.pitch_mask
    assert abs(t.log_pitch - math.log(220)) <= math.log(1.03)
    assert t.log_duration == math.log(300)


def test_silent_phoneme():
    audio = AudioBuffer(np.zeros(22050 // 5), 22050)
    (t,) = extract_prosody_targets(audio, PhonemeAlignment.from_durations(["sil"], [0.2]))
    assert not t.pitch_mask and t.log_pitch == 0.0
    assert t.log_energy == math.log(ENERGY_FLOOR)


def test_duration_is_exact():
    audio = AudioBuffer(harmonic(150, 0.5), 22050)
    targets = extract_prosody_targets(audio, PhonemeAlignment.from_durations(["a", "b", "c"], [0.12, 0.1, 0.2]))
    assert targets[1].log_duration == math.log(100)
    assert targets[0].log_duration == math.log(120)


def test_phoneme_outside_audio():
    audio = AudioBuffer(harmonic(150, 0.2), 22050)
    align = PhonemeAlignment.from_durations(["a", "b"], [0.2, 0.5])
    late = PhonemeAlignment((align.entries[0], align.entries[1].__class__("b", 1.0, 1.2)))
    with pytest.raises(ValueError, match="phoneme 1"):
        extract_prosody_targets(audio, late)


def test_speech_reprs_zero_audio():
    audio = AudioBuffer(np.zeros(22050 // 2), 22050)
    s = extract_speech_reprs(audio, PhonemeAlignment.from_durations(["a", "b"], [0.2, 0.3]))
    assert s.shape == (2, 80)
    assert np.allclose(s, math.log(1e-10))


def test_speech_reprs_identical_segments():
    # 200 Hz at 16 kHz repeats every 80 samples; both spans hold 19 frames shifted by 3040 samples
    audio = AudioBuffer(harmonic(200, 0.4, sr=16000), 16000)
    s = extract_speech_reprs(audio, PhonemeAlignment.from_durations(["a", "a"], [0.2, 0.2]))
    assert np.max(np.abs(s[0] - s[1])) < 1e-6


def test_speech_reprs_follow_f0():
    low, high = harmonic(120, 0.3), harmonic(400, 0.3)
    audio = AudioBuffer(np.concatenate([low, high]), 22050)
    s = extract_speech_reprs(audio, PhonemeAlignment.from_durations(["a", "b"], [0.3, 0.3]))
    assert s[0].argmax() < s[1].argmax()
    mel = log_mel(audio)
    assert mel.shape[1] == s.shape[1]
