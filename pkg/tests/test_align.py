import logging

import pytest
from hypothesis import given, strategies as st

from vatts.align import (
    PhonemeAlignment,
    StreamClock,
    align_offline,
    align_streaming,
    causal_cutoff,
    compute_phi,
    read_alignment_tsv,
    start_frame,
    write_alignment_tsv,
)

TAU = 1 / 30


@pytest.mark.parametrize("latency, phi", [(2.67e-3, 1), (0.040, 2), (0.0, 1), (2 / 30, 2), (0.034, 2)])
def test_compute_phi(latency, phi):
    assert compute_phi(TAU, latency) == phi


def test_compute_phi_rejects_bad_tau():
    with pytest.raises(ValueError):
        compute_phi(0.0, 0.01)


@pytest.mark.parametrize("start, frame", [(0.0, 1), (0.1, 4), (0.095, 3)])
def test_start_frame(start, frame):
    assert start_frame(start, TAU) == frame


@pytest.mark.parametrize("a_hat, phi, a", [(4, 1, 3), (1, 1, 0), (10, 3, 7)])
def test_causal_cutoff(a_hat, phi, a):
    assert causal_cutoff(a_hat, phi) == a


def _align(starts, last_end):
    ends = list(starts[1:]) + [last_end]
    return PhonemeAlignment.from_durations(["a"] * len(starts), [e - s for s, e in zip(starts, ends)], start_s=starts[0])


def test_align_offline_examples():
    clock = StreamClock(TAU, 1)
    assert align_offline(_align([0.0, 0.1, 0.3], 0.5), clock, 100) == [0, 3, 9]
    assert align_offline(_align([0.0, 0.1, 0.3], 0.5), clock, 0) == [0, 0, 0]
    assert align_offline(_align([0.0], 0.2), clock, 10) == [0]


def test_align_offline_warns_past_stream(caplog):
    with caplog.at_level(logging.WARNING):
        out = align_offline(_align([0.0, 2.0], 2.5), StreamClock(TAU, 1), 5)
    assert out == [0, 5]
    assert "listener stream ends" in caplog.text


def test_align_streaming_examples():
    clock = StreamClock(TAU, 1)
    assert align_streaming([0.1, 0.2], clock) == [0, 3]
    assert align_streaming([0.0, 0.0, 0.0], clock) == [0, 0, 0]
    assert align_streaming([1.0], clock) == [0]
    with pytest.raises(ValueError):
        align_streaming([0.1, -0.01], clock)


@given(st.lists(st.integers(1, 500), min_size=1, max_size=20))
def test_streaming_matches_offline(durs_ms):
    clock = StreamClock.from_fps(30)
    align = PhonemeAlignment.from_durations(["a"] * len(durs_ms), [d / 1000 for d in durs_ms])
    assert align_streaming([d / 1000 for d in durs_ms], clock) == align_offline(align, clock, 10_000)


@given(st.lists(st.integers(0, 10_000), min_size=2, max_size=30))
def test_cutoffs_monotone(starts):
    starts = sorted(set(starts))
    if len(starts) < 2:
        return
    clock = StreamClock.from_fps(25)
    cut = align_offline(_align([s / 1000 for s in starts], starts[-1] / 1000 + 0.1), clock, 1000)
    assert cut == sorted(cut)


def test_tsv_round_trip(tmp_path):
    align = PhonemeAlignment.from_durations(["sil", "a", "b"], [0.12, 0.08, 0.3])
    write_alignment_tsv(tmp_path / "x.tsv", align)
    back = read_alignment_tsv(tmp_path / "x.tsv")
    assert back.phonemes == align.phonemes
    assert all(abs(a - b) < 1e-9 for a, b in zip(back.starts, align.starts))


def test_tsv_errors(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text("a\t0.0\n")
    with pytest.raises(ValueError, match="bad.tsv:1"):
        read_alignment_tsv(p)
    p.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_alignment_tsv(p)
