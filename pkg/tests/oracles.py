"""Independent reference implementations used by the tests.

These deliberately avoid the package's own code paths: exact rational
arithmetic for frame timing, explicit enumeration for DTW, and per-frame
classification for the F0 metrics.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache


def brute_cutoffs(starts_ms, fps: int, phi: int, frame_count: int) -> list[int]:
    """Count, for each phoneme, the frames fully usable before it starts.

    Frame ``j`` (1-based) spans ``[(j-1)/fps, j/fps)``. The start frame is
    the one containing the start time; frames ``j <= start_frame - phi``
    are usable, capped by what the stream holds.
    """
    tau = Fraction(1, fps)
    out = []
    for ms in starts_ms:
        s = Fraction(ms, 1000)
        a_hat = None
        j = 1
        while a_hat is None:
            if (j - 1) * tau <= s < j * tau:
                a_hat = j
            j += 1
        usable = 0
        for k in range(1, frame_count + 1):
            if k + phi <= a_hat:
                usable += 1
        out.append(usable)
    return out


def brute_phi(tau: Fraction, latency: Fraction) -> int:
    phi = 1
    while phi * tau < latency:
        phi += 1
    return phi


def dtw_paths(n: int, m: int):
    """Every monotone path from (0, 0) to (n-1, m-1) with unit steps."""

    @lru_cache(maxsize=None)
    def from_cell(i, j):
        if (i, j) == (n - 1, m - 1):
            return (((i, j),),)
        out = []
        for di, dj in ((1, 1), (1, 0), (0, 1)):
            a, b = i + di, j + dj
            if a < n and b < m:
                out.extend(((i, j),) + tail for tail in from_cell(a, b))
        return tuple(out)

    return from_cell(0, 0)


def dtw_min_cost(costs) -> float:
    n, m = len(costs), len(costs[0])
    return min(sum(costs[i][j] for i, j in p) for p in dtw_paths(n, m))


# Frame classes for the F0 metrics oracle.
UU, UV, VU, VV_OK, VV_GROSS = range(5)
FRAME_CLASSES = (UU, UV, VU, VV_OK, VV_GROSS)


def classify_metrics(classes) -> tuple[float, float, float]:
    """(GPE, VDE, FFE) percentages straight from a per-frame class list."""
    n = len(classes)
    both = sum(1 for c in classes if c in (VV_OK, VV_GROSS))
    gross = sum(1 for c in classes if c == VV_GROSS)
    mismatch = sum(1 for c in classes if c in (UV, VU))
    gpe = 100.0 * gross / both if both else 0.0
    vde = 100.0 * mismatch / n if n else 0.0
    ffe = 100.0 * (mismatch + gross) / n if n else 0.0
    return gpe, vde, ffe


def class_count_patterns(n: int):
    """One representative sequence per multiset of classes of length ``n``."""
    for combo in itertools.combinations_with_replacement(FRAME_CLASSES, n):
        yield list(combo)


def realize_classes(classes, rng):
    """Concrete (ref_f0, est_f0) arrays for a class sequence; 0 Hz means unvoiced."""
    ref, est = [], []
    for c in classes:
        f = float(rng.uniform(60.0, 500.0))
        if c == UU:
            ref.append(0.0), est.append(0.0)
        elif c == UV:
            ref.append(0.0), est.append(f)
        elif c == VU:
            ref.append(f), est.append(0.0)
        elif c == VV_OK:
            ref.append(f), est.append(f * (1.0 + float(rng.uniform(-0.19, 0.19))))
        else:
            sign = 1.0 if rng.random() < 0.5 else -1.0
            ref.append(f), est.append(f * (1.0 + sign * float(rng.uniform(0.21, 0.6))))
    return ref, est

