"""Objective prosody metrics: MCD13 with DTW, GPE/VDE/FFE, and phoneme-level prosody MAE.

Utterance-level results are kept as sums and counts so a corpus score is
an associative reduction, independent of how utterances are batched.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dsp import CEPSTRAL_CONFIG, AudioBuffer, F0Track, SpectralConfig, mel_cepstra

MCD_CONST = 10.0 / math.log(10.0) * math.sqrt(2.0)
DURATION_RULE_MS = 50.0


@dataclass(frozen=True)
class F0CompareConfig:
    rel_threshold: float = 0.20

    def __post_init__(self):
        if not 0.0 < self.rel_threshold < 1.0:
            raise ValueError("rel_threshold must lie in (0, 1)")


# -- DTW / MCD ----------------------------------------------------------------


def dtw_align(costs) -> list[tuple[int, int]]:
    """Minimal-cost monotone path from (0, 0) to (N-1, M-1) with unit steps.

    Ties during backtracking prefer the diagonal, then a step in the first
    index only.
    """
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2 or costs.size == 0:
        raise ValueError("cost matrix must be non-empty and two-dimensional")
    if not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix must be finite")
    n, m = costs.shape
    acc = np.full((n, m), np.inf)
    acc[0] = np.cumsum(costs[0])
    for i in range(1, n):
        from_above = np.minimum(acc[i - 1], np.concatenate([[np.inf], acc[i - 1, :-1]]))
        row = acc[i]
        row[0] = costs[i, 0] + acc[i - 1, 0]
        for j in range(1, m):
            row[j] = costs[i, j] + min(from_above[j], row[j - 1])
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while i > 0 or j > 0:
        options = []
        if i > 0 and j > 0:
            options.append((acc[i - 1, j - 1], 0, i - 1, j - 1))
        if i > 0:
            options.append((acc[i - 1, j], 1, i - 1, j))
        if j > 0:
            options.append((acc[i, j - 1], 2, i, j - 1))
        _, _, i, j = min(options)
        path.append((i, j))
    return path[::-1]


def path_cost(costs, path) -> float:
    costs = np.asarray(costs)
    return float(sum(costs[i, j] for i, j in path))


@dataclass
class MCDSums:
    total: float = 0.0
    steps: int = 0

    def merge(self, other: "MCDSums") -> "MCDSums":
        return MCDSums(self.total + other.total, self.steps + other.steps)

    @property
    def value(self) -> float:
        return self.total / self.steps if self.steps else math.nan


def mcd_sums_from_cepstra(ref_cep, est_cep) -> MCDSums:
    ref_cep = np.asarray(ref_cep, dtype=np.float64)
    est_cep = np.asarray(est_cep, dtype=np.float64)
    if ref_cep.shape[1] != est_cep.shape[1]:
        raise ValueError("cepstral orders differ")
    diff = ref_cep[:, None, :] - est_cep[None, :, :]
    dist = MCD_CONST * np.sqrt((diff * diff).sum(axis=-1))
    path = dtw_align(dist)
    return MCDSums(path_cost(dist, path), len(path))


def mcd_from_cepstra(ref_cep, est_cep) -> float:
    """MCD over already-computed cepstra (c1..c13 rows), DTW-aligned."""
    return mcd_sums_from_cepstra(ref_cep, est_cep).value


def mcd13(ref: AudioBuffer, est: AudioBuffer, speccfg: SpectralConfig = CEPSTRAL_CONFIG) -> float:
    if ref.sample_rate != est.sample_rate:
        raise ValueError(f"sample-rate mismatch: {ref.sample_rate} vs {est.sample_rate}")
    return mcd_from_cepstra(mel_cepstra(ref, speccfg), mel_cepstra(est, speccfg))


# -- F0 frame metrics ---------------------------------------------------------


@dataclass
class F0Counts:
    frames: int = 0
    voicing_errors: int = 0
    both_voiced: int = 0
    gross_errors: int = 0

    def merge(self, other: "F0Counts") -> "F0Counts":
        return F0Counts(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))

    @property
    def gpe(self) -> float:
        return 100.0 * self.gross_errors / self.both_voiced if self.both_voiced else 0.0

    @property
    def vde(self) -> float:
        return 100.0 * self.voicing_errors / self.frames if self.frames else 0.0

    @property
    def ffe(self) -> float:
        return 100.0 * (self.voicing_errors + self.gross_errors) / self.frames if self.frames else 0.0


def f0_counts(ref: F0Track, est: F0Track, cfg: F0CompareConfig = F0CompareConfig()) -> F0Counts:
    if len(ref) != len(est):
        raise ValueError(f"frame count mismatch: {len(ref)} vs {len(est)}")
    if ref.hop_ms != est.hop_ms:
        raise ValueError(f"hop mismatch: {ref.hop_ms} vs {est.hop_ms} ms")
    both = ref.voiced & est.voiced
    gross = both & (np.abs(est.f0_hz - ref.f0_hz) > cfg.rel_threshold * ref.f0_hz)
    return F0Counts(len(ref), int(np.sum(ref.voiced != est.voiced)), int(both.sum()), int(gross.sum()))


def gpe(ref: F0Track, est: F0Track, cfg: F0CompareConfig = F0CompareConfig()) -> float:
    """Percent of both-voiced frames whose F0 is off by more than the relative threshold.

    Returns 0 when no frame is voiced in both tracks (see ``f0_counts`` for
    the denominator).
    """
    return f0_counts(ref, est, cfg).gpe


def vde(ref: F0Track, est: F0Track) -> float:
    return f0_counts(ref, est).vde


def ffe(ref: F0Track, est: F0Track, cfg: F0CompareConfig = F0CompareConfig()) -> float:
    return f0_counts(ref, est, cfg).ffe


# -- phoneme-level prosody MAE --------------------------------------------------


@dataclass
class ProsodySums:
    pitch: float = 0.0
    pitch_n: int = 0
    energy: float = 0.0
    energy_n: int = 0
    duration: float = 0.0
    duration_n: int = 0

    def merge(self, other: "ProsodySums") -> "ProsodySums":
        return ProsodySums(*(a + b for a, b in zip(asdict(self).values(), asdict(other).values())))

    @property
    def mae(self) -> tuple[float, float, float]:
        def avg(s, n):
            return s / n if n else math.nan

        return avg(self.pitch, self.pitch_n), avg(self.energy, self.energy_n), avg(self.duration, self.duration_n)


def prosody_sums(ref, est) -> ProsodySums:
    """Accumulate linear-domain absolute errors.

    Duration counts for every phoneme. Pitch and energy count only where the
    duration error is under 50 ms, and pitch additionally needs both sides
    voiced (predictions carry no mask and count as voiced).
    """
    if len(ref) != len(est):
        raise ValueError(f"length mismatch: {len(ref)} reference vs {len(est)} estimated phonemes")
    s = ProsodySums()
    for r, e in zip(ref, est):
        d_err = abs(math.exp(e.log_duration) - math.exp(r.log_duration))
        s.duration += d_err
        s.duration_n += 1
        if d_err >= DURATION_RULE_MS:
            continue
        s.energy += abs(math.exp(e.log_energy) - math.exp(r.log_energy))
        s.energy_n += 1
        if r.pitch_mask and getattr(e, "pitch_mask", True):
            s.pitch += abs(math.exp(e.log_pitch) - math.exp(r.log_pitch))
            s.pitch_n += 1
    return s


def prosody_mae(ref, est) -> tuple[float, float, float]:
    """(pitch Hz, energy, duration ms) mean absolute errors; NaN marks an empty denominator."""
    return prosody_sums(ref, est).mae


# -- report -------------------------------------------------------------------

CSV_COLUMNS = ("system", "GPE", "VDE", "FFE", "MCD13", "MAE_pitch", "MAE_energy", "MAE_duration_ms")


@dataclass
class MetricReport:
    system: str
    prosody: ProsodySums = field(default_factory=ProsodySums)
    f0: F0Counts | None = None
    mcd: MCDSums | None = None

    @property
    def gpe(self):
        return self.f0.gpe if self.f0 else None

    @property
    def vde(self):
        return self.f0.vde if self.f0 else None

    @property
    def ffe(self):
        return self.f0.ffe if self.f0 else None

    @property
    def mcd13(self):
        return self.mcd.value if self.mcd and self.mcd.steps else None

    def row(self) -> dict:
        mp, me, md = self.prosody.mae
        values = {
            "system": self.system,
            "GPE": self.gpe,
            "VDE": self.vde,
            "FFE": self.ffe,
            "MCD13": self.mcd13,
            "MAE_pitch": None if math.isnan(mp) else mp,
            "MAE_energy": None if math.isnan(me) else me,
            "MAE_duration_ms": None if math.isnan(md) else md,
        }
        return values

    def to_dict(self) -> dict:
        d = self.row()
        d["counts"] = {
            "phonemes": self.prosody.duration_n,
            "pitch_phonemes": self.prosody.pitch_n,
            "energy_phonemes": self.prosody.energy_n,
            "f0_frames": self.f0.frames if self.f0 else 0,
            "both_voiced_frames": self.f0.both_voiced if self.f0 else 0,
            "mcd_path_steps": self.mcd.steps if self.mcd else 0,
        }
        return d
