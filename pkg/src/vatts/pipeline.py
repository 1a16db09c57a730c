"""File-level glue between manifests, extraction, training, inference and evaluation."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .align import DEFAULT_LATENCY_S, PhonemeAlignment, StreamClock, align_offline, read_alignment_tsv, write_alignment_tsv
from .corpus.manifest import ManifestRecord, load_manifest, validate_record, write_manifest
from .corpus.synth import SyntheticSpec, expected_frame_energy, generate_utterance, render, split_indices
from .corpus.wavio import read_wav, write_wav
from .dsp import AudioBuffer, F0Config, SpectralConfig, estimate_f0, mel_cepstra
from .features import (
    ListenerFeatureStream,
    ProsodyTarget,
    extract_prosody_targets,
    extract_speech_reprs,
    load_listener_features,
    targets_to_arrays,
    write_listener_features,
)
from .metrics import F0Counts, MetricReport, f0_counts, mcd_sums_from_cepstra, prosody_sums
from .model.checkpoint import ProsodyModel
from .model.inference import ProsodyPrediction, infer_streaming
from .model.training import Example

log = logging.getLogger(__name__)


def worker_count() -> int:
    env = os.environ.get("VATTS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"VATTS_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def parallel_map(fn, items):
    """Order-preserving map over a thread pool capped by ``VATTS_THREADS``."""
    items = list(items)
    workers = min(worker_count(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


# -- records ------------------------------------------------------------------


@dataclass
class RecordData:
    record: ManifestRecord
    audio: AudioBuffer
    alignment: PhonemeAlignment
    stream: ListenerFeatureStream
    reference: AudioBuffer
    ref_alignment: PhonemeAlignment


def load_record(record: ManifestRecord) -> RecordData:
    """Read every file of a record; without ``ref_wav`` the recording itself stands in."""
    audio = read_wav(record.path("wav"))
    alignment = read_alignment_tsv(record.path("align_tsv"))
    stream = load_listener_features(record.path("listener_csv"), record.fps)
    if record.ref_wav:
        reference = read_wav(record.path("ref_wav"))
        ref_alignment = read_alignment_tsv(record.path("ref_align_tsv")) if record.ref_align_tsv else alignment
    else:
        log.warning("%s: no ref_wav; speech representations come from the recording itself", record.id)
        reference, ref_alignment = audio, alignment
    if ref_alignment.phonemes != alignment.phonemes:
        raise ValueError(f"{record.id}: reference alignment has a different phoneme sequence")
    return RecordData(record, audio, alignment, stream, reference, ref_alignment)


def checked_records(manifest) -> list[ManifestRecord]:
    records = load_manifest(manifest)
    problems = [p for r in records for p in validate_record(r)]
    if problems:
        raise ValueError("invalid manifest records:\n  " + "\n  ".join(problems))
    return sorted(records, key=lambda r: r.id)


@dataclass
class Extracted:
    uid: str
    speaker: int
    phonemes: list[str]
    targets: list[ProsodyTarget]
    speech_reprs: np.ndarray
    cutoffs: list[int]
    frame_count: int

    def to_dict(self) -> dict:
        return {
            "id": self.uid,
            "speaker": self.speaker,
            "phonemes": self.phonemes,
            "targets": [t.to_dict() for t in self.targets],
            "speech_reprs": self.speech_reprs.tolist(),
            "cutoffs": self.cutoffs,
            "frame_count": self.frame_count,
        }


def extract_record(
    data: RecordData,
    f0cfg: F0Config = F0Config(),
    speccfg: SpectralConfig = SpectralConfig(),
    latency_s: float = DEFAULT_LATENCY_S,
) -> Extracted:
    clock = StreamClock.from_fps(data.record.fps, latency_s)
    return Extracted(
        data.record.id,
        data.record.speaker,
        data.alignment.phonemes,
        extract_prosody_targets(data.audio, data.alignment, f0cfg, speccfg),
        extract_speech_reprs(data.reference, data.ref_alignment, speccfg),
        align_offline(data.alignment, clock, data.stream.frame_count),
        data.stream.frame_count,
    )


def build_vocab(extracted: list[Extracted]) -> list[str]:
    return sorted({p for e in extracted for p in e.phonemes})


def to_example(ex: Extracted, stream: ListenerFeatureStream, vocab: list[str]) -> Example:
    index = {p: i for i, p in enumerate(vocab)}
    values, mask = targets_to_arrays(ex.targets)
    return Example(
        ex.uid,
        ex.speaker,
        np.array([index[p] for p in ex.phonemes]),
        ex.speech_reprs,
        stream.frames,
        ex.cutoffs,
        values,
        mask,
    )


# -- synthetic corpus -----------------------------------------------------------


def write_synthetic_corpus(spec: SyntheticSpec, out_dir, n_test: int) -> dict:
    """Render a corpus to disk with ``manifest.jsonl`` plus seeded ``train``/``test`` splits."""
    out = Path(out_dir)
    for sub in ("wav", "ref", "align", "listener", "truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    records = []
    for index in range(spec.n_utterances):
        u = generate_utterance(spec, index)
        write_wav(out / "wav" / f"{u.uid}.wav", u.audio)
        write_wav(out / "ref" / f"{u.uid}.wav", u.reference)
        write_alignment_tsv(out / "align" / f"{u.uid}.tsv", u.alignment)
        write_alignment_tsv(out / "ref" / f"{u.uid}.tsv", u.ref_alignment)
        write_listener_features(out / "listener" / f"{u.uid}.csv", u.stream)
        dump_json(
            out / "truth" / f"{u.uid}.json",
            {
                "id": u.uid,
                "targets": [t.to_dict() for t in u.targets],
                "cutoffs": u.cutoffs,
                "active": u.active,
            },
        )
        records.append(
            ManifestRecord(
                u.uid, u.speaker, f"wav/{u.uid}.wav", f"align/{u.uid}.tsv", f"listener/{u.uid}.csv",
                spec.fps, f"ref/{u.uid}.wav", f"ref/{u.uid}.tsv",
            )
        )
    train_idx, test_idx = split_indices(len(records), n_test, spec.seed)
    write_manifest(out / "manifest.jsonl", records)
    write_manifest(out / "train.jsonl", [records[i] for i in train_idx])
    write_manifest(out / "test.jsonl", [records[i] for i in test_idx])
    return {"utterances": len(records), "train": len(train_idx), "test": len(test_idx)}


# -- predictions ------------------------------------------------------------------


def predict_record(model: ProsodyModel, data: RecordData, ex: Extracted, latency_s: float = DEFAULT_LATENCY_S):
    clock = StreamClock.from_fps(data.record.fps, latency_s)
    ids = [model.phoneme_id(p) for p in ex.phonemes]
    return infer_streaming(model, ids, data.record.speaker, ex.speech_reprs, data.stream, clock, ex.phonemes)


def write_predictions(path, uid: str, preds: list[ProsodyPrediction], visual_blind: bool) -> None:
    dump_json(path, {"id": uid, "visual_blind": visual_blind, "predictions": [p.to_dict() for p in preds]})


def read_predictions(path) -> list[ProsodyPrediction]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ProsodyPrediction.from_dict(p) for p in d["predictions"]]


def render_predictions(preds: list[ProsodyPrediction], sample_rate: int, speccfg: SpectralConfig = SpectralConfig()) -> AudioBuffer:
    """Harmonic-tone rendering of predicted prosody (desk-scale stand-in for a vocoder)."""
    unit = expected_frame_energy(1.0, sample_rate, speccfg)
    durations = [max(round(p.duration_ms), 10) for p in preds]
    amps = [min(p.energy / unit, 0.9) for p in preds]
    return render([p.pitch_hz for p in preds], amps, durations, sample_rate)


# -- evaluation -------------------------------------------------------------------


def _truncate(track, n):
    from .dsp import F0Track

    return F0Track(track.f0_hz[:n], track.voiced[:n], track.hop_ms)


def evaluate_system(
    name: str,
    records: list[ManifestRecord],
    pred_dir,
    est_audio_dir=None,
    f0cfg: F0Config = F0Config(),
    speccfg: SpectralConfig = SpectralConfig(),
) -> tuple[MetricReport, list[dict]]:
    """Score one system against reference recordings; reduction runs in record order."""

    def one(record: ManifestRecord):
        data = load_record(record)
        ref_targets = extract_prosody_targets(data.audio, data.alignment, f0cfg, speccfg)
        pred_path = Path(pred_dir) / f"{record.id}.json"
        if not pred_path.exists():
            raise FileNotFoundError(f"missing prediction for {record.id}: {pred_path}")
        preds = read_predictions(pred_path)
        sums = prosody_sums(ref_targets, preds)
        entry = {"id": record.id, "wav": str(record.path("wav")), "pred": str(pred_path)}
        counts = mcd = None
        if est_audio_dir is not None:
            est_path = Path(est_audio_dir) / f"{record.id}.wav"
            est = read_wav(est_path)
            ref_track, est_track = estimate_f0(data.audio, f0cfg), estimate_f0(est, f0cfg)
            n = min(len(ref_track), len(est_track))
            counts = f0_counts(_truncate(ref_track, n), _truncate(est_track, n))
            mcd = mcd_sums_from_cepstra(mel_cepstra(data.audio), mel_cepstra(est))
            entry["est_wav"] = str(est_path)
        return sums, counts, mcd, entry

    results = parallel_map(one, records)
    report = MetricReport(name)
    entries = []
    for sums, counts, mcd, entry in results:
        report.prosody = report.prosody.merge(sums)
        if counts is not None:
            report.f0 = counts if report.f0 is None else report.f0.merge(counts)
            report.mcd = mcd if report.mcd is None else report.mcd.merge(mcd)
        entries.append(entry)
    return report, entries


__all__ = [
    "Extracted",
    "F0Counts",
    "RecordData",
    "build_vocab",
    "checked_records",
    "evaluate_system",
    "extract_record",
    "load_record",
    "parallel_map",
    "predict_record",
    "read_predictions",
    "render_predictions",
    "to_example",
    "write_predictions",
    "write_synthetic_corpus",
]
