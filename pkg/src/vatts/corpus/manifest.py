"""Line-delimited JSON manifests binding audio, alignment and listener files per utterance."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

from ..align import read_alignment_tsv
from ..features import LISTENER_DIM
from .wavio import read_wav


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    speaker: int
    wav: str
    align_tsv: str
    listener_csv: str
    fps: float
    ref_wav: str | None = None
    ref_align_tsv: str | None = None
    base_dir: str = ""

    def path(self, field_name: str) -> Path | None:
        value = getattr(self, field_name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if k != "base_dir" and v is not None}
        return json.dumps(d, sort_keys=True)


_REQUIRED = ("id", "speaker", "wav", "align_tsv", "listener_csv", "fps")
_OPTIONAL = ("ref_wav", "ref_align_tsv")


def load_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records, seen = [], set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {lineno}: malformed record ({exc.msg})") from None
        if not isinstance(d, dict):
            raise ValueError(f"{path}: line {lineno}: record must be an object")
        missing = [k for k in _REQUIRED if k not in d]
        if missing:
            raise ValueError(f"{path}: line {lineno}: missing fields {missing}")
        unknown = set(d) - set(_REQUIRED) - set(_OPTIONAL)
        if unknown:
            raise ValueError(f"{path}: line {lineno}: unknown fields {sorted(unknown)}")
        try:
            rec = ManifestRecord(
                id=str(d["id"]),
                speaker=int(d["speaker"]),
                wav=str(d["wav"]),
                align_tsv=str(d["align_tsv"]),
                listener_csv=str(d["listener_csv"]),
                fps=float(d["fps"]),
                ref_wav=d.get("ref_wav"),
                ref_align_tsv=d.get("ref_align_tsv"),
                base_dir=str(path.parent),
            )
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: line {lineno}: {exc}") from None
        if rec.id in seen:
            raise ValueError(f"{path}: line {lineno}: duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def validate_record(record: ManifestRecord, speaker_count: int | None = None) -> list[str]:
    """Return human-readable problems with one record (empty when it is usable)."""
    problems = []
    if not record.fps > 0:
        problems.append(f"{record.id}: fps must be positive, got {record.fps}")
    if record.speaker < 0 or (speaker_count is not None and record.speaker >= speaker_count):
        problems.append(f"{record.id}: speaker {record.speaker} out of range")
    for name in ("wav", "align_tsv", "listener_csv", "ref_wav", "ref_align_tsv"):
        p = record.path(name)
        if p is not None and not p.exists():
            problems.append(f"{record.id}: {name} not found: {p}")
    if problems:
        return problems

    for lineno, line in enumerate(record.path("listener_csv").read_text(encoding="utf-8").split("\n"), start=1):
        if line.strip() and len(line.split(",")) != LISTENER_DIM:
            problems.append(f"{record.id}: listener row {lineno} has {len(line.split(','))} columns, expected {LISTENER_DIM}")
            break
    try:
        audio = read_wav(record.path("wav"))
        align = read_alignment_tsv(record.path("align_tsv"))
    except ValueError as exc:
        return problems + [f"{record.id}: {exc}"]
    slack = 1.0 / record.fps if record.fps > 0 else 0.0
    if align.entries[-1].end_s > audio.duration_s + slack:
        problems.append(
            f"{record.id}: alignment ends at {align.entries[-1].end_s:.3f} s, audio lasts {audio.duration_s:.3f} s"
        )
    return problems
