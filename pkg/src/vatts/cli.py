"""Command-line entry point: ``vatts <command> ...``.

Exit status is 0 on success, 1 for usage errors, 2 for unreadable or
inconsistent data and 3 when training diverges.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

from . import pipeline
from .align import DEFAULT_LATENCY_S, compute_phi
from .corpus.manifest import load_manifest
from .corpus.synth import SyntheticSpec
from .corpus.wavio import read_wav, write_wav
from .metrics import CSV_COLUMNS
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.config import ModelConfig, TrainConfig
from .model.training import NumericalError, train

log = logging.getLogger("vatts")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _show_config(command: str, cfg: dict) -> None:
    print(f"# {command} " + json.dumps(cfg, sort_keys=True, default=str))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


# -- commands -----------------------------------------------------------------


def cmd_phi(args) -> int:
    if not args.fps > 0:
        raise UsageError("--fps must be positive")
    if args.latency_ms < 0:
        raise UsageError("--latency-ms must be non-negative")
    tau = 1.0 / args.fps
    latency = args.latency_ms / 1000.0
    _show_config("phi", {"fps": args.fps, "latency_ms": args.latency_ms})
    phi = compute_phi(tau, latency)
    print(f"phi = {phi}")
    print(f"frame period = {tau * 1000:.4f} ms, latency = {args.latency_ms:.4f} ms, margin = {(phi * tau - latency) * 1000:.4f} ms")
    return 0


def cmd_synth(args) -> int:
    n_test = args.test if args.test is not None else args.n // 4
    if args.n < 1 or not 0 <= n_test < args.n:
        raise UsageError("need --n >= 1 and 0 <= --test < --n")
    spec = SyntheticSpec(n_utterances=args.n, seed=args.seed, sample_rate=args.sample_rate, fps=args.fps)
    _show_config("synth", {**asdict(spec), "test": n_test, "out": args.out})
    summary = pipeline.write_synthetic_corpus(spec, args.out, n_test)
    print(f"wrote {summary['utterances']} utterances ({summary['train']} train / {summary['test']} test) to {args.out}")
    return 0


def _extract_all(manifest):
    records = pipeline.checked_records(manifest)
    if not records:
        raise ValueError(f"{manifest}: no records")

    def one(record):
        data = pipeline.load_record(record)
        return data, pipeline.extract_record(data)

    return pipeline.parallel_map(one, records)


def cmd_extract(args) -> int:
    _show_config("extract", {"manifest": args.manifest, "out": args.out, "threads": pipeline.worker_count()})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _extract_all(args.manifest)
    for _, ex in results:
        pipeline.dump_json(out / f"{ex.uid}.json", ex.to_dict())
    with open(out / "targets.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "index", "phoneme", "pitch_hz", "voiced", "energy", "duration_ms", "a_i"])
        for _, ex in results:
            for i, (p, t, a) in enumerate(zip(ex.phonemes, ex.targets, ex.cutoffs)):
                w.writerow([ex.uid, i, p, _fmt(t.pitch_hz), int(t.pitch_mask), _fmt(t.energy), _fmt(t.duration_ms), a])
    print(f"extracted {len(results)} utterances to {out}")
    return 0


def _load_config(path) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FileNotFoundError(f"config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON ({exc.msg})") from None
    unknown = set(d) - {"model", "train"}
    if unknown:
        raise ValueError(f"{path}: unknown sections {sorted(unknown)}")
    return dict(d.get("model", {})), dict(d.get("train", {}))


def cmd_train(args) -> int:
    model_over, train_over = _load_config(args.config)
    if args.seed is not None:
        train_over["seed"] = args.seed
    if args.epochs is not None:
        train_over["epochs"] = args.epochs
    train_cfg = TrainConfig.from_dict({**TrainConfig().to_dict(), **train_over})

    results = _extract_all(args.manifest)
    vocab = pipeline.build_vocab([ex for _, ex in results])
    speakers = max(ex.speaker for _, ex in results) + 1
    model_d = {"speaker_count": max(10, speakers), **model_over, "phoneme_vocab": len(vocab)}
    if args.visual_blind:
        model_d["visual_blind"] = True
    model_cfg = ModelConfig.from_dict(model_d)
    if speakers > model_cfg.speaker_count:
        raise ValueError(f"manifest uses speaker {speakers - 1} but speaker_count is {model_cfg.speaker_count}")
    _show_config(
        "train",
        {"manifest": args.manifest, "out": args.out, "model": model_cfg.to_dict(), "train": train_cfg.to_dict()},
    )
    examples = [pipeline.to_example(ex, data.stream, vocab) for data, ex in results]

    def progress(epoch, loss, lr):
        if epoch == 1 or epoch % max(1, train_cfg.epochs // 10) == 0 or epoch == train_cfg.epochs:
            print(f"epoch {epoch:4d}  loss {loss:.6f}  lr {lr:.3g}")

    result = train(examples, model_cfg, train_cfg, vocab, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, result.model)
    loss_path = out.with_suffix(".loss.csv")
    with open(loss_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss\n")
        for i, v in enumerate(result.epoch_loss, start=1):
            fh.write(f"{i},{v!r}\n")
    print(f"saved {out} and {loss_path}")
    return 0


def cmd_infer(args) -> int:
    model = load_checkpoint(args.ckpt)
    latency = args.latency_ms / 1000.0
    _show_config(
        "infer",
        {"ckpt": args.ckpt, "manifest": args.manifest, "out": args.out, "latency_ms": args.latency_ms,
         "render_audio": args.render_audio, "visual_blind": model.cfg.visual_blind},
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _extract_all(args.manifest)
    for data, ex in results:
        unknown = sorted(set(ex.phonemes) - set(model.vocab))
        if unknown:
            raise ValueError(f"{ex.uid}: phonemes not in the checkpoint vocabulary: {unknown}")
        preds = pipeline.predict_record(model, data, ex, latency)
        pipeline.write_predictions(out / f"{ex.uid}.json", ex.uid, preds, model.cfg.visual_blind)
        if args.render_audio:
            write_wav(out / f"{ex.uid}.wav", pipeline.render_predictions(preds, data.audio.sample_rate))
    print(f"wrote predictions for {len(results)} utterances to {out}")
    return 0


def _named_dirs(values, flag) -> dict[str, str]:
    out = {}
    for i, v in enumerate(values or []):
        name, sep, path = v.partition("=")
        if not sep:
            name, path = (Path(v).name or f"system{i}"), v
        if not name or not path:
            raise UsageError(f"{flag} expects NAME=DIR, got {v!r}")
        if name in out:
            raise UsageError(f"{flag}: duplicate system name {name!r}")
        out[name] = path
    return out


def cmd_eval(args) -> int:
    preds = _named_dirs(args.pred, "--pred")
    if not preds:
        raise UsageError("at least one --pred is required")
    est = _named_dirs(args.est_audio, "--est-audio")
    if len(est) == 1 and len(preds) == 1 and set(est) != set(preds):
        est = {next(iter(preds)): next(iter(est.values()))}
    stray = set(est) - set(preds)
    if stray:
        raise UsageError(f"--est-audio names without a matching --pred: {sorted(stray)}")
    _show_config("eval", {"ref_manifest": args.ref_manifest, "pred": preds, "est_audio": est, "out": args.out})

    records = pipeline.checked_records(args.ref_manifest)
    reports = []
    for name, pred_dir in preds.items():
        report, _ = pipeline.evaluate_system(name, records, pred_dir, est.get(name))
        reports.append(report)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            row = r.row()
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    doc = {
        "ref_manifest": args.ref_manifest,
        "systems": [{"name": n, "pred": preds[n], "est_audio": est.get(n)} for n in preds],
        "utterances": [r.id for r in records],
        "results": [r.to_dict() for r in reports],
    }
    if args.stamp:
        doc["generated_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    pipeline.dump_json(out / "report.json", doc)
    for r in reports:
        row = r.row()
        print("  ".join(f"{c}={_fmt(row[c]) or '-'}" for c in CSV_COLUMNS))
    print(f"wrote {out / 'report.csv'} and {out / 'report.json'}")
    return 0


def cmd_report(args) -> int:
    from . import plots

    src = Path(args.input)
    doc_path = src / "report.json" if src.is_dir() else src
    if not doc_path.exists():
        raise FileNotFoundError(f"report not found: {doc_path}")
    doc = json.loads(doc_path.read_text(encoding="utf-8"))
    out = Path(args.plots)
    out.mkdir(parents=True, exist_ok=True)
    _show_config("report", {"in": str(doc_path), "plots": str(out), "limit": args.limit})

    records = {r.id: r for r in load_manifest(doc["ref_manifest"])}
    ids = doc["utterances"] if args.limit is None else doc["utterances"][: args.limit]
    for uid in ids:
        record = records[uid]
        audio = read_wav(record.path("wav"))
        preds, est = {}, {}
        for s in doc["systems"]:
            preds[s["name"]] = pipeline.read_predictions(Path(s["pred"]) / f"{uid}.json")
            if s.get("est_audio"):
                est[s["name"]] = read_wav(Path(s["est_audio"]) / f"{uid}.wav")
        curves = plots.frame_curves(audio, preds, est)
        plots.write_curves_csv(out / f"{uid}_curves.csv", curves)
        plots.plot_utterance(out / f"{uid}.png", uid, audio, curves)
    rows = [{k: v for k, v in r.items() if k != "counts"} for r in doc["results"]]
    plots.plot_summary(out / "summary.png", rows)
    print(f"wrote curves and figures for {len(ids)} utterances to {out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vatts", description="Listener-aware phoneme prosody: data, training, inference, evaluation.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("phi", help="latency guard margin in frames")
    s.add_argument("--fps", type=float, required=True)
    s.add_argument("--latency-ms", type=float, default=DEFAULT_LATENCY_S * 1000)
    s.set_defaults(func=cmd_phi)

    s = sub.add_parser("synth", help="render a synthetic corpus with manifests and splits")
    s.add_argument("--n", type=int, default=64)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--test", type=int, default=None, help="held-out utterances (default n // 4)")
    s.add_argument("--sample-rate", type=int, default=22050)
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="per-phoneme targets, speech representations and cutoffs")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="fit a prosody model")
    s.add_argument("--manifest", required=True)
    s.add_argument("--config", default=None, help='JSON with optional "model" and "train" sections')
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--visual-blind", action="store_true", help="ignore listener frames")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="streaming prediction for each record")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--latency-ms", type=float, default=DEFAULT_LATENCY_S * 1000)
    s.add_argument("--render-audio", action="store_true", help="also write a tone rendering per utterance")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="score one or more systems")
    s.add_argument("--ref-manifest", required=True)
    s.add_argument("--pred", action="append", metavar="NAME=DIR", help="prediction directory (repeatable)")
    s.add_argument("--est-audio", action="append", metavar="NAME=DIR", help="rendered audio per system")
    s.add_argument("--stamp", action="store_true", help="record the generation time in report.json")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", help="frame-level curves and figures from an eval report")
    s.add_argument("--in", dest="input", required=True, help="eval output directory or report.json")
    s.add_argument("--plots", required=True)
    s.add_argument("--limit", type=int, default=None, help="plot only the first N utterances")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"vatts {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"vatts {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileNotFoundError, ValueError, KeyError) as exc:
        print(f"vatts {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
