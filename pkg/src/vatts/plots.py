"""Frame-indexed prosody curves and the figures drawn from them.

Everything renders through the Agg backend into files; nothing is shown
on screen.
"""

from __future__ import annotations

import csv
import math

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .dsp import AudioBuffer, F0Config, SpectralConfig, estimate_f0, f0_frame_centers_s, frame_energy, log_mel  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}
SYSTEM_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")


def _phoneme_curve(values, durations_ms, times_s) -> np.ndarray:
    """Step curve that holds ``values[i]`` over phoneme ``i``'s span; NaN past the end."""
    ends = np.cumsum(np.asarray(durations_ms, dtype=np.float64)) / 1000.0
    idx = np.searchsorted(ends, times_s, side="right")
    out = np.full(len(times_s), np.nan)
    inside = idx < len(ends)
    out[inside] = np.asarray(values, dtype=np.float64)[idx[inside]]
    return out


def frame_curves(
    audio: AudioBuffer,
    predictions: dict | None = None,
    est_audio: dict | None = None,
    f0cfg: F0Config = F0Config(),
    speccfg: SpectralConfig = SpectralConfig(),
) -> dict[str, np.ndarray]:
    """Per-frame F0 and energy of a recording, with optional system overlays.

    Frames follow the F0 tracker's grid; spectral energy frames share the
    hop and are cut to the same count. ``predictions`` maps a system name to
    its per-phoneme predictions, laid out along their own predicted
    durations. ``est_audio`` maps a system name to rendered audio, which is
    tracked like the reference.
    """
    track = estimate_f0(audio, f0cfg)
    energy = frame_energy(audio, speccfg)
    n = min(len(track), len(energy))
    times = f0_frame_centers_s(len(track), audio.sample_rate, f0cfg)[:n]
    curves = {
        "frame": np.arange(n),
        "time_s": times,
        "ref_f0_hz": np.where(track.voiced[:n], track.f0_hz[:n], np.nan),
        "ref_energy": energy[:n],
    }
    for name, preds in (predictions or {}).items():
        durs = [p.duration_ms for p in preds]
        curves[f"{name}_pitch_hz"] = _phoneme_curve([p.pitch_hz for p in preds], durs, times)
        curves[f"{name}_energy"] = _phoneme_curve([p.energy for p in preds], durs, times)
    for name, est in (est_audio or {}).items():
        t = estimate_f0(est, f0cfg)
        col = np.full(n, np.nan)
        m = min(n, len(t))
        col[:m] = np.where(t.voiced[:m], t.f0_hz[:m], np.nan)
        curves[f"{name}_est_f0_hz"] = col
    return curves


def write_curves_csv(path, curves: dict[str, np.ndarray]) -> None:
    cols = list(curves)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in zip(*(curves[c] for c in cols)):
            w.writerow(["" if isinstance(v, float) and math.isnan(v) else repr(v.item() if hasattr(v, "item") else v) for v in row])


def plot_utterance(path, uid: str, audio: AudioBuffer, curves: dict[str, np.ndarray], speccfg: SpectralConfig = SpectralConfig()):
    """Log-mel spectrogram over F0 and energy panels, one line per system."""
    systems = sorted({k[: -len("_pitch_hz")] for k in curves if k.endswith("_pitch_hz")})
    mel = log_mel(audio, speccfg)
    t = curves["time_s"]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(7.0, 6.0), sharex=True, gridspec_kw={"height_ratios": [1.2, 1, 1]})
        ax = axes[0]
        hop = speccfg.hop_samples(audio.sample_rate) / audio.sample_rate
        ax.imshow(mel.T, origin="lower", aspect="auto", cmap="magma", extent=[0, len(mel) * hop, 0, mel.shape[1]])
        ax.set_ylabel("mel band")
        ax.set_title(uid, loc="left")

        ax = axes[1]
        ax.plot(t, curves["ref_f0_hz"], color="k", lw=1.2, label="recording")
        for c, name in zip(SYSTEM_COLORS, systems):
            ax.plot(t, curves[f"{name}_pitch_hz"], color=c, lw=1.0, drawstyle="steps-post", label=name)
            if f"{name}_est_f0_hz" in curves:
                ax.plot(t, curves[f"{name}_est_f0_hz"], color=c, lw=0.6, ls=":")
        ax.set_ylabel("F0 (Hz)")
        ax.legend(frameon=False, ncol=max(1, len(systems) + 1))

        ax = axes[2]
        ax.plot(t, curves["ref_energy"], color="k", lw=1.2)
        for c, name in zip(SYSTEM_COLORS, systems):
            ax.plot(t, curves[f"{name}_energy"], color=c, lw=1.0, drawstyle="steps-post")
        ax.set_ylabel("frame energy")
        ax.set_xlabel("time (s)")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_summary(path, rows: list[dict]):
    """Grouped bars of the three prosody errors, one bar per system."""
    metrics = [("MAE_pitch", "pitch (Hz)"), ("MAE_energy", "energy"), ("MAE_duration_ms", "duration (ms)")]
    names = [r["system"] for r in rows]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(7.0, 2.6))
        for ax, (key, label) in zip(axes, metrics):
            vals = [np.nan if r.get(key) is None else r[key] for r in rows]
            ax.bar(range(len(names)), vals, color=SYSTEM_COLORS[: len(names)] or None)
            ax.set_xticks(range(len(names)))
            ax.set_xticklabels(names, rotation=20)
            ax.set_title(f"MAE {label}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_loss(path, epoch_loss):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(np.arange(1, len(epoch_loss) + 1), epoch_loss, color="k")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("training loss")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
