"""Figures written next to the text reports: learning curves, attention steps, error histograms."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_training_curves(history: Sequence[dict], path) -> Path:
    """Validation CER/WER per epoch, learning rate on a log-scale twin axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        epochs = [h["epoch"] for h in history]
        ax.plot(epochs, [h["val_cer"] for h in history], label="val CER (%)")
        ax.plot(epochs, [h["val_wer"] for h in history], label="val WER (%)")
        ax.set_xlabel("epoch")
        ax.set_ylabel("error rate (%)")
        lr_ax = ax.twinx()
        lr_ax.step(epochs, [h["lr"] for h in history], where="post", color="0.5", lw=0.8, ls="--")
        lr_ax.set_yscale("log")
        lr_ax.set_ylabel("learning rate")
        ax.legend(loc="upper right")
        return _save(fig, path)


def plot_attention_steps(image: np.ndarray, heats: Sequence[np.ndarray], symbols: Sequence[str], path) -> Path:
    """One panel per emitted symbol: the input in grey with that step's attention in red."""
    n = max(len(heats), 1)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(n, 1, figsize=(4.0, 0.9 * n + 0.3), squeeze=False)
        for ax, heat, sym in zip(axes[:, 0], heats, symbols):
            ax.imshow(image, cmap="gray", vmin=0, vmax=255)
            overlay = np.zeros(heat.shape + (4,))
            overlay[..., 0] = 1.0
            overlay[..., 3] = heat / max(float(heat.max()), 1.0) * 0.7
            ax.imshow(overlay)
            ax.set_title(repr(sym), loc="left", pad=2)
            ax.set_axis_off()
        if not heats:
            axes[0, 0].imshow(image, cmap="gray", vmin=0, vmax=255)
            axes[0, 0].set_title("(no symbols emitted)", loc="left")
            axes[0, 0].set_axis_off()
        return _save(fig, path)


def plot_error_histogram(ned_char: Sequence[float], ned_word: Sequence[float], path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 2.8))
        top = max([100.0, *ned_char, *ned_word])
        bins = np.linspace(0, top, 21)
        ax.hist([ned_char, ned_word], bins=bins, label=["char NED", "word NED"])
        ax.set_xlabel("normalized edit distance (%)")
        ax.set_ylabel("samples")
        ax.legend()
        return _save(fig, path)
