"""Matplotlib figures written next to the CSV reports (headless Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_training_curves(rows: list[dict], path) -> Path:
    """Loss terms per iteration on the left, validation PSNR on the right."""
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(10, 4))
    it = np.array([r["iteration"] for r in rows], dtype=float)
    for key in ("l1", "total"):
        ax_loss.plot(it, [r[key] for r in rows], label=key)
    ax_loss.set_yscale("log")
    ax_loss.set_xlabel("iteration")
    ax_loss.set_title("training loss")
    ax_loss.legend()
    val = [(r["iteration"], r["val_psnr"]) for r in rows if r.get("val_psnr") is not None]
    if val:
        vx, vy = zip(*val)
        ax_val.plot(vx, vy, marker="o")
    ax_val.set_xlabel("iteration")
    ax_val.set_ylabel("PSNR (dB)")
    ax_val.set_title("validation")
    return _finish(fig, path)


def plot_severity_summary(summary: dict[str, dict[str, float]], path) -> Path:
    """Grouped bars of input vs restored PSNR for each severity class."""
    names = list(summary)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(x - 0.2, [summary[n]["input_psnr"] for n in names], 0.4, label="input")
    ax.bar(x + 0.2, [summary[n]["psnr"] for n in names], 0.4, label="restored")
    ax.set_xticks(x, names)
    ax.set_ylabel("mean PSNR (dB)")
    ax.legend()
    return _finish(fig, path)


def plot_correlation_pair(pre: np.ndarray, post: np.ndarray, path, titles=("pre-FDM", "post-FDM")) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    for ax, mat, title in zip(axes, (pre, post), titles):
        im = ax.imshow(mat, vmin=-1, vmax=1, cmap="coolwarm")
        ax.set_title(title)
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.savefig(Path(path), dpi=100)
    plt.close(fig)
    return Path(path)


def plot_response_profiles(profiles, path) -> Path:
    """One heat map per distortion type: levels down, channels across."""
    kinds = sorted({p.distortion for p in profiles})
    fig, axes = plt.subplots(1, len(kinds), figsize=(4 * len(kinds), 4), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        rows = sorted((p for p in profiles if p.distortion == kind), key=lambda p: p.level)
        ax.imshow(np.stack([p.response for p in rows]), aspect="auto", cmap="viridis")
        ax.set_yticks(range(len(rows)), [str(p.level) for p in rows])
        ax.set_xlabel("channel")
        ax.set_ylabel("level")
        ax.set_title(kind)
    return _finish(fig, path)
