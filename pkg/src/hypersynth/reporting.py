"""Report rendering: delimited metric tables and matplotlib figures written
alongside the JSON reports in a run's reports/ directory."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def write_csv(path: str | Path, rows: list[dict]) -> Path:
    """One row per dict; the header is the union of keys in first-seen order."""
    path = Path(path)
    fields: list[str] = []
    for row in rows:
        for key in row:
            if key not in fields:
                fields.append(key)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    return path


def mel_png_bytes(grid: np.ndarray) -> bytes:
    """Standalone PNG of one mel grid (low frequencies at the bottom)."""
    buf = io.BytesIO()
    plt.imsave(buf, np.asarray(grid), origin="lower", cmap="magma",
               vmin=-1.0, vmax=1.0, format="png")
    return buf.getvalue()


def mel_comparison_figure(path: str | Path, panels: dict[str, np.ndarray],
                          suptitle: str = "") -> Path:
    """Side-by-side mel panels (e.g. real / initial / refined)."""
    path = Path(path)
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.2))
    if n == 1:
        axes = [axes]
    for ax, (name, grid) in zip(axes, panels.items()):
        ax.imshow(np.asarray(grid), origin="lower", cmap="magma", vmin=-1.0, vmax=1.0, aspect="auto")
        ax.set_title(name, fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    if suptitle:
        fig.suptitle(suptitle, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def mel_grid_figure(path: str | Path, rows: list[dict[str, np.ndarray]],
                    suptitle: str = "") -> Path:
    """Several comparison rows in one figure (one clip per row)."""
    path = Path(path)
    n_rows = len(rows)
    n_cols = max(len(r) for r in rows)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(2.6 * n_cols, 2.6 * n_rows), squeeze=False)
    for i, row in enumerate(rows):
        for j, (name, grid) in enumerate(row.items()):
            ax = axes[i][j]
            ax.imshow(np.asarray(grid), origin="lower", cmap="magma", vmin=-1.0, vmax=1.0, aspect="auto")
            if i == 0:
                ax.set_title(name, fontsize=9)
            ax.set_xticks([])
            ax.set_yticks([])
        for j in range(len(row), n_cols):
            axes[i][j].axis("off")
    if suptitle:
        fig.suptitle(suptitle, fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def training_curve_figure(path: str | Path, records: list[dict], stage: str) -> Path:
    """Loss curves for one stage pulled from metrics.jsonl records."""
    path = Path(path)
    rows = [r for r in records if r.get("stage") == stage and "step" in r and r.get("loss") is not None]
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    if rows:
        steps = [r["step"] for r in rows]
        ax.plot(steps, [r["loss"] for r in rows], label="total", lw=0.9)
        for key in ("timbre", "recon", "adv_g", "adv_d"):
            series = [(r["step"], r[key]) for r in rows if r.get(key) is not None]
            if series:
                ax.plot([s for s, _ in series], [v for _, v in series], label=key, lw=0.7, alpha=0.8)
        ax.set_yscale("log")
        ax.legend(fontsize=8)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(f"{stage} stage", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
