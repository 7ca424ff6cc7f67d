"""Figures for the report subcommand, rendered off-screen to files."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .outcome import RESIDUAL_THRESHOLD  # noqa: E402


def plot_channel_rates(rows: Sequence[Mapping], path) -> Path:
    """Bar chart of HFO rate per channel, one panel per recording phase.

    ``rows`` are rate-report records with keys ``patient``, ``phase``,
    ``channel`` and ``rate_per_min``.
    """
    phases = sorted({r["phase"] for r in rows}) or ["pre"]
    fig, axes = plt.subplots(len(phases), 1, figsize=(max(6, 0.25 * len(rows) + 2), 3 * len(phases)),
                             squeeze=False)
    for ax, phase in zip(axes[:, 0], phases):
        sel = [r for r in rows if r["phase"] == phase]
        labels = [f'{r["patient"]}:{r["channel"]}' for r in sel]
        rates = [float(r["rate_per_min"]) for r in sel]
        colors = ["tab:red" if v >= RESIDUAL_THRESHOLD else "tab:gray" for v in rates]
        ax.bar(range(len(sel)), rates, color=colors)
        ax.axhline(RESIDUAL_THRESHOLD, color="k", lw=0.8, ls="--")
        ax.set_xticks(range(len(sel)))
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
        ax.set_ylabel("HFO / min")
        ax.set_title(f"{phase}-resection")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_cohort(max_rates: Sequence[Mapping], path) -> Path:
    """Pre and post maximum channel rate per patient on a log scale."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    names = [r["patient"] for r in max_rates]
    x = range(len(names))
    floor = 0.05  # keeps zero rates visible on the log axis
    ax.plot(x, [max(floor, r["pre"]) for r in max_rates], "o", label="pre")
    ax.plot(x, [max(floor, r["post"]) for r in max_rates], "s", label="post")
    ax.axhline(RESIDUAL_THRESHOLD, color="k", lw=0.8, ls="--")
    ax.set_yscale("log")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names)
    ax.set_ylabel("max HFO / min")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
