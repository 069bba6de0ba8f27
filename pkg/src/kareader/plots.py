"""Figures written next to the tab-separated reports.

Uses the object-oriented matplotlib API on an Agg canvas, so nothing here
touches pyplot state or needs a display.
"""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

PALETTE = ["#1b6ca8", "#d1495b", "#edae49", "#66a182", "#6b6b6b"]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "axes.linewidth": 0.6,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.prop_cycle": matplotlib.cycler(color=PALETTE),
    "xtick.direction": "out",
    "ytick.direction": "out",
    "xtick.major.size": 3,
    "ytick.major.size": 3,
    "legend.frameon": False,
    "legend.fontsize": 8,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


@contextmanager
def style():
    with matplotlib.rc_context(STYLE):
        yield


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    # no timestamp metadata, so identical data gives identical files
    fig.savefig(path, metadata={"Software": None})
    return path


def learning_curves(series: Mapping[str, tuple[Sequence[int], Sequence[float]]], path,
                    title: str = "") -> Path:
    """One panel per metric; ``series`` maps a label to (epochs, values)."""
    with style():
        fig = Figure(figsize=(3.4 * max(len(series), 1), 2.6))
        axes = fig.subplots(1, max(len(series), 1), squeeze=False)[0]
        for ax, (label, (xs, ys)) in zip(axes, series.items()):
            ax.plot(list(xs), list(ys), marker="o", markersize=2.5)
            ax.set_xlabel("epoch")
            ax.set_ylabel(label)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def eval_histograms(records: Sequence[dict], path) -> Path:
    """Distribution of per-question F1 and of the top-ranked score."""
    f1 = [r["f1"] for r in records]
    top = [r["top5"][0][1] for r in records if r["top5"]]
    with style():
        fig = Figure(figsize=(6.8, 2.6))
        ax1, ax2 = fig.subplots(1, 2)
        ax1.hist(f1, bins=10, range=(0, 1), color=PALETTE[0])
        ax1.set_xlabel("per-question F1")
        ax1.set_ylabel("questions")
        ax2.hist(top, bins=20, range=(0, 1), color=PALETTE[1])
        ax2.set_xlabel("top-1 score")
        return _save(fig, path)


def ablation_bars(rows: Sequence[dict], path, metrics: Sequence[str] = ("hit@1", "f1")) -> Path:
    """Grouped bars, one group per model variant."""
    with style():
        fig = Figure(figsize=(1.1 * max(len(rows), 1) + 1.5, 2.8))
        ax = fig.subplots()
        width = 0.8 / len(metrics)
        for k, m in enumerate(metrics):
            xs = [i + (k - (len(metrics) - 1) / 2) * width for i in range(len(rows))]
            ax.bar(xs, [r[m] for r in rows], width, label=m)
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels([r["variant"] for r in rows], rotation=20, ha="right")
        ax.set_ylim(0, 1)
        ax.set_ylabel("dev score")
        ax.legend()
        return _save(fig, path)
