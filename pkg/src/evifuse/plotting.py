"""PNG figures for experiment reports.

Figures are drawn on the Agg canvas directly (no pyplot state) and saved
without the software/date metadata, so re-running a report reproduces
the files byte for byte.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .metrics import BUCKET_NAMES, ConflictReport

__all__ = ["plot_loss_trace", "plot_uncertainty_density", "plot_conflict_buckets"]


def _new_figure(width=5.0, height=3.4) -> Figure:
    fig = Figure(figsize=(width, height), dpi=100, layout="constrained")
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> None:
    fig.savefig(path, format="png", metadata={"Software": None})


def plot_loss_trace(epochs: Sequence[int], totals: np.ndarray, head_names: Sequence[str], path) -> None:
    """One line per head: ``L_acc + lambda_t * L_KL`` against epoch."""
    fig = _new_figure()
    ax = fig.add_subplot()
    totals = np.asarray(totals)
    for j, name in enumerate(head_names):
        ax.plot(epochs, totals[:, j], label=name, lw=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)


def plot_uncertainty_density(densities: Mapping[str, tuple[np.ndarray, np.ndarray]], path) -> None:
    fig = _new_figure()
    ax = fig.add_subplot()
    for name, (centers, density) in densities.items():
        ax.step(centers, density, where="mid", label=name, lw=1.2)
        ax.fill_between(centers, density, step="mid", alpha=0.15)
    ax.set_xlim(0, 1)
    ax.set_xlabel("joint uncertainty u")
    ax.set_ylabel("density")
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)


def plot_conflict_buckets(report: ConflictReport, path) -> None:
    """Stacked bars of clean vs injected samples per conflict bucket."""
    fig = _new_figure(4.2, 3.2)
    ax = fig.add_subplot()
    x = np.arange(len(BUCKET_NAMES))
    clean, injected = report.crosstab[:, 0], report.crosstab[:, 1]
    ax.bar(x, clean, color="0.6", label="clean")
    ax.bar(x, injected, bottom=clean, color="C3", label="injected")
    ax.set_xticks(x, [f"{n}\n{rng}" for n, rng in zip(BUCKET_NAMES, ("[0, 0.3)", "[0.3, 0.6)", "[0.6, 1]"))])
    ax.set_ylabel("samples")
    ax.legend(frameon=False, fontsize=8)
    ax.spines[["top", "right"]].set_visible(False)
    _save(fig, path)
