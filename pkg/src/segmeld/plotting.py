"""Figures written next to the CSV reports.

Only the Agg backend is used, and PNG metadata is stripped so reruns produce
byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.0, 2.8),
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def _save(fig, path):
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_clutter_curve(points, path, metric_label="mean F0.5"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if points:
            xs, ys = zip(*points)
            ax.plot(xs, ys, marker="o", color="C3", lw=1.5)
        ax.set_xlabel("items in scene")
        ax.set_ylabel(metric_label)
        ax.set_ylim(0.0, 1.02)
        ax.grid(alpha=0.3)
        _save(fig, path)


def plot_frequency_curve(points, path, metric_label="class F0.5"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if points:
            xs, ys = zip(*points)
            ax.scatter(xs, ys, s=14, color="C0")
        ax.set_xlabel("training appearances")
        ax.set_ylabel(metric_label)
        ax.set_ylim(0.0, 1.02)
        ax.grid(alpha=0.3)
        _save(fig, path)


def plot_loss_trace(trace, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(range(1, len(trace) + 1), trace, marker=".", color="k", lw=1)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean combined loss")
        if trace and min(trace) > 0:
            ax.set_yscale("log")
        ax.grid(alpha=0.3)
        _save(fig, path)
