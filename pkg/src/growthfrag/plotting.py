"""Deterministic SVG renders of phase planes and time series."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "svg.hashsalt": "growthfrag",
    "svg.fonttype": "none",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def phase_plane(path, curves, xlabel, ylabel, title="", points=()):
    """Plot ``curves`` = [(label, x, y), ...] and mark ``points`` = [(label, x, y), ...]."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        for label, x, y in curves:
            ax.plot(x, y, lw=1.0, label=label)
        for label, x, y in points:
            ax.plot([x], [y], "k*", ms=8, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        return _save(fig, path)


def time_series(path, t, series, xlabel="t", title=""):
    """One panel with every ``series`` = [(label, values), ...] against ``t``."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        for label, values in series:
            ax.plot(t, values, lw=1.0, label=label)
        ax.set_xlabel(xlabel)
        if title:
            ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        return _save(fig, path)
