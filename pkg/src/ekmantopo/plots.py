"""Matplotlib figure emission for study and solver outputs.

Figures are rendered straight to SVG next to the delimited data they plot.
Byte determinism: a fixed ``svg.hashsalt`` and a cleared Date field make
repeated renders of identical inputs identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update(
    {
        "svg.hashsalt": "ekmantopo",
        "figure.figsize": (6.0, 4.2),
        "font.size": 10,
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)

_SAVE_KW = dict(format="svg", metadata={"Date": None}, bbox_inches="tight")

__all__ = ["plot_study", "plot_timeseries", "plot_compare"]


def plot_study(eps, values, slope, slope_stderr, out_path, title, caption):
    """Log-log decay plot with the fitted slope annotated."""
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    fig, ax = plt.subplots()
    ax.loglog(eps, values, "o-", color="#1f77b4", label="measured")
    if np.all(values > 0):
        anchor = values[0] * (eps / eps[0]) ** slope
        ax.loglog(eps, anchor, "--", color="#d62728",
                  label=f"fit slope {slope:.3f} ± {slope_stderr:.3f}")
    ax.set_xlabel("Rossby number eps")
    ax.set_ylabel("measured norm")
    ax.set_title(title)
    ax.legend()
    fig.text(0.01, -0.04, caption, fontsize=8, ha="left")
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def plot_timeseries(t, series, out_path, title, caption, logy=True):
    """Linear-log time series plot (one curve per labeled series)."""
    fig, ax = plt.subplots()
    for label, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        if logy:
            ax.semilogy(t, np.maximum(np.abs(vals), 1e-300), label=label)
        else:
            ax.plot(t, vals, label=label)
    ax.set_xlabel("t")
    ax.set_title(title)
    ax.legend()
    fig.text(0.01, -0.04, caption, fontsize=8, ha="left")
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)


def plot_compare(eps, errors, out_path, title, caption):
    fig, ax = plt.subplots()
    for label, vals in errors.items():
        ax.loglog(eps, vals, "o-", label=label)
    ax.set_xlabel("Rossby number eps")
    ax.set_ylabel("sup-t relative L2 error")
    ax.set_title(title)
    ax.legend()
    fig.text(0.01, -0.04, caption, fontsize=8, ha="left")
    fig.savefig(out_path, **_SAVE_KW)
    plt.close(fig)
