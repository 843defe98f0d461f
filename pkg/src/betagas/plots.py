"""SVG figures for reports (matplotlib, Agg backend, reproducible output)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so identical data give identical files
matplotlib.rcParams["svg.hashsalt"] = "betagas"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def density_overlay(path, curves: dict, title: str = ""):
    """Overlay densities given as ``{label: GridMeasure}``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, mu in curves.items():
        ax.plot(mu.midpoints, mu.density, label=label, lw=1.2)
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def spacing_histograms(path, hists: dict, poisson: bool = True, title: str = ""):
    """Step plots of ``{label: SpacingHistogram}`` with the exponential law for reference."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, h in hists.items():
        ax.stairs(h.density, h.edges, label=label)
    if poisson:
        s = np.linspace(0, 4, 200)
        ax.plot(s, np.exp(-s), "k:", lw=1, label="exp(-s)")
    ax.set_xlabel("unfolded gap")
    ax.set_ylabel("density")
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def trend(path, Ns, values, errors=None, ylabel: str = "", title: str = ""):
    """Estimate against ``N`` with optional error bars."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(Ns, values, yerr=errors, marker="o", capsize=3)
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    _save(fig, path)
