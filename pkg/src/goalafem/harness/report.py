"""Figures from the CSV output of runs and sweeps.  Needs the ``plot`` extra (matplotlib)."""

from __future__ import annotations

import csv
import os

import numpy as np

from ..errors import ConfigurationError

__all__ = ["load_history", "load_ncum", "plot_history", "plot_ncum", "render"]

_LABELS = {
    "eta_u": r"$\eta_u$",
    "eta_z": r"$\eta_z$",
    "product": r"$\eta_u\eta_z$",
    "goal_err": r"$|g(u)-g(U_\ell)|$",
}


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:
        raise ConfigurationError("plots need matplotlib: pip install 'artifact[plot]'") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def load_history(path):
    """Columns of a ``history.csv`` as a dict of arrays (``chosen`` stays text)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ConfigurationError(f"{path} has no levels")
    out = {}
    for key in rows[0]:
        vals = [r[key] for r in rows]
        out[key] = np.array(vals) if key == "chosen" else np.array(vals, dtype=float)
    return out


def load_ncum(path):
    """Rows of an ``ncum.csv`` as ``{strategy: (theta, ncum, reached)}`` arrays."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for s in dict.fromkeys(r["strategy"] for r in rows):
        sel = [r for r in rows if r["strategy"] == s]
        out[s] = (np.array([float(r["theta"]) for r in sel]),
                  np.array([int(r["ncum"]) for r in sel]),
                  np.array([r["reached"] == "1" for r in sel]))
    return out


def _reference_line(ax, N, q, rate, label):
    # anchored at the last point so the slope is comparable by eye
    ax.loglog(N, q[-1] * (N / N[-1]) ** rate, "k--", lw=0.8, label=label)


def plot_history(hist, title=None, rates=(-1.5, -3.0)):
    """Estimators, their product and the goal error against ``N`` on log-log axes."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    N = hist["N"]
    for key, style in (("eta_u", "o-"), ("eta_z", "s-"), ("product", "^-"), ("goal_err", "x-")):
        q = hist[key]
        ok = np.isfinite(q) & (q > 0)
        if ok.any():
            ax.loglog(N[ok], q[ok], style, ms=3, lw=1, label=_LABELS[key])
    for rate in rates:
        q = hist["product"] if rate < -2 else hist["eta_u"]
        _reference_line(ax, N, q, rate, rf"$\mathcal{{O}}(N^{{{rate:g}}})$")
    ax.set_xlabel(r"number of elements $N$")
    ax.set_ylabel("error resp. estimators")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    return fig


def plot_ncum(ncum, title=None):
    """``N_cum`` against θ, one line per strategy; open markers flag unreached tolerances."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 3.6))
    for s, (theta, n, reached) in ncum.items():
        line, = ax.semilogy(theta, n, "-", lw=1, label=s)
        ax.semilogy(theta[reached], n[reached], "o", ms=4, color=line.get_color())
        ax.semilogy(theta[~reached], n[~reached], "o", ms=4, mfc="none", color=line.get_color())
    ax.set_xlabel(r"parameter $\theta$")
    ax.set_ylabel(r"$N_{\rm cum}$")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False, fontsize=7)
    fig.tight_layout()
    return fig


def render(directory, fmt="png"):
    """Write figures for every ``history.csv`` and ``ncum.csv`` below ``directory``.

    Returns the list of files written.
    """
    plt = _pyplot()
    written = []
    for root, _, files in sorted(os.walk(directory)):
        name = os.path.relpath(root, directory)
        title = None if name == "." else name
        if "history.csv" in files:
            fig = plot_history(load_history(os.path.join(root, "history.csv")), title)
            written.append(os.path.join(root, f"convergence.{fmt}"))
            fig.savefig(written[-1], dpi=150)
            plt.close(fig)
        if "ncum.csv" in files:
            fig = plot_ncum(load_ncum(os.path.join(root, "ncum.csv")), title)
            written.append(os.path.join(root, f"ncum.{fmt}"))
            fig.savefig(written[-1], dpi=150)
            plt.close(fig)
    if not written:
        raise ConfigurationError(f"no history.csv or ncum.csv below {directory}")
    return written
