"""SVG figures for scans, multipliers, gluing curves and probes."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..functionals import ISO_CONSTANT  # noqa: E402
from ..solver import multiplier_bounds  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_scan(table, path):
    """S_K(t) against the round-sphere value S t^{2/3}."""
    t = table.column("t")
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(t, ISO_CONSTANT * np.abs(t) ** (2 / 3), "k--", lw=1, label=r"$S\,t^{2/3}$")
    ax.plot(t, table.column("S_K_value"), "o-", ms=3, label=r"$S_K(t)$")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend()
    return _save(fig, path)


def plot_normalized(table, path, k0=None):
    """The normalised column against t^{1/3}, with the window [(1 - k0/2) S, S]."""
    t = table.column("t")
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(np.cbrt(t), table.column("normalized"), "o-", ms=3, label=r"$\tilde S_K(t^{1/3})$")
    ax.axhline(ISO_CONSTANT, color="k", ls="--", lw=1, label="S")
    if k0 is not None:
        ax.axhline((1 - k0 / 2) * ISO_CONSTANT, color="grey", ls=":", lw=1, label=r"$(1-k_0/2)S$")
    ax.set_xscale("log")
    ax.set_xlabel(r"$t^{1/3}$")
    ax.legend()
    return _save(fig, path)


def plot_lambda(table, path, k0=None):
    """Multiplier column with the two-sided bound when k0 is known."""
    t = table.column("t")
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(t, table.column("lam"), "o-", ms=3, label=r"$\lambda(t)$")
    if k0 is not None and 0 <= k0 < 2:
        pos = t > 0
        lo, hi = np.array([multiplier_bounds(x, k0) for x in t[pos]]).T
        ax.fill_between(t[pos], lo, hi, color="C1", alpha=0.2, label="bounds")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend()
    return _save(fig, path)


def plot_gluing(report, path):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(report.s, report.f, "o-", ms=3)
    ax.set_xlabel("s")
    ax.set_ylabel("f(s)")
    ax.set_title(f"min concavity c = {report.c:.3g}")
    return _save(fig, path)


def plot_probe(report, path):
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.4))
    for r in report.runs:
        a1.plot(r.ratios, label=f"t = {r.t:.3g}")
        a2.plot(r.centroid)
    a1.axhline(1.0, color="k", ls="--", lw=1)
    a1.set_xlabel("iteration")
    a1.set_ylabel(r"$E / (S|t|^{2/3})$")
    a1.legend()
    a2.set_xlabel("iteration")
    a2.set_ylabel("centroid norm")
    return _save(fig, path)
