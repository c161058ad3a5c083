"""Deterministic SVG figures.

Figures are written with a fixed hash salt and no date metadata, so the
same data always produces byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .constants import CAPACITY_CEILING  # noqa: E402

_STYLE = {
    "svg.hashsalt": "sigma2lab",
    "svg.fonttype": "none",
    "figure.figsize": (7.0, 3.2),
    "font.size": 9,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    # fixed margins: constrained layout costs most of the render time
    fig.subplots_adjust(left=0.1, right=0.97, bottom=0.15, top=0.88, wspace=0.35)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_levelset(table, path: str | Path, rows=None, title: str = "") -> Path:
    """``M(t)`` and ``C(t)`` side by side; ``rows`` marks the rows used for verdicts."""
    t = table.t
    sel = np.ones(t.size, dtype=bool) if rows is None else np.asarray(rows)
    with plt.rc_context(_STYLE):
        fig, (ax_m, ax_c) = plt.subplots(1, 2)
        ax_m.plot(t, table.M, color="0.7", lw=0.8)
        ax_m.plot(t[sel], table.M[sel], color="C0", lw=1.2)
        ax_m.set_xlabel("t")
        ax_m.set_ylabel("M(t)")
        ax_c.plot(t, table.C, color="0.7", lw=0.8)
        ax_c.plot(t[sel], table.C[sel], color="C1", lw=1.2)
        ax_c.axhline(CAPACITY_CEILING, color="k", ls="--", lw=0.8, label="4/3")
        ax_c.set_xlabel("t")
        ax_c.set_ylabel("C(t)")
        ax_c.legend(loc="lower center", frameon=False)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_sequence(gaps, volumes, limit_volume: float, path: str | Path, title: str = "") -> Path:
    """Gap magnitude and volume excess along a boundary sequence."""
    gaps = np.asarray(gaps, dtype=float)
    l = np.arange(1, gaps.size + 1)
    excess = np.asarray(volumes, dtype=float) - limit_volume
    with plt.rc_context(_STYLE):
        fig, (ax_g, ax_v) = plt.subplots(1, 2)
        ax_g.loglog(l, np.abs(gaps), "o-", ms=3, color="C0")
        ax_g.set_xlabel("l")
        ax_g.set_ylabel("|gap|")
        ax_v.loglog(l, np.abs(excess), "o-", ms=3, color="C2")
        ax_v.set_xlabel("l")
        ax_v.set_ylabel("|V(D_l) - V(limit)|")
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_isoperimetry(eps, alpha, deficit, path: str | Path, title: str = "") -> Path:
    """Asymmetry and deficit against the perturbation size on log axes."""
    eps = np.asarray(eps, dtype=float)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(1, 1)
        ax.loglog(eps, alpha, "o-", ms=3, label="alpha")
        ax.loglog(eps, deficit, "s-", ms=3, label="deficit")
        ax.set_xlabel("eps")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)
