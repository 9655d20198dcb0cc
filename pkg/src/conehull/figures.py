"""Figure rendering for CLI reports.

Every task drops a PNG next to its CSV/JSON output.  Rendering is
deterministic: the Agg backend, fixed figure geometry, and stripped
metadata keep repeated runs byte-identical.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return str(path)


def pattern_figure(points, radius, path, members_of=None, title="pattern truncation"):
    """Scatter of a two-dimensional pattern inside its truncation ball."""
    pts = np.asarray(points)
    fig, ax = plt.subplots(figsize=(5.4, 5.4))
    if members_of is not None:
        bg = np.asarray(members_of)
        if len(bg):
            ax.plot(bg[:, 0], bg[:, 1], ".", color="0.82", ms=3, zorder=1)
    if len(pts):
        ax.plot(pts[:, 0], pts[:, 1], "o", color="#1f5fa6", ms=4, zorder=2)
    circle = plt.Circle((0, 0), radius, fill=False, color="0.4", lw=0.8, ls="--")
    ax.add_patch(circle)
    ax.plot([0], [0], "x", color="#b03020", ms=8, zorder=3)
    ax.set_aspect("equal")
    lim = radius * 1.08
    ax.set_xlim(-lim, lim)
    ax.set_ylim(-lim, lim)
    ax.set_xlabel("n1")
    ax.set_ylabel("n2")
    ax.set_title(title)
    return _finish(fig, path)


def count_figure(rows, path):
    """Relative count error against the transverse radius, log-log."""
    t = np.array([r.t for r in rows])
    err = np.array([max(abs(r.relative_error), 1e-16) for r in rows])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(t, err, "o-", color="#1f5fa6")
    ax.set_xlabel("transverse radius t")
    ax.set_ylabel("relative count error")
    ax.set_title("slab point count vs volume prediction")
    ax.grid(True, which="both", alpha=0.3)
    return _finish(fig, path)


def trace_figure(t_values, values, reference, path):
    """Estimator trace against t with the measure-side value as a line."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(t_values, values, "o-", color="#1f5fa6", label="core estimator")
    ax.axhline(reference, color="#b03020", lw=1.2, ls="--", label="measure side")
    ax.set_xlabel("transverse radius t")
    ax.set_ylabel("trace value")
    ax.set_title("trace per unit hypersurface: two routes")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)


def pairing_figure(labels, values, reference, path, title="index pairing"):
    """Bar chart of pairing values against an integer reference."""
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    xs = np.arange(len(labels))
    ax.bar(xs, values, width=0.55, color="#1f5fa6")
    if reference is not None:
        ax.axhline(reference, color="#b03020", lw=1.2, ls="--", label="oracle")
        ax.legend()
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.set_ylabel("pairing value")
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    return _finish(fig, path)


def duality_figure(ladder, bulk_value, path):
    """Edge pairing ladder with the bulk value as the target line."""
    t = [row["t"] for row in ladder]
    vals = [row["value"] for row in ladder]
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.plot(t, vals, "o-", color="#1f5fa6", label="edge pairing")
    ax.axhline(bulk_value, color="#b03020", lw=1.2, ls="--", label="bulk pairing")
    ax.set_xlabel("core transverse radius t")
    ax.set_ylabel("pairing value")
    ax.set_title("bulk-edge duality")
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _finish(fig, path)
