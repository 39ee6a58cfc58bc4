"""Static Schmidt-net scatter plots and AIC bar charts written as SVG."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .sphere import schmidt_project  # noqa: E402

# fixed so repeated runs write byte-identical files
_SVG_RC = {"svg.hashsalt": "kentmix", "svg.fonttype": "none"}
_METADATA = {"Date": None, "Creator": None}


def _save(fig, path):
    with matplotlib.rc_context(_SVG_RC):
        fig.savefig(path, format="svg", metadata=_METADATA)
    plt.close(fig)


def schmidt_scatter(path, x, labels=None, names=None, title=None):
    """Scatter of the equal-area coordinates of `x`, coloured by `labels`.

    Label 0 in `names` order is drawn in black when it is named ``uniform``.
    Returns the ``(n, 2)`` projected coordinates.
    """
    y = schmidt_project(np.asarray(x, dtype=float)).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.add_patch(plt.Circle((0, 0), 2.0, fill=False, lw=0.8, color="0.5"))
    if labels is None:
        ax.scatter(y[:, 0], y[:, 1], s=4, color="C0")
    else:
        labels = np.asarray(labels)
        for k, lab in enumerate(np.unique(labels)):
            sel = labels == lab
            name = names[int(lab)] if names is not None and int(lab) < len(names) else str(lab)
            color = "black" if name == "uniform" else f"C{k % 10}"
            ax.scatter(y[sel, 0], y[sel, 1], s=4, color=color, label=name)
        ax.legend(loc="upper right", fontsize=7, markerscale=2)
    ax.set_xlim(-2.1, 2.1)
    ax.set_ylim(-2.1, 2.1)
    ax.set_aspect("equal")
    ax.set_xlabel("y1")
    ax.set_ylabel("y2")
    if title:
        ax.set_title(title)
    _save(fig, path)
    return y


def aic_bars(path, g_values, aic_values):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar([str(g) for g in g_values], aic_values, color="C0")
    best = int(np.argmin(aic_values))
    ax.patches[best].set_color("C3")
    ax.set_xlabel("Kent components")
    ax.set_ylabel("AIC")
    lo, hi = min(aic_values), max(aic_values)
    pad = 0.05 * (hi - lo if hi > lo else abs(hi) + 1.0)
    ax.set_ylim(lo - pad, hi + pad)
    _save(fig, path)
