from __future__ import division, print_function
import os
import numpy as np

import vemd.colors as colors
import vemd.settings as settings

__doc__ = """
Utilities to plot in 2D: training loss curves and confusion matrices, saved as image files.
"""

__all__ = ["plotLossCurves", "plotConfusionMatrix"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, filename):
    plt = _pyplot()
    d = os.path.dirname(os.path.abspath(filename))
    os.makedirs(d, exist_ok=True)
    fig.savefig(filename, dpi=100, bbox_inches="tight")
    plt.close(fig)
    if settings.verbose:
        colors.printc("~save Saved plot: " + filename, c="g")
    return filename


def plotLossCurves(rows, filename, keys=("L_cls", "L_p1", "L_p2", "L_mmd", "total"),
                   title="training losses", logscale=False):
    """
    Plot the loss components of a training trace against the step.

    :param list rows: trace rows, dicts with a ``step`` field
    :param keys: columns to draw, missing ones are skipped
    """
    plt = _pyplot()
    fig = plt.figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    if rows:
        steps = np.array([r["step"] for r in rows], dtype=float)
        for i, k in enumerate(keys):
            if k not in rows[0]:
                continue
            y = np.array([r[k] for r in rows], dtype=float)
            ax.plot(steps, y, label=k, color=colors.classColor(i), lw=1.5)
        ax.legend(loc="upper right", fontsize=8)
    if logscale:
        ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(alpha=0.3)
    return _save(fig, filename)


def plotConfusionMatrix(M, filename, class_names=None, title="confusion", cmap="Greys"):
    """Plot a confusion matrix (rows = true class) with its counts written in each cell."""
    plt = _pyplot()
    from mpl_toolkits.axes_grid1 import make_axes_locatable

    M = np.asarray(M)
    m, n = M.shape
    fig = plt.figure(figsize=(4, 4))
    ax = fig.add_subplot(111)
    im = ax.imshow(M, cmap=cmap, interpolation="none")
    divider = make_axes_locatable(ax)
    cax = divider.append_axes("right", size="5%", pad=0.05)
    fig.colorbar(im, cax=cax)
    vmax = M.max() if M.size else 0
    for i in range(m):
        for j in range(n):
            ax.text(j, i, str(M[i, j]), ha="center", va="center",
                    color="white" if M[i, j] > vmax / 2 else "black", fontsize=8)
    if class_names is not None:
        ax.set_xticks(range(n))
        ax.set_yticks(range(m))
        ax.set_xticklabels(class_names, rotation=45)
        ax.set_yticklabels(class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(r"$%i \times %i$ " % (m, n) + title)
    return _save(fig, filename)
