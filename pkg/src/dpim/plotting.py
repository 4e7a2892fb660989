"""Figure output for frequency responses, whiskers and residual scaling.

Figures are written to files only (Agg backend).
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
fig_size = [fig_width, fig_width * golden_mean]

params = {
    "axes.labelsize": 10,
    "font.size": 9,
    "font.family": "serif",
    "mathtext.fontset": "stix",
    "legend.fontsize": 8,
    "xtick.labelsize": 9,
    "ytick.labelsize": 9,
    "figure.figsize": fig_size,
    "figure.dpi": 150,
    "lines.linewidth": 1.2,
    "lines.markersize": 4,
    "figure.subplot.left": 0.14,
    "figure.subplot.bottom": 0.16,
    "figure.subplot.right": 0.96,
    "figure.subplot.top": 0.94,
}

colors = ["#08589e", "#d95f02", "#1b9e77", "#7570b3", "#e7298a", "#66a61e"]


def _split_runs(mask):
    """Index ranges over which ``mask`` is constant."""
    edges = np.flatnonzero(np.diff(mask.astype(int))) + 1
    bounds = np.concatenate([[0], edges, [len(mask)]])
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)]


def plot_frc(branches: Sequence, labels: Sequence[str], path: Union[str, Path],
             xlabel: str = r"$\Omega$ [rad/time]", ylabel: str = r"amplitude $u/(\phi_{max} L)$") -> Path:
    """Frequency-response curves; unstable stretches dashed, folds starred."""
    path = Path(path)
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for k, (br, lab) in enumerate(zip(branches, labels)):
            c = colors[k % len(colors)]
            known = np.array([s is not None for s in br.stable])
            if known.any():
                st = np.array([bool(s) if s is not None else True for s in br.stable])
                first = True
                for a, b in _split_runs(st):
                    sl = slice(a, min(b + 1, len(br)))
                    ax.plot(br.omega[sl], br.amplitude[sl], color=c, ls="-" if st[a] else "--",
                            label=lab if first else None)
                    first = False
            else:
                ax.plot(br.omega, br.amplitude, color=c, label=lab)
            f = np.asarray(br.fold, bool)
            if f.any():
                ax.plot(br.omega[f], br.amplitude[f], "*", color=c, ms=8)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_whisker(rows: np.ndarray, path: Union[str, Path], title: str = "") -> Path:
    """Slave coordinate over the master-coordinate grid (rows ``re, im, value``)."""
    path = Path(path)
    re_v, im_v = np.unique(rows[:, 0]), np.unique(rows[:, 1])
    Z = rows[:, 2].reshape(len(re_v), len(im_v))
    with plt.rc_context(params):
        fig = plt.figure()
        ax = fig.add_subplot(projection="3d")
        R, I = np.meshgrid(re_v, im_v, indexing="ij")
        ax.plot_surface(R, I, Z, cmap="viridis", linewidth=0)
        ax.set_xlabel(r"Re $z_1$")
        ax.set_ylabel(r"Im $z_1$")
        ax.set_zlabel("slave")
        if title:
            ax.set_title(title)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_residual_scaling(rho, residuals: dict, path: Union[str, Path]) -> Path:
    """Log-log invariance residual against sample radius, one curve per order."""
    path = Path(path)
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for k, (lab, res) in enumerate(residuals.items()):
            ax.loglog(rho, res, "o-", color=colors[k % len(colors)], label=lab)
        ax.set_xlabel(r"$\rho$")
        ax.set_ylabel("invariance residual")
        ax.legend(frameon=False)
        fig.savefig(path)
        plt.close(fig)
    return path
