"""Matplotlib figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .image_io import boundary_mask  # noqa: E402


def _save(fig, path):
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)


def _show_image(ax, values):
    values = np.clip(values, 0.0, 1.0)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    ax.imshow(values, cmap="gray" if values.ndim == 2 else None, vmin=0, vmax=1,
              interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])


def _contour(ax, labels, color):
    edge = np.ma.masked_where(~boundary_mask(labels), np.ones(labels.shape))
    ax.imshow(edge, cmap=matplotlib.colors.ListedColormap([color]), interpolation="nearest")


def plot_energy_curve(reports, area, path, title=None):
    """Normalized energy E/|Omega| against iteration number."""
    k = [r.k for r in reports]
    e = np.array([r.energy.total for r in reports]) / area
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.plot(k, e, "o-", ms=3, lw=1.2)
    ax.set_xlabel("iteration k")
    ax.set_ylabel(r"$E^{\delta t} / |\Omega|$")
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(alpha=0.3)
    _save(fig, path)


def plot_segmentation(values, initial, final, path, title=None):
    """Given image, initial contour and final contour side by side."""
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.6))
    for ax, labels, name in zip(axes, (None, initial, final),
                                ("given image", "initial contour", "final contour")):
        _show_image(ax, values)
        if labels is not None:
            _contour(ax, labels, "red")
        ax.set_title(name, fontsize=10)
    if title:
        fig.suptitle(title, fontsize=10)
    _save(fig, path)


def plot_sweep(rows, energy_curves, area, path):
    """Energy curves for each sweep point plus final perimeter versus lambda."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(10, 3.6))
    for row, curve in zip(rows, energy_curves):
        ax0.plot(np.arange(len(curve)), np.asarray(curve) / area, lw=1.2,
                 label=f"λ={row['lambda']:g}, δt={row['dt']:g}")
    ax0.set_xlabel("iteration k")
    ax0.set_ylabel(r"$E^{\delta t} / |\Omega|$")
    ax0.legend(fontsize=8)
    ax0.grid(alpha=0.3)
    lam = [r["lambda"] for r in rows]
    per = [r["perimeter"] for r in rows]
    ax1.plot(lam, per, "s-")
    ax1.set_xlabel("λ")
    ax1.set_ylabel("final perimeter estimate")
    ax1.grid(alpha=0.3)
    _save(fig, path)


def plot_bench(sizes, per_iter_ms, path):
    """Per-iteration time against pixel count on log axes with an N log N guide."""
    n = np.asarray(sizes, dtype=float) ** 2
    t = np.asarray(per_iter_ms, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(n, t, "o-", label="measured")
    ref = n * np.log(n)
    ax.loglog(n, ref * t[0] / ref[0], "--", color="gray", label="N log N")
    ax.set_xlabel("pixels N")
    ax.set_ylabel("ms / iteration")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3, which="both")
    _save(fig, path)
