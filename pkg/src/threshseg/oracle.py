"""Brute-force references and synthetic phantoms with ground truth.

Nothing here shares code paths with the FFT solver beyond the data model:
energies are evaluated pair by pair through :func:`convolve_direct`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .field import Grid, ImageField
from .spectral import DIRECT_MAX_PIXELS, convolve_direct

PHANTOM_KINDS = ("two-level", "four-quadrant", "disks")

# Quadrant colours: pairwise distances >= 1 in RGB
QUADRANT_COLORS = np.array([
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 1.0, 0.0],
])
DISK_LEVELS = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])


@dataclass
class Phantom:
    image: ImageField
    truth: np.ndarray  # integer labels, (ny, nx)
    noise_sigma: float
    description: str

    @property
    def n(self) -> int:
        return int(self.truth.max()) + 1


def brute_energy(f: ImageField, labels, n: int, dt: float, lam: float,
                 grid: Grid | None = None) -> float:
    """Literal double-sum evaluation of the approximate energy."""
    grid = grid or f.grid
    if grid.size > DIRECT_MAX_PIXELS:
        raise ValueError(f"brute energy limited to {DIRECT_MAX_PIXELS} pixels")
    labels = np.asarray(labels)
    vals = f.values
    cell = grid.hx * grid.hy
    u = [(labels == i).astype(float) for i in range(n)]
    total = 0.0
    for i in range(n):
        area = u[i].sum()
        if area == 0:
            continue
        mean = [(u[i] * vals[:, :, c]).sum() / area for c in range(f.d)]
        g = sum((mean[c] - vals[:, :, c]) ** 2 for c in range(f.d))
        total += cell * (u[i] * g).sum()
    if lam:
        factor = lam * math.sqrt(math.pi) / math.sqrt(dt)
        for i in range(n):
            for j in range(n):
                if i != j:
                    total += factor * cell * (u[i] * convolve_direct(grid, dt, u[j])).sum()
    return float(total)


def lloyd_assign(f: ImageField, means) -> np.ndarray:
    """Nearest-mean labels by an explicit per-phase loop; ties to the lower index."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    best = np.full(f.grid.shape, np.inf)
    labels = np.zeros(f.grid.shape, dtype=np.intp)
    for i, m in enumerate(means):
        dist = np.zeros(f.grid.shape)
        for c in range(f.d):
            dist += (m[c] - f.values[:, :, c]) ** 2
        better = dist < best
        labels[better] = i
        best[better] = dist[better]
    return labels


def _two_level_truth(size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] + 0.5
    s = float(size)
    truth = np.zeros((size, size), dtype=np.intp)
    truth[(x - 0.35 * s) ** 2 + (y - 0.4 * s) ** 2 < (0.2 * s) ** 2] = 1
    truth[(x > 0.6 * s) & (x < 0.85 * s) & (y > 0.55 * s) & (y < 0.85 * s)] = 1
    return truth


def _four_quadrant_truth(size: int) -> np.ndarray:
    half = size // 2
    truth = np.zeros((size, size), dtype=np.intp)
    truth[:half, half:] = 1
    truth[half:, :half] = 2
    truth[half:, half:] = 3
    return truth


def _disks_truth(size: int) -> np.ndarray:
    y, x = np.mgrid[0:size, 0:size] + 0.5
    s = float(size)
    truth = np.zeros((size, size), dtype=np.intp)
    for label, (cy, cx, r) in enumerate([(0.3, 0.3, 0.18), (0.3, 0.72, 0.15), (0.7, 0.5, 0.2)], 1):
        truth[(x - cx * s) ** 2 + (y - cy * s) ** 2 < (r * s) ** 2] = label
    return truth


def make_phantom(kind: str, size: int, noise_sigma: float = 0.0, seed: int = 0,
                 speckle: float = 0.0) -> Phantom:
    """Synthetic piecewise-constant image with known labels.

    ``two-level`` and ``disks`` are gray, ``four-quadrant`` is RGB. Gaussian
    noise of standard deviation ``noise_sigma`` is added to every channel;
    ``speckle`` replaces that fraction of pixels by uniform random values.
    """
    if size < 16:
        raise ValueError(f"phantom size must be at least 16, got {size}")
    if noise_sigma < 0 or not 0 <= speckle <= 1:
        raise ValueError("noise parameters out of range")
    if kind == "two-level":
        truth = _two_level_truth(size)
        clean = truth[:, :, None].astype(float)
    elif kind == "four-quadrant":
        truth = _four_quadrant_truth(size)
        clean = QUADRANT_COLORS[truth]
    elif kind == "disks":
        truth = _disks_truth(size)
        clean = DISK_LEVELS[truth][:, :, None]
    else:
        raise ValueError(f"unknown phantom kind {kind!r}; choose from {', '.join(PHANTOM_KINDS)}")
    rng = np.random.default_rng(seed)
    image = clean + noise_sigma * rng.standard_normal(clean.shape) if noise_sigma else clean.copy()
    desc = f"{kind} {size}x{size} sigma={noise_sigma:g} seed={seed}"
    if speckle:
        hit = rng.random((size, size)) < speckle
        image[hit] = rng.random((int(hit.sum()), clean.shape[2]))
        desc += f" speckle={speckle:g}"
    return Phantom(ImageField.from_array(image), truth, float(noise_sigma), desc)


def misclassification_rate(result, truth) -> float:
    """Smallest mismatch fraction over all relabelings of ``result``."""
    result = np.asarray(result)
    truth = np.asarray(truth)
    if result.shape != truth.shape:
        raise ValueError(f"label maps differ in shape: {result.shape} vs {truth.shape}")
    n = int(max(result.max(), truth.max())) + 1
    if n > 8:
        raise ValueError(f"permutation search limited to 8 phases, got {n}")
    # confusion[a, b] = pixels with result a and truth b
    confusion = np.bincount(result.ravel() * n + truth.ravel(), minlength=n * n).reshape(n, n)
    best = max(sum(confusion[a, perm[a]] for a in range(n))
               for perm in itertools.permutations(range(n)))
    return 1.0 - best / result.size
