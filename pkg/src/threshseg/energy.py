"""Phase means, fidelity fields and the heat-kernel approximate energy."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .field import ImageField, Partition, row_blocks
from .spectral import ConvolutionPlan

log = logging.getLogger(__name__)

# Fidelity assigned to an empty phase; far above any ||C - f||^2 on [0,1] images.
EMPTY_PHASE_FIDELITY = 1e30


@dataclass
class PhaseStats:
    means: np.ndarray  # (n, d); NaN rows for empty phases
    areas: np.ndarray  # (n,)
    empty: np.ndarray  # (n,) bool

    @property
    def n(self) -> int:
        return len(self.areas)


@dataclass
class EnergyBreakdown:
    fidelity_total: float
    perimeter_total: float
    per_phase_perimeter: np.ndarray
    lam: float
    total: float = float("nan")

    def __post_init__(self):
        expected = self.fidelity_total + self.lam * self.perimeter_total
        if math.isnan(self.total):
            self.total = expected
        elif not math.isclose(self.total, expected, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"inconsistent energy breakdown: {self.total} != {expected}")
        if self.fidelity_total < 0 or self.perimeter_total < -1e-9:
            raise ValueError("energy components must be non-negative")


def perimeter_factor(dt: float) -> float:
    return math.sqrt(math.pi / dt)


def _check_shapes(f: ImageField, u: Partition):
    if f.grid.shape != u.grid.shape:
        raise ValueError(f"image grid {f.grid.shape} and partition grid {u.grid.shape} differ")


def phase_stats(f: ImageField, u: Partition) -> PhaseStats:
    """Area-weighted phase means C_i = int u_i f / int u_i.

    Empty phases get NaN means and are flagged; :func:`fidelity` turns them
    into a sentinel so they can never be selected again.
    """
    _check_shapes(f, u)
    labels = u.labels.ravel()
    counts = np.bincount(labels, minlength=u.n).astype(np.float64)
    sums = np.stack(
        [np.bincount(labels, weights=plane.ravel(), minlength=u.n) for plane in f.planes],
        axis=1,
    )
    empty = counts == 0
    means = np.full((u.n, f.d), np.nan)
    means[~empty] = sums[~empty] / counts[~empty, None]
    return PhaseStats(means=means, areas=counts * u.grid.cell_area, empty=empty)


def fidelity(f: ImageField, stats: PhaseStats) -> np.ndarray:
    """g_i(x) = ||C_i - f(x)||^2 for every phase, shape (n, ny, nx)."""
    if stats.means.shape[1] != f.d:
        raise ValueError("phase means and image have different channel counts")
    g = np.empty((stats.n,) + f.grid.shape)
    for rows in row_blocks(f.grid.shape):
        fidelity_block(f.planes[:, rows], stats, out=g[:, rows])
    return g


def fidelity_block(planes: np.ndarray, stats: PhaseStats, out: np.ndarray) -> np.ndarray:
    tmp = np.empty(planes.shape[1:])
    for i in range(stats.n):
        if stats.empty[i]:
            out[i] = EMPTY_PHASE_FIDELITY
            continue
        out[i] = 0.0
        for c in range(planes.shape[0]):
            np.subtract(planes[c], stats.means[i, c], out=tmp)
            tmp *= tmp
            out[i] += tmp
    return out


def _own(stack: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Pick stack[labels[x], x] for every pixel of a block."""
    return np.take_along_axis(stack, labels[None], axis=0)[0]


def perimeter_from_smoothed(u: Partition, smoothed: np.ndarray, dt: float) -> np.ndarray:
    """Per-phase sqrt(pi/dt) int u_i G*(1 - u_i), given smoothed = G*u_i stacked."""
    # u_i * G*(1-u_i) = u_i * (1 - G*u_i) since G*1 = 1
    per = np.zeros(u.n)
    for rows in row_blocks(u.grid.shape):
        lab = u.labels[rows]
        outside = 1.0 - _own(smoothed[:, rows], lab)
        per += np.bincount(lab.ravel(), weights=outside.ravel(), minlength=u.n)
    return perimeter_factor(dt) * u.grid.cell_area * per


def perimeter_estimate(u: Partition, plan: ConvolutionPlan) -> np.ndarray:
    return perimeter_from_smoothed(u, plan.convolve(u.indicators), plan.dt)


def energy_from_fields(u: Partition, g: np.ndarray, smoothed: np.ndarray,
                       dt: float, lam: float) -> EnergyBreakdown:
    """Energy for a partition when g_i and G*u_i are already available."""
    fid = 0.0
    for rows in row_blocks(u.grid.shape):
        fid += float(np.sum(_own(g[:, rows], u.labels[rows])))
    per = perimeter_from_smoothed(u, smoothed, dt)
    return EnergyBreakdown(fidelity_total=u.grid.cell_area * fid,
                           perimeter_total=float(np.sum(per)),
                           per_phase_perimeter=per, lam=lam)


def total_energy(f: ImageField, u: Partition, stats: PhaseStats | None,
                 plan: ConvolutionPlan, lam: float) -> EnergyBreakdown:
    """Approximate energy sum_i int u_i g_i + lam sqrt(pi/dt) sum_i int u_i G*(1-u_i)."""
    _check_shapes(f, u)
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if stats is None:
        stats = phase_stats(f, u)
    if stats.n != u.n:
        raise ValueError("phase stats and partition disagree on phase count")
    return energy_from_fields(u, fidelity(f, stats), plan.convolve(u.indicators), plan.dt, lam)
