"""Iterative convolution/thresholding minimization of the approximate energy."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.cluster.vq import kmeans2

from .energy import (EnergyBreakdown, PhaseStats, energy_from_fields, fidelity,
                     perimeter_factor, phase_stats)
from .field import Grid, ImageField, Partition, row_blocks, symmetric_difference_measure
from .spectral import ConvolutionPlan

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("stripes", "circles", "random", "kmeans")

TOLERANCE_MET = "tolerance-met"
MAX_ITER = "max-iter"
DECAY_ABORT = "decay-violation-abort"


@dataclass
class SolverConfig:
    n: int = 2
    dt: float = 0.01
    lam: float = 0.003
    tau: float = 0.0
    max_iter: int = 500
    init: str = "circles"
    seed: int = 0
    assert_decay: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"need at least 2 phases, got {self.n}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")
        if self.tau < 0:
            raise ValueError(f"tau must be non-negative, got {self.tau}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}; "
                             f"choose from {', '.join(INIT_STRATEGIES)}")


@dataclass
class IterationReport:
    k: int
    energy: EnergyBreakdown
    e_k: float  # NaN for the initial state, which has no predecessor
    means: np.ndarray
    changed_pixels: int
    wall_time: float


@dataclass
class SolveResult:
    final: Partition
    reports: list[IterationReport]
    converged: bool
    stop_reason: str
    partitions: list[Partition] = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> int:
        return self.reports[-1].k

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy.total for r in self.reports])


class DecayViolation(RuntimeError):
    """Energy increased between iterates; indicates an implementation bug."""

    def __init__(self, k, before: EnergyBreakdown, after: EnergyBreakdown,
                 previous: Partition, current: Partition, result: SolveResult):
        self.k = k
        self.before = before
        self.after = after
        self.previous = previous
        self.current = current
        self.result = result
        super().__init__(
            f"energy increased at iteration {k}: {before.total!r} -> {after.total!r} "
            f"(fidelity {before.fidelity_total!r} -> {after.fidelity_total!r}, "
            f"perimeter {before.perimeter_total!r} -> {after.perimeter_total!r}, "
            f"{np.count_nonzero(previous.labels != current.labels)} pixels changed)")


def decay_slack(energy: float) -> float:
    return 1e-9 * (1.0 + abs(energy))


def _stripes(grid: Grid, n: int) -> np.ndarray:
    rows = (np.arange(grid.ny) * n) // grid.ny
    return np.repeat(rows[:, None], grid.nx, axis=1)


def _circles(grid: Grid, n: int) -> np.ndarray:
    # n-1 disjoint disks on a ring around the center; background is the last phase
    ny, nx = grid.shape
    m = n - 1
    side = min(nx, ny)
    y, x = np.mgrid[0:ny, 0:nx] + 0.5
    cy, cx = ny / 2.0, nx / 2.0
    labels = np.full(grid.shape, n - 1, dtype=np.intp)
    if m == 1:
        centers = [(cy, cx)]
        radius = 0.3 * side
    else:
        ring = 0.25 * side
        radius = min(0.2 * side, 0.9 * ring * math.sin(math.pi / m))
        angles = 2 * math.pi * np.arange(m) / m - math.pi / 2
        centers = [(cy + ring * math.sin(a), cx + ring * math.cos(a)) for a in angles]
    for j, (py, px) in enumerate(centers):
        labels[(y - py) ** 2 + (x - px) ** 2 < radius ** 2] = j
    return labels


def initialize(grid: Grid, config: SolverConfig, f: ImageField | None = None) -> Partition:
    """Initial partition for the configured strategy.

    ``kmeans`` clusters pixel values and therefore needs the image.
    """
    n = config.n
    if config.init == "stripes":
        labels = _stripes(grid, n)
    elif config.init == "circles":
        labels = _circles(grid, n)
    elif config.init == "random":
        rng = np.random.default_rng(config.seed)
        labels = rng.integers(0, n, size=grid.shape)
    elif config.init == "kmeans":
        if f is None:
            raise ValueError("kmeans initialization needs the image")
        data = f.values.reshape(-1, f.d)
        _, flat = kmeans2(data, n, minit="++", seed=config.seed)
        labels = flat.reshape(grid.shape)
    else:
        raise ValueError(f"unknown init strategy {config.init!r}")
    return Partition(grid, n, labels)


def compute_scores(g: np.ndarray, smoothed: np.ndarray, config: SolverConfig) -> np.ndarray:
    """phi_i = g_i + 2 lam sqrt(pi/dt) (1 - G*u_i), stacked as (n, ny, nx)."""
    coef = 2.0 * config.lam * perimeter_factor(config.dt)
    return g + coef * (1.0 - smoothed)


def scores_for(f: ImageField, u: Partition, plan: ConvolutionPlan,
               config: SolverConfig, stats: PhaseStats | None = None) -> np.ndarray:
    if stats is None:
        stats = phase_stats(f, u)
    return compute_scores(fidelity(f, stats), plan.convolve(u.indicators), config)


def _argmin_first(scores: np.ndarray, out: np.ndarray) -> np.ndarray:
    # running strict-less scan: argmin over the leading axis, first index wins ties
    best = scores[0].copy()
    out[...] = 0
    for i in range(1, scores.shape[0]):
        better = scores[i] < best
        out[better] = i
        np.minimum(best, scores[i], out=best)
    return out


def threshold(scores: np.ndarray, grid: Grid | None = None) -> Partition:
    """Assign each pixel to its lowest-score phase; ties go to the lowest index."""
    scores = np.asarray(scores)
    if grid is None:
        grid = Grid.for_shape(scores.shape[1:])
    labels = np.empty(scores.shape[1:], dtype=np.intp)
    for rows in row_blocks(labels.shape):
        _argmin_first(scores[:, rows], labels[rows])
    return Partition(grid, scores.shape[0], labels)


def _threshold_fused(g: np.ndarray, smoothed: np.ndarray, config: SolverConfig,
                     grid: Grid) -> Partition:
    labels = np.empty(grid.shape, dtype=np.intp)
    for rows in row_blocks(grid.shape):
        _argmin_first(compute_scores(g[:, rows], smoothed[:, rows], config), labels[rows])
    return Partition(grid, g.shape[0], labels)


def step(f: ImageField, g: np.ndarray, smoothed: np.ndarray, plan: ConvolutionPlan,
         config: SolverConfig):
    """One iteration from g^k and G*u^k to u^{k+1} with its stats, fields and energy.

    Uses exactly n convolutions; the smoothed indicators of the new iterate
    serve both its energy and the next score evaluation.
    """
    new_u = _threshold_fused(g, smoothed, config, f.grid)
    stats = phase_stats(f, new_u)
    g = fidelity(f, stats)
    smoothed = plan.convolve(new_u.indicators)
    energy = energy_from_fields(new_u, g, smoothed, config.dt, config.lam)
    return new_u, stats, g, smoothed, energy


def solve(f: ImageField, config: SolverConfig, init: Partition | None = None,
          plan: ConvolutionPlan | None = None,
          sink: Callable[[IterationReport], None] | None = None,
          keep_partitions: bool = False) -> SolveResult:
    """Run the linearize/threshold loop until e^k <= tau or max_iter."""
    grid = f.grid
    if plan is None:
        plan = ConvolutionPlan.create(grid, config.dt)
    elif plan.grid.shape != grid.shape or plan.dt != config.dt:
        raise ValueError("convolution plan does not match image grid or dt")
    u = init if init is not None else initialize(grid, config, f)
    if u.n != config.n or u.grid.shape != grid.shape:
        raise ValueError("initial partition does not match config/grid")

    reports: list[IterationReport] = []
    partitions = [u] if keep_partitions else []

    def emit(report):
        reports.append(report)
        if sink is not None:
            sink(report)

    t0 = time.perf_counter()
    stats = phase_stats(f, u)
    g = fidelity(f, stats)
    smoothed = plan.convolve(u.indicators)
    energy = energy_from_fields(u, g, smoothed, config.dt, config.lam)
    emit(IterationReport(0, energy, float("nan"), stats.means, 0, time.perf_counter() - t0))
    dead = stats.empty.copy()
    if dead.any():
        log.warning("initial partition has empty phases %s", np.flatnonzero(dead).tolist())

    stop_reason = MAX_ITER
    for k in range(1, config.max_iter + 1):
        t0 = time.perf_counter()
        new_u, stats, g, smoothed, new_energy = step(f, g, smoothed, plan, config)
        e_k = symmetric_difference_measure(new_u, u)
        changed = int(np.count_nonzero(new_u.labels != u.labels))
        report = IterationReport(k, new_energy, e_k, stats.means, changed,
                                 time.perf_counter() - t0)
        emit(report)
        if keep_partitions:
            partitions.append(new_u)

        newly_dead = stats.empty & ~dead
        if newly_dead.any():
            log.warning("phases %s vanished at iteration %d", np.flatnonzero(newly_dead).tolist(), k)
            dead |= stats.empty

        if config.assert_decay and new_energy.total > energy.total + decay_slack(energy.total):
            result = SolveResult(new_u, reports, False, DECAY_ABORT, partitions)
            raise DecayViolation(k, energy, new_energy, u, new_u, result)

        u, energy = new_u, new_energy
        if e_k <= config.tau:
            stop_reason = TOLERANCE_MET
            break

    return SolveResult(final=u, reports=reports, converged=stop_reason == TOLERANCE_MET,
                       stop_reason=stop_reason, partitions=partitions)
