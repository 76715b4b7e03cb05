"""Computational grid, image fields and binary phase partitions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# Pixels per row block in streaming passes; keeps a handful of float64
# per-phase blocks inside a typical 1-2 MiB L2 cache.
BLOCK_PIXELS = 16384


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid of ``ny`` rows by ``nx`` columns.

    The physical extent along x defaults to 2*pi; the y extent keeps the
    pixels square unless given explicitly.
    """

    nx: int
    ny: int
    lx: float = TWO_PI
    ly: float | None = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2 samples per axis, got {self.ny}x{self.nx}")
        if self.ly is None:
            object.__setattr__(self, "ly", self.lx * self.ny / self.nx)
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain extents must be positive")

    @classmethod
    def for_shape(cls, shape) -> "Grid":
        ny, nx = shape[:2]
        return cls(nx=int(nx), ny=int(ny))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def size(self) -> int:
        return self.nx * self.ny


@dataclass
class ImageField:
    """Vector-valued image ``f`` sampled on a grid, stored as (ny, nx, d)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[:2] != self.grid.shape:
            raise ValueError(f"image of shape {v.shape} does not fit grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("image values must be finite")
        self.values = v

    @classmethod
    def from_array(cls, values) -> "ImageField":
        values = np.asarray(values, dtype=np.float64)
        return cls(Grid.for_shape(values.shape), values)

    @property
    def d(self) -> int:
        return self.values.shape[2]

    @property
    def planes(self) -> np.ndarray:
        """Channel-first contiguous copy (d, ny, nx), computed once."""
        cached = self.__dict__.get("_planes")
        if cached is None:
            cached = np.ascontiguousarray(np.moveaxis(self.values, 2, 0))
            self.__dict__["_planes"] = cached
        return cached


@dataclass
class Partition:
    """n-phase partition of the grid held as one label per pixel.

    Indicators ``u_i = (labels == i)`` are derived, so every partition is
    binary and sums to one at each pixel by construction.
    """

    grid: Grid
    n: int
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("phase count must be positive")
        labels = np.asarray(self.labels)
        if labels.shape != self.grid.shape:
            raise ValueError(f"labels of shape {labels.shape} do not fit grid {self.grid.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n):
            raise ValueError(f"labels must lie in [0, {self.n})")
        self.labels = labels.astype(np.intp, copy=False)

    def indicator(self, i: int) -> np.ndarray:
        return (self.labels == i).astype(np.float64)

    @property
    def indicators(self) -> np.ndarray:
        """Stacked indicators with shape (n, ny, nx)."""
        return (self.labels[None, :, :] == np.arange(self.n)[:, None, None]).astype(np.float64)

    def counts(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.n)

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return (self.grid == other.grid and self.n == other.n
                and np.array_equal(self.labels, other.labels))


def integrate(values, grid: Grid) -> float:
    """Midpoint quadrature: cell area times the pixel sum."""
    return grid.cell_area * float(np.sum(values))


def partition_from_labels(labels, n: int, grid: Grid | None = None) -> Partition:
    labels = np.asarray(labels)
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ValueError(f"label out of range for {n} phases: "
                         f"found values in [{labels.min()}, {labels.max()}]")
    if grid is None:
        grid = Grid.for_shape(labels.shape)
    return Partition(grid, n, labels)


def symmetric_difference_measure(a: Partition, b: Partition) -> float:
    """Normalized L2 change (1/|Omega|) * int sum_i |a_i - b_i|^2.

    For binary partitions each relabeled pixel contributes 2, so the result
    is twice the fraction of pixels whose label differs.
    """
    if a.n != b.n or a.grid.shape != b.grid.shape:
        raise ValueError("partitions differ in phase count or grid shape")
    changed = np.count_nonzero(a.labels != b.labels)
    return 2.0 * changed / a.grid.size


def row_blocks(shape, block_pixels: int = BLOCK_PIXELS):
    """Row slices covering a (ny, nx) grid in blocks of about ``block_pixels``."""
    ny, nx = shape[-2:]
    rows = max(1, block_pixels // nx)
    return [slice(r, min(r + rows, ny)) for r in range(0, ny, rows)]
