"""Heat-kernel convolution on the periodic grid.

The kernel is applied through its exact Fourier symbol exp(-|xi|^2 dt),
so the discrete operator conserves mass, is self-adjoint and forms a
semigroup in dt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .field import Grid

DIRECT_MAX_PIXELS = 4096


def _wavenumbers(n: int, length: float) -> np.ndarray:
    # fftfreq gives cycles per sample; scale to angular frequency on [0, length)
    return 2.0 * np.pi * np.fft.fftfreq(n, d=length / n)


@dataclass(frozen=True)
class KernelSpec:
    grid: Grid
    dt: float
    symbol: np.ndarray  # full (ny, nx) multiplier in fft ordering

    @property
    def half_symbol(self) -> np.ndarray:
        """Symbol restricted to the non-negative x frequencies used by rfft2."""
        return self.symbol[:, : self.grid.nx // 2 + 1]


def make_kernel(grid: Grid, dt: float) -> KernelSpec:
    if not dt > 0:
        raise ValueError(f"diffusion time must be positive, got {dt}")
    kx = _wavenumbers(grid.nx, grid.lx)
    ky = _wavenumbers(grid.ny, grid.ly)
    symbol = np.exp(-dt * (ky[:, None] ** 2 + kx[None, :] ** 2))
    symbol.setflags(write=False)
    return KernelSpec(grid, float(dt), symbol)


class ConvolutionPlan:
    """Reusable G_dt convolution for one grid shape.

    Construction precomputes the real-to-complex symbol; ``convolve`` only
    reads plan state, so it may be called concurrently on distinct inputs.
    """

    def __init__(self, kernel: KernelSpec, workers: int | None = None):
        self.kernel = kernel
        self.grid = kernel.grid
        self.workers = workers
        self._symbol = np.ascontiguousarray(kernel.half_symbol)

    @classmethod
    def create(cls, grid: Grid, dt: float, workers: int | None = None) -> "ConvolutionPlan":
        return cls(make_kernel(grid, dt), workers=workers)

    @property
    def dt(self) -> float:
        return self.kernel.dt

    def convolve(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-2:] != self.grid.shape:
            raise ValueError(f"field of shape {u.shape} does not match plan grid {self.grid.shape}")
        if u.ndim == 2:
            return self._convolve_one(u)
        # one field at a time keeps the working set small on large grids
        out = np.empty_like(u)
        for idx in np.ndindex(u.shape[:-2]):
            out[idx] = self._convolve_one(u[idx])
        return out

    def _convolve_one(self, u: np.ndarray) -> np.ndarray:
        spec = scipy.fft.rfft2(u, workers=self.workers)
        spec *= self._symbol
        return scipy.fft.irfft2(spec, s=self.grid.shape, workers=self.workers, overwrite_x=True)

    __call__ = convolve


def convolve(plan: ConvolutionPlan, u: np.ndarray) -> np.ndarray:
    """G_dt * u with periodic boundaries. Accepts a stack of fields (..., ny, nx)."""
    return plan.convolve(u)


def _periodic_kernel_1d(n: int, length: float, dt: float) -> np.ndarray:
    # Trigonometric sum of the 1-D heat symbol, evaluated term by term.
    k = _wavenumbers(n, length)
    x = np.arange(n) * (length / n)
    terms = np.exp(-dt * k[None, :] ** 2) * np.cos(x[:, None] * k[None, :])
    return terms.sum(axis=1) / n


def direct_kernel(grid: Grid, dt: float) -> np.ndarray:
    """Discrete periodic heat kernel in pixel space, total mass 1.

    Built from explicit cosine sums rather than an FFT so that it can serve
    as an independent reference for :class:`ConvolutionPlan`.
    """
    if not dt > 0:
        raise ValueError(f"diffusion time must be positive, got {dt}")
    ky = _periodic_kernel_1d(grid.ny, grid.ly, dt)
    kx = _periodic_kernel_1d(grid.nx, grid.lx, dt)
    return np.outer(ky, kx)


def convolve_direct(grid: Grid, dt: float, u: np.ndarray) -> np.ndarray:
    """O(N^2) periodic convolution by explicit shifted sums."""
    if grid.size > DIRECT_MAX_PIXELS:
        raise ValueError(f"direct convolution limited to {DIRECT_MAX_PIXELS} pixels, "
                         f"grid has {grid.size}")
    u = np.asarray(u, dtype=np.float64)
    if u.shape != grid.shape:
        raise ValueError(f"field of shape {u.shape} does not match grid {grid.shape}")
    kern = direct_kernel(grid, dt)
    out = np.zeros_like(u)
    for p in range(grid.ny):
        for q in range(grid.nx):
            w = kern[p, q]
            if w != 0.0:
                out += w * np.roll(u, (p, q), axis=(0, 1))
    return out
