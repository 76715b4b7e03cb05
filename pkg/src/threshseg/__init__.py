"""Multi-phase piecewise-constant segmentation by heat-kernel threshold dynamics."""

__version__ = "0.1.0"

from .energy import EnergyBreakdown, PhaseStats, fidelity, perimeter_estimate, phase_stats, total_energy
from .field import Grid, ImageField, Partition, integrate, partition_from_labels, symmetric_difference_measure
from .solver import (DecayViolation, IterationReport, SolveResult, SolverConfig, compute_scores,
                     initialize, solve, threshold)
from .spectral import ConvolutionPlan, KernelSpec, convolve, convolve_direct, make_kernel

__all__ = [
    "ConvolutionPlan", "DecayViolation", "EnergyBreakdown", "Grid", "ImageField",
    "IterationReport", "KernelSpec", "Partition", "PhaseStats", "SolveResult", "SolverConfig",
    "compute_scores", "convolve", "convolve_direct", "fidelity", "initialize", "integrate",
    "make_kernel", "partition_from_labels", "perimeter_estimate", "phase_stats", "solve",
    "symmetric_difference_measure", "threshold", "total_energy",
]
