"""Pseudospectral simulator for the stochastic Schrodinger-KdV system."""
from .dynamics import ApproxParams, FieldPair, PhysicalConstants, benchmark_initial
from .grid import SpectralGrid
from .integrators import BlowUpError, Forcing, SchemeConfig, StepSizeError, Trajectory, run
from .noise import NoiseOperator, NoisePath

__version__ = "0.1.0"

__all__ = [
    "ApproxParams", "BlowUpError", "FieldPair", "Forcing", "NoiseOperator", "NoisePath",
    "PhysicalConstants", "SchemeConfig", "SpectralGrid", "StepSizeError", "Trajectory",
    "benchmark_initial", "run",
]
