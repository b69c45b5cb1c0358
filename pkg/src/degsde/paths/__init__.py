"""Brownian paths, integration schemes, Monte Carlo and uniqueness studies."""

from .brownian import ArrayNoise, BrownianPath, NoiseStream, refine, sample_path, substream
from .montecarlo import McSummary, monte_carlo
from .schemes import BOUNDARY_POLICIES, SCHEMES, BatchResult, run_batch, step
from .simulate import Trajectory, integrate, steps_for
from .uniqueness import GapReport, fitted_order, uniqueness_gap

__all__ = [
    "ArrayNoise", "BrownianPath", "NoiseStream", "refine", "sample_path", "substream",
    "McSummary", "monte_carlo",
    "BOUNDARY_POLICIES", "SCHEMES", "BatchResult", "run_batch", "step",
    "Trajectory", "integrate", "steps_for",
    "GapReport", "fitted_order", "uniqueness_gap",
]
