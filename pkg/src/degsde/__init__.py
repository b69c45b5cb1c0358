"""Simulation and sampled audits for degenerate SDEs on the orthant and the unit ball."""

__version__ = "0.1.0"

from .model import Model, MultiCirModel, PowerBetaModel, UnitBallModel, build_model, diffusion_matrix_m

__all__ = ["__version__", "Model", "MultiCirModel", "PowerBetaModel", "UnitBallModel", "build_model",
           "diffusion_matrix_m"]
