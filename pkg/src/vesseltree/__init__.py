"""Vessel-geometry toolkit.

Encodes binary retinal-vessel masks as connected cubic-Bezier trees,
extracts a 20-dimensional geometric feature vector, applies parametric
counterfactual perturbations, rasterizes a three-channel conditioning
hint, and computes paired / observational statistics over externally
supplied classifier scores.
"""

__version__ = "0.1.0"

from vesseltree.errors import (
    BteParseError,
    ConfigError,
    ConvergenceError,
    MaskError,
    SeparationError,
    VesselTreeError,
)

__all__ = [
    "__version__",
    "VesselTreeError",
    "MaskError",
    "BteParseError",
    "ConfigError",
    "SeparationError",
    "ConvergenceError",
]
