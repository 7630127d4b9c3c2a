"""Exception types shared across the package."""


class VesselTreeError(Exception):
    """Base class for all package errors."""


class MaskError(VesselTreeError):
    """Invalid mask input (unreadable file, bad bit depth, empty image...)."""


class BteParseError(VesselTreeError):
    """Malformed BTE file. Carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(VesselTreeError):
    """Invalid run or perturbation configuration."""


class SeparationError(VesselTreeError):
    """Logistic regression diverged: classes are (quasi-)separated."""


class ConvergenceError(VesselTreeError):
    """Iterative solver failed to converge within its iteration budget."""
