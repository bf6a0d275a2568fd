"""
Exceptions raised by the laboratory.

Monte Carlo degeneracy is never an exception: it is reported on the
``Estimate`` itself.
"""


class LaboratoryError(Exception):
    """Base class for every error raised on purpose by this package."""


class AliasingError(LaboratoryError, ValueError):
    """A grid or cutoff is too small for the requested exact evaluation."""


class ModelError(LaboratoryError, ValueError):
    """Invalid model or polynomial parameters."""


class HypothesisError(LaboratoryError, ValueError):
    """A schedule, compensation hypothesis or algebraic identity does not hold."""


class ConfigError(LaboratoryError, ValueError):
    """Invalid experiment configuration; ``field_path`` points at the offending entry."""

    def __init__(self, message: str, field_path: str = ""):
        self.field_path = field_path
        prefix = f"{field_path}: " if field_path else ""
        super().__init__(f"{prefix}{message}")
