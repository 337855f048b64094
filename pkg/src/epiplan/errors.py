"""Exception hierarchy shared across the toolkit.

Each class maps to one CLI error category: configuration problems exit 1,
data problems exit 2, solver problems exit 3.
"""


class EpiplanError(Exception):
    """Base class for all toolkit errors."""

    category = "config"


class ConfigurationError(EpiplanError):
    """Invalid configuration value, grid spec, or action/budget setup."""

    category = "config"


class ParameterError(EpiplanError):
    """Invalid numeric argument to a model operation."""

    category = "config"


class ContractError(EpiplanError):
    """Dimension mismatch or violated call contract between modules."""

    category = "config"


class DataError(EpiplanError):
    """Malformed or insufficient input data."""

    category = "data"


class CalibrationError(DataError):
    """Calibration could not produce parameters; message carries diagnostics."""


class SolverError(EpiplanError):
    """Solver failed to converge, hit a size guard, or met a singular system."""

    category = "solver"


class ImpossibleObservationError(SolverError):
    """An observation with zero predicted probability was fed to the filter.

    Signals model/belief inconsistency; the caller decides the fallback.
    """
