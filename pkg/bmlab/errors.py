"""Exceptions and warnings raised by the laboratory.

Every error carries the exit code the CLI maps it to.
"""
from reference_data.reference import exit_codes


class LabError(Exception):
    exit_code = exit_codes["numerical"]


class HermiteRangeError(LabError, ValueError):
    """Hermite order outside the supported range"""


class EvaluationError(LabError, ValueError):
    """Non-finite function values at quadrature nodes"""


class RankError(LabError, ValueError):
    """The Hermite rank of a function is too low for the requested operation"""


class ModelError(LabError, ValueError):
    """Invalid correlation model, or a model lacking the lags an operation needs"""


class SimulationError(LabError, ValueError):
    """No valid covariance factorization could be found"""


class ConstructionError(LabError, ValueError):
    """A path batch lacks what the sharp construction needs"""


class EstimationError(LabError, ValueError):
    """A sample is degenerate for the requested estimator"""


class ConfigError(LabError, ValueError):
    exit_code = exit_codes["usage"]


class ReportParseError(LabError, ValueError):
    exit_code = exit_codes["usage"]


class IntegrabilityWarning(UserWarning):
    pass


class SummabilityWarning(UserWarning):
    pass


class EmbeddingWarning(UserWarning):
    pass
