"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without inspecting messages.
"""


class ArtifactError(Exception):
    """Base class for all errors raised by the package."""

    exit_code = 1


class ConfigError(ArtifactError):
    """A scenario configuration is malformed or inconsistent."""

    exit_code = 2


class DataError(ArtifactError):
    """Input data (samples, fixtures, observations) is missing or invalid."""

    exit_code = 3


class DomainError(DataError):
    """An attribute vector lies outside the utility domain."""


class InvariantError(DataError):
    """A value violates a structural invariant, e.g. simplex membership."""


class DegeneracyError(DataError):
    """A covariance matrix is singular beyond what a ridge can repair."""


class DesignError(DataError):
    """A regression design matrix is rank deficient."""


class ParameterError(ArtifactError):
    """A numeric parameter lies outside its admissible range."""

    exit_code = 2


class ModelError(ArtifactError):
    """An optimisation model cannot be built from the given inputs."""

    exit_code = 4


class SolverError(ArtifactError):
    """A numerical solve failed or ended without an optimal solution."""

    exit_code = 4

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution
