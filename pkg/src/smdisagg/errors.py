"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage errors exit 2, data errors 3,
numeric failures 4.
"""


class DisaggError(Exception):
    """Base class for all package errors."""


class DomainError(DisaggError, ValueError):
    """An argument is outside its valid domain (negative sd, zero factor...)."""


class DimensionError(DisaggError, ValueError):
    """Array shapes or grid dimensions are inconsistent."""


class DataError(DisaggError):
    """Missing or malformed external data (grid files, manifests)."""


class ConfigError(DisaggError):
    """Unparseable or inconsistent run configuration (a usage error)."""


class NumericError(DisaggError, RuntimeError):
    """A numeric procedure failed to produce a usable result."""


class DegenerateClusterError(NumericError):
    """A cluster lost all kernel mass (V -> 0) during optimization."""


class DegenerateDataError(NumericError):
    """Input data has no variance where spread is required."""


class SolverError(NumericError):
    """A linear solve failed; typically a singular system at mu = 0."""
