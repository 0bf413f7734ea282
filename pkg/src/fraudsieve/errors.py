"""Exception hierarchy shared across the package."""


class FraudsieveError(Exception):
    """Base class for all package errors."""


class DataError(FraudsieveError, ValueError):
    """Bad input data: unreadable files, schema mismatches, unparseable
    cells, degenerate inputs (single-class training sets, empty score
    vectors, ...)."""


class ConfigError(FraudsieveError, ValueError):
    """Invalid run configuration or config file."""


class ArtifactError(FraudsieveError, ValueError):
    """Corrupt or incompatible model artifact file."""
