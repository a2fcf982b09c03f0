"""Exception hierarchy.

Anything deriving from ``LoadshiftError`` is a user/input problem; the CLI
maps it to exit code 1. Everything else is treated as an internal error.
"""


class LoadshiftError(Exception):
    pass


class ReadingsError(LoadshiftError):
    pass


class CatalogError(LoadshiftError):
    pass


class MappingError(LoadshiftError):
    pass


class CoverageError(LoadshiftError):
    """Requested signal horizon is not (fully) covered by the source."""


class SchemaError(LoadshiftError):
    pass


class InsufficientHistoryError(LoadshiftError):
    pass


class ConfigError(LoadshiftError):
    pass
