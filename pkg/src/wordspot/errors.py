"""Exception types that map to distinct CLI exit codes."""


class WordspotError(Exception):
    """Base class for errors raised by this package."""

    exit_code = 1


class ConfigError(WordspotError):
    """Invalid or inconsistent run configuration."""

    exit_code = 2


class DataError(WordspotError):
    """Broken, missing or inconsistent input data."""

    exit_code = 3


class NumericError(WordspotError):
    """Numerical failure such as divergence during training."""

    exit_code = 4
