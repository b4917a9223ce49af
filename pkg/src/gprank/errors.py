"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
DataError -> 2, JudgeError -> 3.
"""


class GprankError(Exception):
    """Base class for all package errors."""


class ConfigError(GprankError):
    """Invalid or inconsistent parameters (bad flag values, pool too small, ...)."""


class DataError(GprankError):
    """Malformed or inconsistent input data (corpus files, runs, qrels, cache)."""


class JudgeError(GprankError):
    """Judge backend failure: transport errors after retries or unparseable responses."""
