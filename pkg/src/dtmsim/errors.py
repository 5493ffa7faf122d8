"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent.

    The message names the offending field with a dotted path where one exists.
    """


class SyncError(RuntimeError):
    """Clock recovery failed: no correlation peak above the noise floor."""


class InsufficientBootstrap(RuntimeError):
    """Too few (or too noisy) bootstrap coincidences to fix the output mapping."""


class ComparisonError(ValueError):
    """Two runs differ in parameters that a comparison requires to be equal."""
