"""Exception types that map onto the CLI's distinct exit codes."""


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


class DataError(ValueError):
    """Unusable input data (missing file, bad header, bad rows)."""


class GuardError(RuntimeError):
    """A size guard refused to run an exhaustive computation."""


class ToleranceError(RuntimeError):
    """A numerical invariant was violated beyond its tolerance."""
