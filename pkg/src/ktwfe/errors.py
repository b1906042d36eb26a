"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, data layout, or contract violation."""


class EstimationError(RuntimeError):
    """Numerical failure while fitting (e.g. every restart degenerated)."""
