class ConfigError(ValueError):
    """Invalid run configuration or model parameters (CLI exit code 2)."""


class DataError(RuntimeError):
    """Corrupt, empty or statistically insufficient data (CLI exit code 3)."""


class FitError(RuntimeError):
    """Fit failed to converge or is ill-posed (CLI exit code 4)."""
