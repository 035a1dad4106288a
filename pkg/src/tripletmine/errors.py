"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration or usage problem the caller can fix.

    The CLI maps this to exit code 2; the service maps it to HTTP 400.
    """


class ZeroNormRowError(ValueError):
    """A feature row has zero Euclidean norm and cannot be normalized."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"feature row {row} has zero norm; cannot L2-normalize")
