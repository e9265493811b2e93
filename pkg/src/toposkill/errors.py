"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration; CLI maps this to exit code 2."""


class InvalidStateError(RuntimeError):
    """Operation called on a state that cannot serve it (e.g. empty graph)."""


class NotReadyError(RuntimeError):
    """Retryable: not enough data yet to perform the operation."""


class NumericalAbort(RuntimeError):
    """A non-finite value surfaced in a learning step; CLI maps this to exit 3."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
