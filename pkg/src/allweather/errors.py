"""Exception types shared across the toolkit."""


class ShapeError(ValueError):
    """Array has the wrong rank or dimensions (e.g. not a multiple of 8)."""


class ParameterError(ValueError):
    """A degradation/model parameter is outside its allowed range."""


class InvalidCodeError(ValueError):
    """A weather code is malformed or all-zero where a degradation is required."""


class ConfigError(ValueError):
    """A network/run configuration is internally inconsistent."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss. Carries the offending step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class UntrainedModelError(RuntimeError):
    """An operation requiring trained weights was called on a fresh model."""
