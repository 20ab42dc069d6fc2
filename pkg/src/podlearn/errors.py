"""Exception types shared across the package."""


class PodlearnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PodlearnError):
    """Operand shapes are incompatible with the requested operation."""

    def __init__(self, op: str, message: str):
        super().__init__(f"{op}: {message}")
        self.op = op


class NumericError(PodlearnError):
    """A computation produced NaN/Inf or hit an undefined numeric case."""


class ContractError(PodlearnError):
    """A caller violated a documented precondition."""


class FormatError(PodlearnError):
    """An external file does not match its expected layout."""


class ConfigError(PodlearnError):
    """An experiment configuration is missing, malformed, or inconsistent."""
