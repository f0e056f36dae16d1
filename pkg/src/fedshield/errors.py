"""Exception types shared across the package."""


class FedShieldError(Exception):
    """Base class for all package-specific errors."""


class ParameterError(FedShieldError, ValueError):
    """Invalid or inconsistent parameters (bad degree, rank, shapes, weights)."""


class CapacityError(FedShieldError, ValueError):
    """More values than available plaintext slots."""


class RangeError(FedShieldError, ValueError):
    """Encoded magnitudes exceed the modulus headroom."""


class StateError(FedShieldError, RuntimeError):
    """Operation not valid in the current object state (level/scale mismatch,
    double merge, wrong mode)."""


class DepthExhaustedError(StateError):
    """No modulus left to rescale into."""


class FormatError(FedShieldError, ValueError):
    """Malformed or foreign bytes fed to a deserializer."""


class ConfigError(FedShieldError, ValueError):
    """Unknown keys or invalid values in a run configuration."""


class DivergenceError(FedShieldError, RuntimeError):
    """Local training loss blew up; carries the loss history."""

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
