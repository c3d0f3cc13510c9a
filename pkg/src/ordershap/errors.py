"""Exception hierarchy shared across the package."""


class OrderShapError(Exception):
    """Base class for all package errors."""


class ContractViolation(OrderShapError, ValueError):
    """An operation was called with arguments outside its contract."""


class CapacityError(OrderShapError, ValueError):
    """Exact enumeration refused because the instance is too large."""


class ConfigurationError(OrderShapError, ValueError):
    """Invalid estimator, intervention, or dataset configuration."""


class UnsupportedConfigurationError(ConfigurationError):
    """A configuration that is valid for sampling but not for exact enumeration."""


class EvaluationError(OrderShapError, RuntimeError):
    """Model evaluation failed; carries the coalition that was being valued."""

    def __init__(self, message, coalition=None):
        super().__init__(message)
        self.coalition = coalition


class UndefinedCorrelationError(OrderShapError, ValueError):
    """Pearson correlation requested for a zero-variance vector."""


class BridgeError(OrderShapError, RuntimeError):
    """Base class for model-bridge failures."""


class HandshakeError(BridgeError):
    """The endpoint did not complete a valid handshake."""


class ProtocolError(BridgeError):
    """The endpoint violated the wire protocol (never retried)."""


class TransportError(BridgeError):
    """Transient transport failure (retried a bounded number of times)."""


class DataError(OrderShapError, ValueError):
    """Malformed or insufficient input data."""
