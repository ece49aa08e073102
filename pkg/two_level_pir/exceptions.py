"""
Error hierarchy for the two-level PIR toolkit.

Every failure raised by the library derives from PirError so callers can catch
one type at the boundary.
"""

from typing import Any, Dict, Optional


class PirError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(PirError, ValueError):
    """Invalid system parameters, modulus, ranges or flag combinations."""


class DegenerateSystemError(PirError, ArithmeticError):
    """Inversion of zero or a singular linear system."""


class InsufficientInformationError(PirError):
    """Fewer known codeword coordinates than the code dimension."""


class CorruptionError(PirError):
    """Known symbols are not consistent with any codeword."""


class InternalConsistencyError(PirError):
    """A guard that valid parameters can never trip has fired."""


class UnsupportedConfigurationError(PirError):
    """The requested scheme is not defined for these parameters."""


class ProtocolError(PirError):
    """Malformed wire message, dimension mismatch or missing answer."""


class TransportError(PirError):
    """A server could not be bound or reached."""


class RetrievalError(PirError):
    """Decoding failed or the recovered message differs from the stored one."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
