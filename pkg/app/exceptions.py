from typing import Any, Dict, Optional


class TvboError(Exception):
    """Base class for every error raised by this package"""


class InvalidInputError(TvboError, ValueError):
    """Non-finite numbers, out-of-domain points, malformed rewards"""


class InvalidSpecError(TvboError, ValueError):
    """A kernel, policy, environment or experiment spec outside its valid range"""


class NumericalFailureError(TvboError):
    """Factorization failed even after the jitter ladder was exhausted"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class GenerationError(NumericalFailureError):
    """The hidden objective could not be sampled"""


class ProtocolError(TvboError):
    """A tuner protocol message could not be honoured"""

    code = "protocol_error"

    def __init__(self, message: str, code: Optional[str] = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class StaleRoundError(ProtocolError):
    code = "stale_round"


class PersistenceError(TvboError):
    """Writing or reading a result artifact failed"""

    def __init__(self, message: str, path: str):
        super().__init__(f"{message} (path: {path})")
        self.path = path
