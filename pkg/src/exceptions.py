"""
Exception hierarchy shared by every sub-package.

Each class also derives from the closest builtin so callers that only know
about ``ValueError`` or ``ConnectionError`` keep working.
"""


class FlurpError(Exception):
    """Base class for all errors raised by this package."""


class TransportError(FlurpError, ConnectionError):
    """Failure on the link between the two servers."""


class ClosedChannelError(TransportError):
    """The peer endpoint has terminated."""


class TagMismatchError(TransportError):
    """A frame arrived with a different tag than the receiver expected."""

    def __init__(self, expected: str, received: str):
        super().__init__(f"expected frame tagged {expected!r}, received {received!r}")
        self.expected = expected
        self.received = received


class ProtocolTimeoutError(TransportError, TimeoutError):
    """No frame arrived within the receive timeout."""


class ShapeMismatchError(FlurpError, ValueError):
    """Operands disagree on length, ring width, scale or owning party."""


class RingOverflowError(FlurpError, OverflowError):
    """A value does not fit the ring without wrapping into the sign region."""


class TripleReuseError(FlurpError, RuntimeError):
    """A Beaver triple was offered to a second multiplication."""


class KeyMismatchError(FlurpError, ValueError):
    """Ciphertexts or keys belonging to different Paillier key pairs were combined."""


class PlaintextRangeError(FlurpError, ValueError):
    """Plaintext outside [0, N)."""


class PermutationError(FlurpError, ValueError):
    """A permutation is not a bijection on its row."""


class SelectionError(FlurpError, ValueError):
    """Invalid quickselect input (empty row or target out of range)."""


class NoQualifiedClientsError(FlurpError, RuntimeError):
    """The defense qualified no client; the round must be skipped."""


class ConfigError(FlurpError, ValueError):
    """Invalid experiment configuration."""
