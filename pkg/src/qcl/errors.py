"""Exception hierarchy shared by every qcl module."""


class QclError(Exception):
    """Base class for all library errors."""


class KeyLengthMismatch(QclError, ValueError):
    pass


class AuthFailure(QclError):
    """AEAD tag did not verify."""


class TooShort(QclError, ValueError):
    pass


class UnknownSuite(QclError, KeyError):
    pass


class InvalidConnectionIdLength(QclError, ValueError):
    pass


class PayloadTooShortForSample(QclError, ValueError):
    pass


class MalformedHeader(QclError, ValueError):
    pass


class MtuTooSmall(QclError, ValueError):
    pass


class UnknownAlgorithm(QclError, KeyError):
    pass


class ParseError(QclError, ValueError):
    pass


class VectorMismatch(QclError):
    def __init__(self, label: str, expected: bytes, actual: bytes):
        super().__init__(f"{label}: expected {expected.hex()}, got {actual.hex()}")
        self.label = label
        self.expected = expected
        self.actual = actual
