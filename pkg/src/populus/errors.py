"""Exception hierarchy shared by all populus modules."""


class PopulusError(Exception):
    """Base class for all errors raised by this package."""


class NotInvertible(PopulusError):
    """Matrix or scalar has no inverse mod 2^64 (even determinant/value)."""


class EmptyKey(PopulusError):
    """User key must be at least one byte."""


class IndexOutOfRange(PopulusError):
    """Keystream or PRN index outside its allowed range."""


class InvalidKey(PopulusError):
    """A round matrix of a temporary key is not invertible."""


class PoolExhausted(PopulusError):
    """All RT-PRN pairs have been consumed; the device must be re-provisioned."""


class NeverWritten(PopulusError):
    """Read of a sector that has no recorded write."""


class InvalidGeometry(PopulusError):
    """Disk image parameters out of range (sector count, pool size)."""


class IoError(PopulusError):
    """Image or journal file malformed, locked, or unwritable."""


class CorruptChain(PopulusError):
    """Structurally invalid or tampered IFCR chain."""


class BadBase(PopulusError):
    """The SPN-encrypted base of an IFCR chain failed framing validation."""


class BadLength(PopulusError):
    """Blob length is not a multiple of the cipher block size."""


class SingularPlaintexts(PopulusError):
    """Collected plaintext matrix is singular mod 2^64; attack needs fresh pairs."""


class InsufficientPairs(PopulusError):
    """Key recovery needs at least 64 same-key pairs."""


class DomainError(PopulusError):
    """Argument outside the mathematical domain of a bound computation."""


class ParamOutOfRange(PopulusError):
    """Security-bound parameters exceed the regime the theorem covers."""


class DegenerateTrace(PopulusError):
    """Energy-trace denominator too close to zero to form a ratio."""
