"""Exception hierarchy shared by every pipeline stage."""


class PufsealError(Exception):
    """Base class for all errors raised by this package."""


# --- device / PUF ---------------------------------------------------------

class DeviceError(PufsealError):
    pass


# --- instruction decoding -------------------------------------------------

class DecodeError(PufsealError):
    pass


class TruncatedParcel(DecodeError):
    pass


class UnsupportedEncoding(DecodeError):
    pass


class UnsupportedParcel(DecodeError):
    pass


class FieldAbsent(DecodeError):
    pass


# --- package / image format -----------------------------------------------

class FormatError(PufsealError):
    pass


class BadMagic(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class Truncated(FormatError):
    pass


class InvariantViolation(FormatError):
    pass


class NotElf(FormatError):
    pass


class NoTextSection(FormatError):
    pass


class UnsupportedElf(FormatError):
    pass


# --- sealing policy -------------------------------------------------------

class PolicyError(PufsealError):
    pass


class PolicyViolation(PolicyError):
    pass


class IndexOutOfRange(PolicyError):
    pass


# --- decryption -----------------------------------------------------------

class MapExhausted(PufsealError):
    pass


# --- analysis -------------------------------------------------------------

class EmptyInput(PufsealError, ValueError):
    pass


# --- distribution ---------------------------------------------------------

class DistributionError(PufsealError):
    pass


class NotFound(DistributionError):
    pass


class BadRequest(DistributionError):
    pass


class TransportError(DistributionError):
    pass
