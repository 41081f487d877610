"""Exception types raised across the package.

Every error that callers are expected to catch lives here so that
``except dumpscout.errors.DumpscoutError`` is always a safe net.  Each
subclass carries a human-readable message naming the offending input;
none of them wrap other exceptions silently.
"""

from __future__ import annotations


class DumpscoutError(Exception):
    """Base class for all errors raised by this package."""


# --- dump container parsing ---------------------------------------------


class DumpFormatError(DumpscoutError):
    """A dump file or byte buffer could not be understood."""


class EmptyInput(DumpFormatError):
    """The input held zero bytes; there is nothing to scan."""


class BadMagic(DumpFormatError):
    """The input does not start with the minidump magic ``MDMP``."""


class Truncated(DumpFormatError):
    """A structure inside the dump points past the end of the file."""


class NoMemoryStream(DumpFormatError):
    """The stream directory contains no memory range stream."""


class OverlappingRegions(DumpFormatError):
    """Two memory regions claim intersecting virtual address ranges."""


# --- signature compilation and scanning ---------------------------------


class SignatureError(DumpscoutError):
    """A signature definition or scan request is invalid."""


class DuplicateId(SignatureError):
    """Two signatures in one set share the same id."""


class InvalidPattern(SignatureError):
    """A signature pattern violates a structural constraint."""


class EmptyNeedle(SignatureError):
    """An occurrence count was requested for a zero-length needle."""


class AnchorOutOfRange(SignatureError):
    """A window extraction anchor lies outside its region."""


class SignatureFileError(SignatureError):
    """A signature set file is not valid JSON of the expected shape."""


class FindingFormatError(DumpscoutError):
    """A findings file line is not valid JSON of the expected shape."""


# --- pattern discovery ---------------------------------------------------


class DiscoveryError(DumpscoutError):
    """A discovery input violates a precondition."""


class SecretTooShort(DiscoveryError):
    """A planted secret is too short to locate reliably."""


class TooFewSamples(DiscoveryError):
    """Pattern mining needs at least two context samples."""


# --- synthetic lab -------------------------------------------------------


class LabError(DumpscoutError):
    """A synthetic memory image could not be generated."""


class ProfileError(LabError):
    """A leak profile definition is inconsistent; the message names the field."""


class CollisionUnresolvable(LabError):
    """Filler bytes kept colliding with a secret after bounded retries."""


# --- reporting -----------------------------------------------------------


class ReportError(DumpscoutError):
    """A leak matrix could not be assembled or parsed."""


class DuplicateCell(ReportError):
    """Two runs map to the same (target, scenario) matrix cell."""


class MatrixSchemaError(ReportError):
    """A serialized leak matrix does not match the expected schema."""
