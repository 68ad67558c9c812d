"""Exception types shared across the package.

Everything raised on purpose derives from SsrnError so the CLI can catch one
type, print a single-line error, and exit with a stable code. Index errors on
user-supplied positions raise the builtin IndexError instead, since that is
what callers already expect from sequence-style lookups.
"""

from __future__ import annotations


class SsrnError(Exception):
    """Base class for all deliberate failures."""


class ShapeError(SsrnError, ValueError):
    """Operands have incompatible shapes. The message names both shapes."""


class ValidationError(SsrnError, ValueError):
    """A value is outside its documented domain (sizes, ranges, flags)."""


class FormatError(SsrnError, ValueError):
    """A file on disk does not match the expected layout."""


class IntegrityError(FormatError):
    """A file parsed but its checksum or internal bookkeeping disagrees."""


class VersionError(FormatError):
    """A file carries an unsupported format version."""
