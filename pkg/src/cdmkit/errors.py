"""Exception hierarchy shared across the toolkit.

Two broad families matter to callers (and to the CLI exit-code contract):
input-side problems (bad files, bad values, mismatched shapes) and
compute-side problems (numerical blow-ups, degenerate data discovered
mid-run).
"""

from __future__ import annotations


class CdmError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(CdmError):
    """A value, record, or configuration violates a documented invariant."""


class FormatError(CdmError):
    """A file could not be parsed, or declares an unsupported format version."""


class DimensionError(ValidationError):
    """Matrix shapes disagree with each other or with declared id lists."""


class NumericalError(CdmError):
    """A numerical routine produced NaN/Inf or otherwise lost its footing."""


class DegenerateDataError(CdmError):
    """The data admits no meaningful answer (e.g. zero expected disagreement)."""
