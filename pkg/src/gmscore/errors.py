"""Exception hierarchy shared by every gmscore module."""


class GMScoreError(Exception):
    """Base class for all errors raised by gmscore."""


class FormatError(GMScoreError, ValueError):
    """Input file is structurally malformed (bad magic, truncated, ragged)."""


class EmptyInput(GMScoreError, ValueError):
    """Input contains no usable samples or counts."""


class RangeError(GMScoreError, ValueError):
    """A value lies outside its permitted range."""


class PairingError(GMScoreError, ValueError):
    """Two inputs that must align sample-for-sample do not."""


class NormalizationError(GMScoreError, ValueError):
    """A probability row does not sum to one."""

    def __init__(self, row, total, tol):
        self.row = row
        self.total = total
        super().__init__(f"row {row} sums to {total:.6g}, expected 1 +/- {tol:g}")


class ShapeError(GMScoreError, ValueError):
    """Array dimensions are inconsistent with the model or each other."""


class IntractableError(GMScoreError, ValueError):
    """Exact enumeration requested on a model too large to enumerate."""


class ConfigError(GMScoreError, ValueError):
    """Invalid configuration value or option."""


class DegenerateData(GMScoreError, ValueError):
    """Data cannot support the requested fit (e.g. a single class)."""
