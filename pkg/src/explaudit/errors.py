"""Semantic exception hierarchy.

Public operations never raise bare ValueError/RuntimeError for contract
violations; they raise one of these so callers (and the CLI) can map
failures to exit codes and messages that name the violated gate.
"""


class ExplauditError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(ExplauditError, ValueError):
    """Operands declare different ambient dimensions."""


class ParameterOutOfRange(ExplauditError, ValueError):
    """A parameter violates a stated admissibility gate (the message names it)."""


class ConfigInvalid(ExplauditError, ValueError):
    """An experiment config failed validation; message names field and gate."""


class RegionMassZero(ExplauditError):
    """Rejection sampling exhausted its attempt budget without hitting the region."""


class ZeroMassRectangle(ExplauditError):
    """A rectangle with zero probability mass cannot be split."""


class ZeroMassBall(ExplauditError):
    """A ball with zero probability mass cannot be conditionally sampled."""


class InsufficientData(ExplauditError):
    """The audit sample is not larger than the anchor-set size m."""


class InsufficientCoverage(ExplauditError):
    """No anchor's region collected the k points required for validation."""


class InconsistentLabels(ExplauditError):
    """Two points in one sub-rectangle carry different labels."""


class OutsideLabelViolation(ExplauditError):
    """A point outside every partition rectangle carries a label other than +1."""


class OutsideSupportError(ExplauditError):
    """A query point lies outside the partition's (clipped) support box."""


class OracleUnavailable(ExplauditError):
    """An exact-loss oracle was required but not supplied."""


class RecordUnreadable(ExplauditError):
    """A persisted experiment record could not be parsed."""
