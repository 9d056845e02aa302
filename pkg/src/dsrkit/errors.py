"""Exception types shared across the toolkit."""


class DsrkitError(Exception):
    """Base class for all toolkit errors."""


class FormatError(DsrkitError):
    """A file is structurally malformed (bad header, truncated payload)."""


class UnsupportedFormatError(DsrkitError):
    """A file parsed fine but uses an encoding we refuse (stereo, non-16-bit)."""


class EmptyInputError(DsrkitError):
    """Input signal shorter than the minimum the operation needs."""


class ParameterError(DsrkitError):
    """A scalar argument is outside its documented range."""


class ShapeError(DsrkitError):
    """Array dimensions disagree with each other or with a config."""


class NumericError(DsrkitError):
    """A computation hit a non-finite or degenerate value (zero vector, NaN grad)."""


class SamplingError(DsrkitError):
    """Triplet construction is impossible (e.g. empty cross-speaker pool)."""


class InsufficientBatchError(DsrkitError):
    """Batch does not meet the minimum speakers/utterances the loss needs."""


class InfeasibleAlignmentError(DsrkitError):
    """Target sequence cannot be aligned within the given number of frames."""


class InsufficientTrialsError(DsrkitError):
    """Metric needs both genuine and impostor trials."""


class UndefinedMetricError(DsrkitError):
    """Metric is undefined for this input (e.g. WER with empty reference)."""


class ValidationError(DsrkitError):
    """Data violates a declared invariant (score range, log-normalization)."""


class ManifestError(DsrkitError):
    """Manifest file is malformed; message carries the line number."""
