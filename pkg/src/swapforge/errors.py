"""Exception types shared across the toolkit."""


class SwapforgeError(Exception):
    pass


class ValidationError(SwapforgeError, ValueError):
    """An invariant on a domain object was violated."""


class ShapeMismatchError(SwapforgeError, ValueError):
    """Two arrays that must share a shape do not."""


class DecodeError(SwapforgeError, IOError):
    """A clip file or directory could not be decoded."""


class ArityError(SwapforgeError, ValueError):
    """Too few elements (frames, identities, ...) for the operation."""


class PairingError(SwapforgeError, ValueError):
    """Unpaired-data construction failed (identity mismatch or too few frames)."""


class DomainError(SwapforgeError, ValueError):
    """A scalar argument is outside its allowed domain."""


class DegenerateStyleError(SwapforgeError, ValueError):
    """Masked-region statistics are degenerate (zero std)."""


class ExtractionError(SwapforgeError, RuntimeError):
    """A landmark / feature provider failed."""


class IdentityLookupError(SwapforgeError, KeyError):
    """Unknown identity requested from a trained model."""


class LeakageError(SwapforgeError, RuntimeError):
    """Train and test sets share identities."""


class SubmissionError(SwapforgeError, ValueError):
    """Hidden-test submission incomplete or malformed."""


class InsufficientRatingsError(SwapforgeError, ValueError):
    """A candidate clip has fewer ratings than the study requires."""


class DetectorError(SwapforgeError, RuntimeError):
    """A detector returned an invalid score."""
