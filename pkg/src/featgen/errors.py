"""Exception types shared across the pipeline."""


class FeatgenError(Exception):
    """Base class for all library errors."""


class MissingTarget(FeatgenError):
    """The named target column is absent from the CSV header."""


class DuplicateHeader(FeatgenError):
    """The CSV header contains a repeated column name."""


class EmptyAfterCleaning(FeatgenError):
    """Fewer than two rows survive ingestion cleaning."""


class LengthMismatch(FeatgenError):
    """Binary operands have different lengths."""


class ExprSyntaxError(FeatgenError):
    """Malformed expression string; carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownBase(FeatgenError):
    """An expression leaf is not a known base feature."""


class MissingContext(FeatgenError):
    """A role-specific state encoding is missing a required input."""


class NoValidAction(FeatgenError):
    """The action mask leaves nothing to select."""


class InsufficientSamples(FeatgenError):
    """Replay buffer holds fewer transitions than the batch size."""


class TooFewSamples(FeatgenError):
    """Not enough rows for cross-validation."""


class DegenerateTarget(FeatgenError):
    """Target carries no signal (constant, or single-class)."""


class SingleClass(FeatgenError):
    """ROC-AUC needs both classes present."""


class EndpointUnreachable(FeatgenError):
    """Explanation endpoint failed after all retries."""


class AuthFailure(FeatgenError):
    """Explanation endpoint rejected the credentials."""
