"""Exception hierarchy shared by all pipeline stages."""


class StegoError(Exception):
    """Base class for recoverable pipeline errors."""


class PayloadTooLong(StegoError):
    pass


class TruncatedFrame(StegoError):
    """Declared frame length exceeds the available bits (desynchronization)."""


class TokenOutOfRange(StegoError):
    pass


class TokenNotInSupport(StegoError):
    """Observed token was truncated away by top-k (desynchronization)."""


class DegenerateCodebook(StegoError):
    pass


class IndexOutOfRange(StegoError):
    pass


class ShapeMismatch(StegoError):
    pass


class NonFiniteLoss(StegoError):
    """Optimization diverged; signals a bad configuration."""


class RankOverflow(StegoError):
    """Correct token not representable under the proximity-rank budget."""


class MalformedEcc(StegoError):
    """Error-correction bitstream shorter than one full record or invalid."""


class BudgetExceeded(StegoError):
    """Payload longer than the realized channel capacity."""

    def __init__(self, message: str, realized_bits: int | None = None):
        super().__init__(message)
        self.realized_bits = realized_bits


class CapacityExceeded(StegoError):
    pass


class MalformedInput(StegoError):
    """Unparseable file or config (CLI exit code 2)."""
