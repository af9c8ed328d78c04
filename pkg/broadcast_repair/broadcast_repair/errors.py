from __future__ import annotations

from typing import Sequence


class BroadcastRepairError(Exception):
    """Base class for every error raised by the toolkit."""

    exit_code = 1


class InvalidInputError(BroadcastRepairError, ValueError):
    exit_code = 2


class FieldError(InvalidInputError):
    pass


class FieldZeroDivisionError(FieldError, ZeroDivisionError):
    pass


class InvalidParameters(InvalidInputError):
    def __init__(self, violations: Sequence[object]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid parameters")


class InvalidInstance(InvalidInputError):
    def __init__(self, violations: Sequence[object]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations) or "invalid instance")


class RoundOutOfRange(InvalidInputError):
    pass


class TrivialCaseError(InvalidInputError):
    pass


class DivisibilityError(InvalidInputError):
    pass


class FieldTooSmallError(InvalidInputError):
    pass


class CutPreconditionError(InvalidInputError):
    pass


class InfeasibleTradeoffError(InvalidInputError):
    pass


class VerificationError(BroadcastRepairError):
    exit_code = 1


class GenericCodeError(VerificationError):
    pass


class DecodeFailure(VerificationError):
    pass


class DominanceViolation(VerificationError):
    pass


class CapExceededError(BroadcastRepairError):
    exit_code = 3

    def __init__(self, what: str, count: int, cap: int):
        self.what = what
        self.count = count
        self.cap = cap
        super().__init__(f"{what}: {count} exceeds the configured cap of {cap}")
