"""Exception hierarchy.

Every error carries a stable ``exit_code`` used by the command-line tool.
Codes 3 and 4 are reserved for ``bkd status`` verdicts and never used here.
"""

from __future__ import annotations


class BKDError(Exception):
    exit_code = 1

    @property
    def name(self) -> str:
        return type(self).__name__


# key material
class SecretTooShort(BKDError):
    exit_code = 10


class SecretNotAligned(BKDError):
    exit_code = 11


class BlockNotFresh(BKDError):
    exit_code = 12


class NotAuthBlock(BKDError):
    exit_code = 13


class EmptyTranscript(BKDError):
    exit_code = 14


class BadTagLength(BKDError):
    exit_code = 15


# beacon
class PulseIntegrity(BKDError):
    exit_code = 20


class FieldOutOfRange(BKDError):
    exit_code = 21


class EntropyUnavailable(BKDError):
    exit_code = 22


class TimestampRegression(BKDError):
    exit_code = 23


class EmptyChain(BKDError):
    exit_code = 24


class HistoryTooShort(BKDError):
    exit_code = 25


class NotFound(BKDError):
    exit_code = 26


class Unreachable(BKDError):
    exit_code = 27


class ChainInvalid(BKDError):
    """A pulse sequence failed :func:`bkd.beacon.verify_chain`."""

    exit_code = 28


# ledger
class BadGroupId(BKDError):
    exit_code = 30


class Exhausted(BKDError):
    exit_code = 31


class UnknownBlock(BKDError):
    exit_code = 32


class AuthBlockForbidden(BKDError):
    exit_code = 33


class BadThreshold(BKDError):
    exit_code = 34


class IntegrityFailure(BKDError):
    exit_code = 35


class UnsupportedVersion(BKDError):
    exit_code = 36


class MalformedDocument(BKDError):
    exit_code = 37


# agreement
class GroupMismatch(BKDError):
    exit_code = 40


class BadMac(BKDError):
    exit_code = 41


class ReplayedBlock(BKDError):
    exit_code = 42


class UnknownPulse(BKDError):
    exit_code = 43


class PulseBindingMismatch(BKDError):
    exit_code = 44


def exit_codes() -> dict[str, int]:
    """Map of error name to exit code for every concrete error class."""
    out = {}
    stack = list(BKDError.__subclasses__())
    while stack:
        cls = stack.pop()
        out[cls.__name__] = cls.exit_code
        stack.extend(cls.__subclasses__())
    return dict(sorted(out.items(), key=lambda kv: kv[1]))
