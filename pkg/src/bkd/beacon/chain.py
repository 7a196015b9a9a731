"""Pulse generation and hash-chain verification."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

from ..errors import EmptyChain, EntropyUnavailable, FieldOutOfRange, TimestampRegression
from ..pulse import RAND_OUT_LEN, ZERO_HASH, Pulse


class EntropySource(Protocol):
    def randbytes(self, n: int) -> bytes: ...

    def randrange(self, stop: int) -> int: ...


def draw_bytes(rng: EntropySource, n: int) -> bytes:
    try:
        out = rng.randbytes(n)
    except Exception as exc:
        raise EntropyUnavailable(f"entropy source failed: {exc}") from exc
    if not isinstance(out, (bytes, bytearray)) or len(out) != n:
        raise EntropyUnavailable(f"entropy source did not yield {n} bytes")
    return bytes(out)


def genesis_pulse(rng: EntropySource, timestamp: int) -> Pulse:
    return Pulse.create(0, timestamp, draw_bytes(rng, RAND_OUT_LEN), ZERO_HASH)


def next_pulse(prev: Pulse, rng: EntropySource, timestamp: int) -> Pulse:
    prev.check()
    if timestamp < prev.timestamp:
        raise TimestampRegression(
            f"timestamp {timestamp} precedes previous pulse timestamp {prev.timestamp}"
        )
    return Pulse.create(
        prev.index + 1, timestamp, draw_bytes(rng, RAND_OUT_LEN), prev.recompute_hash()
    )


class ChainFault(str, enum.Enum):
    PREV_HASH_MISMATCH = "PrevHashMismatch"
    CHAIN_HASH_MISMATCH = "ChainHashMismatch"
    INDEX_GAP = "IndexGap"
    TIMESTAMP_NON_MONOTONE = "TimestampNonMonotone"


@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    first_bad_index: Optional[int] = None
    reason: Optional[ChainFault] = None

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        return f"{self.reason.value} at index {self.first_bad_index}"


def _recompute(p: Pulse) -> Optional[bytes]:
    try:
        return p.recompute_hash()
    except FieldOutOfRange:
        return None


def verify_chain(pulses: Sequence[Pulse]) -> ChainVerdict:
    """Check hashes, linkage, index contiguity and timestamp order.

    The list may start at any index; it is only required to link back to the
    all-zero hash when it starts at the genesis pulse.  On failure the
    verdict names the lowest failing pulse index.
    """
    if not pulses:
        raise EmptyChain("cannot verify an empty chain")

    def bad(p: Pulse, reason: ChainFault) -> ChainVerdict:
        return ChainVerdict(False, p.index, reason)

    prev: Optional[Pulse] = None
    prev_digest = b""
    for p in pulses:
        digest = _recompute(p)
        if digest is None or digest != p.chain_hash:
            # The index field itself may be the tampered one; report where it should be.
            if prev is not None:
                where = prev.index + 1
            elif p.prev_hash == ZERO_HASH:
                where = 0
            else:
                where = p.index
            return ChainVerdict(False, where, ChainFault.CHAIN_HASH_MISMATCH)
        if prev is None:
            if p.index == 0 and p.prev_hash != ZERO_HASH:
                return bad(p, ChainFault.PREV_HASH_MISMATCH)
        else:
            if p.index != prev.index + 1:
                return bad(p, ChainFault.INDEX_GAP)
            if p.timestamp < prev.timestamp:
                return bad(p, ChainFault.TIMESTAMP_NON_MONOTONE)
            if p.prev_hash != prev_digest:
                return bad(p, ChainFault.PREV_HASH_MISMATCH)
        prev, prev_digest = p, digest
    return ChainVerdict(True)
