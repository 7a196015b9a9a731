"""Beacon pulse value type and its canonical, hash-chained encoding."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Mapping

from .errors import FieldOutOfRange, MalformedDocument, PulseIntegrity

PULSE_VERSION = "bkd-1"
RAND_OUT_LEN = 64
HASH_LEN = 32
ZERO_HASH = bytes(HASH_LEN)
_U64 = 1 << 64


def _check_uint(name: str, value: Any) -> None:
    if type(value) is not int or not 0 <= value < _U64:
        raise FieldOutOfRange(f"{name} must be an unsigned 64-bit integer, got {value!r}")


def _check_bytes(name: str, value: Any, length: int) -> None:
    if not isinstance(value, (bytes, bytearray)) or len(value) != length:
        raise FieldOutOfRange(f"{name} must be {length} bytes")


def canonical_serialize(
    version: str, index: int, timestamp: int, rand_out: bytes, prev_hash: bytes
) -> bytes:
    """Hashing preimage of a pulse: ``bkd-1|index|timestamp|hex(rand)|hex(prev)``."""
    if version != PULSE_VERSION:
        raise FieldOutOfRange(f"unsupported pulse version {version!r}")
    _check_uint("index", index)
    _check_uint("timestamp", timestamp)
    _check_bytes("rand_out", rand_out, RAND_OUT_LEN)
    _check_bytes("prev_hash", prev_hash, HASH_LEN)
    text = f"{version}|{index}|{timestamp}|{bytes(rand_out).hex()}|{bytes(prev_hash).hex()}"
    return text.encode("utf-8")


def chain_hash(
    version: str, index: int, timestamp: int, rand_out: bytes, prev_hash: bytes
) -> bytes:
    return hashlib.sha3_256(
        canonical_serialize(version, index, timestamp, rand_out, prev_hash)
    ).digest()


@dataclass(frozen=True)
class Pulse:
    """One beacon broadcast.

    Construction does not validate; a tampered pulse must stay representable
    so that :func:`bkd.beacon.verify_chain` can report where it went wrong.
    Use :meth:`create` to build a pulse with a correct ``chain_hash``.
    """

    version: str
    index: int
    timestamp: int
    rand_out: bytes
    prev_hash: bytes
    chain_hash: bytes

    @classmethod
    def create(cls, index: int, timestamp: int, rand_out: bytes, prev_hash: bytes) -> "Pulse":
        rand_out, prev_hash = bytes(rand_out), bytes(prev_hash)
        digest = chain_hash(PULSE_VERSION, index, timestamp, rand_out, prev_hash)
        return cls(PULSE_VERSION, index, timestamp, rand_out, prev_hash, digest)

    def serialize(self) -> bytes:
        return canonical_serialize(
            self.version, self.index, self.timestamp, self.rand_out, self.prev_hash
        )

    def recompute_hash(self) -> bytes:
        """SHA3-256 of the canonical encoding; raises FieldOutOfRange on malformed fields."""
        return hashlib.sha3_256(self.serialize()).digest()

    def is_consistent(self) -> bool:
        try:
            return self.recompute_hash() == self.chain_hash
        except FieldOutOfRange:
            return False

    def check(self) -> "Pulse":
        if not self.is_consistent():
            raise PulseIntegrity(f"pulse {self.index!r}: chain_hash does not match its fields")
        return self

    def to_json(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "index": self.index,
            "timestamp": self.timestamp,
            "randOut": self.rand_out.hex(),
            "prevHash": self.prev_hash.hex(),
            "chainHash": self.chain_hash.hex(),
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "Pulse":
        """Parse the wire object. Structure is checked here, hash consistency is not."""
        try:
            pulse = cls(
                version=obj["version"],
                index=obj["index"],
                timestamp=obj["timestamp"],
                rand_out=bytes.fromhex(obj["randOut"]),
                prev_hash=bytes.fromhex(obj["prevHash"]),
                chain_hash=bytes.fromhex(obj["chainHash"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad pulse object: {exc}") from exc
        if not isinstance(pulse.version, str) or type(pulse.index) is not int \
                or type(pulse.timestamp) is not int or len(pulse.chain_hash) != HASH_LEN:
            raise MalformedDocument("bad pulse object: wrong field types")
        return pulse
