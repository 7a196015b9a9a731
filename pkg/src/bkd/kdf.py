"""Master-secret partitioning, the two session-key derivation suites, and the proposal MAC.

A session key is ``F(M_i, P_i)``: a 256-bit block of the pre-shared secret
combined with one beacon pulse.

``AES_COMPOSE_V1``
    XOR-fold the 512-bit pulse output into two 128-bit halves, mask each with
    a distinct counter block, encrypt both under AES-256 keyed by the block
    and concatenate the two ciphertexts.

``SHA3_DERIVE_V1``
    ``SHA3-256("BKD-v1-derive" || block || be64(pulse.index) || pulse.rand_out)``.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
from dataclasses import dataclass, field, replace

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .errors import (
    BadTagLength,
    BlockNotFresh,
    EmptyTranscript,
    NotAuthBlock,
    SecretNotAligned,
    SecretTooShort,
)
from .pulse import Pulse

BLOCK_LEN = 32
AES_BLOCK_LEN = 16
DERIVE_DOMAIN = b"BKD-v1-derive"
MAC_DOMAIN = b"BKD-v1-mac"


class BlockState(str, enum.Enum):
    FRESH = "Fresh"
    USED = "Used"
    RETIRED = "Retired"


_NEXT_STATE = {BlockState.FRESH: BlockState.USED, BlockState.USED: BlockState.RETIRED}


class SuiteId(str, enum.Enum):
    AES_COMPOSE_V1 = "AES_COMPOSE_V1"
    SHA3_DERIVE_V1 = "SHA3_DERIVE_V1"


@dataclass(frozen=True)
class MasterSecret:
    data: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if len(self.data) < 2 * BLOCK_LEN:
            raise SecretTooShort(
                f"master secret is {len(self.data)} bytes; need at least {2 * BLOCK_LEN}"
            )
        if len(self.data) % BLOCK_LEN:
            raise SecretNotAligned(
                f"master secret is {len(self.data)} bytes; not a multiple of {BLOCK_LEN}"
            )
        object.__setattr__(self, "data", bytes(self.data))

    def __len__(self) -> int:
        return len(self.data)


@dataclass(frozen=True)
class KeyBlock:
    index: int
    data: bytes = field(repr=False)
    state: BlockState = BlockState.FRESH

    def __post_init__(self) -> None:
        if len(self.data) != BLOCK_LEN:
            raise ValueError(f"key block must be {BLOCK_LEN} bytes, got {len(self.data)}")
        object.__setattr__(self, "state", BlockState(self.state))

    def advance(self, target: BlockState) -> "KeyBlock":
        """Return a copy moved one step along Fresh -> Used -> Retired."""
        if _NEXT_STATE.get(self.state) is not target:
            raise BlockNotFresh(
                f"block {self.index}: cannot move from {self.state.value} to {target.value}"
            )
        return replace(self, state=target)


@dataclass(frozen=True)
class KeyBlockSet:
    auth_block: KeyBlock
    derivation_blocks: tuple[KeyBlock, ...]

    def __iter__(self):
        yield self.auth_block
        yield from self.derivation_blocks

    def concat(self) -> bytes:
        return b"".join(b.data for b in self)


@dataclass(frozen=True)
class SessionKey:
    data: bytes = field(repr=False)
    suite_id: SuiteId
    block_index: int
    pulse_index: int
    pulse_chain_hash: bytes

    def fingerprint(self) -> str:
        return fingerprint(self.data)


def fingerprint(key: bytes) -> str:
    """First 8 hex characters of SHA3-256(key); safe to display."""
    return hashlib.sha3_256(key).hexdigest()[:8]


def partition_master(secret: MasterSecret | bytes) -> KeyBlockSet:
    if not isinstance(secret, MasterSecret):
        secret = MasterSecret(secret)
    raw = secret.data
    blocks = [
        KeyBlock(i, raw[off:off + BLOCK_LEN])
        for i, off in enumerate(range(0, len(raw), BLOCK_LEN))
    ]
    return KeyBlockSet(blocks[0], tuple(blocks[1:]))


def _require_derivable(block: KeyBlock, pulse: Pulse) -> None:
    if block.state is not BlockState.FRESH:
        raise BlockNotFresh(f"block {block.index} is {block.state.value}")
    pulse.check()


def counter_block(j: int) -> bytes:
    return bytes(AES_BLOCK_LEN - 1) + bytes([j])


def _xor(a: bytes, b: bytes) -> bytes:
    return bytes(x ^ y for x, y in zip(a, b))


def aes_compose(key: bytes, rand_out: bytes) -> bytes:
    """Raw AES_COMPOSE_V1 output for a 32-byte key and a 64-byte pulse value."""
    r1, r2, r3, r4 = (rand_out[k:k + AES_BLOCK_LEN] for k in range(0, 64, AES_BLOCK_LEN))
    plain = _xor(_xor(r1, r3), counter_block(1)) + _xor(_xor(r2, r4), counter_block(2))
    # ECB over exactly two independent blocks, i.e. two single-block encryptions.
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(plain) + enc.finalize()


def sha3_derive(key: bytes, pulse_index: int, rand_out: bytes) -> bytes:
    """Raw SHA3_DERIVE_V1 output."""
    return hashlib.sha3_256(
        DERIVE_DOMAIN + key + pulse_index.to_bytes(8, "big") + rand_out
    ).digest()


def derive_session_aes(block: KeyBlock, pulse: Pulse) -> SessionKey:
    _require_derivable(block, pulse)
    return SessionKey(
        aes_compose(block.data, pulse.rand_out),
        SuiteId.AES_COMPOSE_V1,
        block.index,
        pulse.index,
        pulse.chain_hash,
    )


def derive_session_sha3(block: KeyBlock, pulse: Pulse) -> SessionKey:
    _require_derivable(block, pulse)
    return SessionKey(
        sha3_derive(block.data, pulse.index, pulse.rand_out),
        SuiteId.SHA3_DERIVE_V1,
        block.index,
        pulse.index,
        pulse.chain_hash,
    )


SUITES = {
    SuiteId.AES_COMPOSE_V1: derive_session_aes,
    SuiteId.SHA3_DERIVE_V1: derive_session_sha3,
}


def derive_session(suite: SuiteId | str, block: KeyBlock, pulse: Pulse) -> SessionKey:
    return SUITES[SuiteId(suite)](block, pulse)


def mac_compute(auth_key: KeyBlock, transcript: bytes) -> bytes:
    # Prefix-keyed SHA3 is a sound MAC: no length extension on the sponge.
    if auth_key.index != 0:
        raise NotAuthBlock(f"block {auth_key.index} is not the authentication block")
    if not transcript:
        raise EmptyTranscript("transcript must be non-empty")
    return hashlib.sha3_256(MAC_DOMAIN + auth_key.data + bytes(transcript)).digest()


def mac_verify(auth_key: KeyBlock, transcript: bytes, tag: bytes) -> bool:
    if len(tag) != 32:
        raise BadTagLength(f"tag must be 32 bytes, got {len(tag)}")
    return hmac.compare_digest(mac_compute(auth_key, transcript), bytes(tag))
