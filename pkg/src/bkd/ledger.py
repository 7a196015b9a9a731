"""Key-block lifecycle ledger.

Policy: every derivation block is used for exactly one session, blocks are
scheduled lowest-index-first so all parties converge on the same block
without negotiation, and block 0 is reserved for message authentication.

On disk a ledger is a compact JSON document, a newline, and
``tag=<64 hex>`` where the tag is the proposal MAC over the document bytes.
The file holds raw key material and is *not* encrypted; protect it with
file-system permissions.
"""

from __future__ import annotations

import copy
import enum
import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional, Union

from .errors import (
    AuthBlockForbidden,
    BadGroupId,
    BadThreshold,
    BKDError,
    BlockNotFresh,
    Exhausted,
    IntegrityFailure,
    MalformedDocument,
    UnknownBlock,
    UnsupportedVersion,
)
from .kdf import (
    BlockState,
    KeyBlock,
    KeyBlockSet,
    MasterSecret,
    SuiteId,
    mac_compute,
    mac_verify,
    partition_master,
)

LEDGER_VERSION = "bkd-ledger-1"
DEFAULT_REKEY_THRESHOLD = 2
MAX_GROUP_ID = 64
_TAG_SEP = b"\ntag="
_TAG_RE = re.compile(rb"[0-9a-f]{64}")


def check_group_id(group_id: Any) -> str:
    if not isinstance(group_id, str) or not group_id:
        raise BadGroupId("group id must be a non-empty string")
    if len(group_id) > MAX_GROUP_ID:
        raise BadGroupId(f"group id longer than {MAX_GROUP_ID} characters")
    if not group_id.isascii() or not group_id.isprintable() or "|" in group_id:
        raise BadGroupId(f"group id {group_id!r} must be printable ASCII without '|'")
    return group_id


@dataclass(frozen=True)
class UsageEntry:
    block_index: int
    pulse_index: int
    pulse_chain_hash: bytes
    suite_id: SuiteId


class RotationVerdict(str, enum.Enum):
    HEALTHY = "Healthy"
    REKEY_SOON = "RekeySoon"
    EXHAUSTED = "Exhausted"


@dataclass(frozen=True)
class RotationStatus:
    fresh_remaining: int
    threshold: int
    verdict: RotationVerdict


@dataclass
class Ledger:
    group_id: str
    blocks: KeyBlockSet
    usage_log: list[UsageEntry] = field(default_factory=list)

    @classmethod
    def create(cls, secret: Union[MasterSecret, bytes], group_id: str) -> "Ledger":
        return cls(check_group_id(group_id), partition_master(secret))

    @property
    def auth_block(self) -> KeyBlock:
        return self.blocks.auth_block

    def block(self, index: int) -> KeyBlock:
        if index == 0:
            return self.blocks.auth_block
        derivation = self.blocks.derivation_blocks
        if type(index) is not int or not 1 <= index <= len(derivation):
            raise UnknownBlock(f"no derivation block {index}")
        return derivation[index - 1]

    def counts(self) -> dict[BlockState, int]:
        out = {s: 0 for s in BlockState}
        for b in self.blocks.derivation_blocks:
            out[b.state] += 1
        return out

    def next_fresh(self) -> int:
        for b in self.blocks.derivation_blocks:
            if b.state is BlockState.FRESH:
                return b.index
        raise Exhausted(f"ledger {self.group_id!r} has no fresh blocks; rekey required")

    def _replace_block(self, new: KeyBlock) -> None:
        blocks = list(self.blocks.derivation_blocks)
        blocks[new.index - 1] = new
        self.blocks = KeyBlockSet(self.blocks.auth_block, tuple(blocks))

    def check_usable(self, block_index: int) -> KeyBlock:
        """Return the block if it may be consumed now, else raise."""
        if block_index == 0:
            raise AuthBlockForbidden("block 0 is reserved for authentication")
        block = self.block(block_index)
        if block.state is not BlockState.FRESH:
            raise BlockNotFresh(f"block {block_index} is {block.state.value}")
        return block

    def mark_used(
        self, block_index: int, pulse_index: int, pulse_chain_hash: bytes, suite_id: SuiteId
    ) -> "Ledger":
        block = self.check_usable(block_index)
        entry = UsageEntry(block_index, pulse_index, bytes(pulse_chain_hash), SuiteId(suite_id))
        self._replace_block(block.advance(BlockState.USED))
        self.usage_log.append(entry)
        return self

    def retire(self, block_index: int) -> "Ledger":
        if block_index == 0:
            raise AuthBlockForbidden("block 0 is reserved for authentication")
        self._replace_block(self.block(block_index).advance(BlockState.RETIRED))
        return self

    def rotation_status(self, threshold: int = DEFAULT_REKEY_THRESHOLD) -> RotationStatus:
        if type(threshold) is not int or threshold < 1:
            raise BadThreshold(f"threshold must be >= 1, got {threshold!r}")
        fresh = self.counts()[BlockState.FRESH]
        if fresh == 0:
            verdict = RotationVerdict.EXHAUSTED
        elif fresh <= threshold:
            verdict = RotationVerdict.REKEY_SOON
        else:
            verdict = RotationVerdict.HEALTHY
        return RotationStatus(fresh, threshold, verdict)

    def clone(self) -> "Ledger":
        return copy.deepcopy(self)

    # persistence

    def to_document(self) -> dict[str, Any]:
        return {
            "version": LEDGER_VERSION,
            "groupId": self.group_id,
            "blocks": [
                {"index": b.index, "state": b.state.value, "hexBytes": b.data.hex()}
                for b in self.blocks
            ],
            "usageLog": [
                {
                    "blockIndex": e.block_index,
                    "pulseIndex": e.pulse_index,
                    "pulseChainHash": e.pulse_chain_hash.hex(),
                    "suiteId": e.suite_id.value,
                }
                for e in self.usage_log
            ],
        }

    @classmethod
    def from_document(cls, doc: Any) -> "Ledger":
        if not isinstance(doc, dict):
            raise MalformedDocument("ledger document must be a JSON object")
        if doc.get("version") != LEDGER_VERSION:
            raise UnsupportedVersion(f"unsupported ledger version {doc.get('version')!r}")
        try:
            group_id = check_group_id(doc["groupId"])
            blocks = [
                KeyBlock(b["index"], bytes.fromhex(b["hexBytes"]), BlockState(b["state"]))
                for b in doc["blocks"]
            ]
            usage = [
                UsageEntry(
                    e["blockIndex"],
                    e["pulseIndex"],
                    bytes.fromhex(e["pulseChainHash"]),
                    SuiteId(e["suiteId"]),
                )
                for e in doc["usageLog"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad ledger document: {exc}") from exc
        if len(blocks) < 2 or [b.index for b in blocks] != list(range(len(blocks))):
            raise MalformedDocument("blocks must be indexed 0..n contiguously")
        ledger = cls(group_id, KeyBlockSet(blocks[0], tuple(blocks[1:])), usage)
        ledger._check_invariants()
        return ledger

    def _check_invariants(self) -> None:
        seen = set()
        for e in self.usage_log:
            if e.block_index in seen:
                raise MalformedDocument(f"block {e.block_index} appears twice in usage log")
            seen.add(e.block_index)
            try:
                state = self.block(e.block_index).state
            except UnknownBlock as exc:
                raise MalformedDocument(str(exc)) from exc
            if e.block_index == 0 or state is BlockState.FRESH:
                raise MalformedDocument(f"usage entry for block {e.block_index} is inconsistent")
        for b in self.blocks.derivation_blocks:
            if b.state is not BlockState.FRESH and b.index not in seen:
                raise MalformedDocument(f"block {b.index} is {b.state.value} with no usage entry")

    def save(self, auth_key: Optional[KeyBlock] = None) -> bytes:
        doc = json.dumps(self.to_document(), separators=(",", ":")).encode("utf-8")
        tag = mac_compute(auth_key or self.auth_block, doc)
        return doc + _TAG_SEP + tag.hex().encode("ascii")

    @classmethod
    def load(cls, data: bytes, auth_key: Optional[KeyBlock] = None) -> "Ledger":
        """Verify the trailing tag, then parse.

        Without ``auth_key`` the key is read from the document itself, which
        catches corruption but not a deliberate forgery by someone who can
        rewrite the whole file.
        """
        doc, sep, tag_hex = bytes(data).rpartition(_TAG_SEP)
        if not sep or not _TAG_RE.fullmatch(tag_hex):
            raise IntegrityFailure("ledger file has no valid integrity tag")
        tag = bytes.fromhex(tag_hex.decode("ascii"))
        if auth_key is None:
            auth_key = _peek_auth_block(doc)
        if not mac_verify(auth_key, doc, tag):
            raise IntegrityFailure("ledger integrity tag mismatch")
        try:
            parsed = json.loads(doc.decode("utf-8"))
        except (UnicodeDecodeError, ValueError) as exc:
            raise MalformedDocument(f"ledger is not valid JSON: {exc}") from exc
        ledger = cls.from_document(parsed)
        if ledger.auth_block.data != auth_key.data:
            raise IntegrityFailure("ledger was not created from this authentication key")
        return ledger


def _peek_auth_block(doc: bytes) -> KeyBlock:
    try:
        blocks = json.loads(doc.decode("utf-8"))["blocks"]
        first = blocks[0]
        if first["index"] != 0:
            raise ValueError("block 0 missing")
        return KeyBlock(0, bytes.fromhex(first["hexBytes"]))
    except (BKDError, UnicodeDecodeError, ValueError, KeyError, TypeError, IndexError) as exc:
        raise IntegrityFailure("cannot locate authentication block; file corrupted") from exc


# Functional aliases mirroring the operation names.

def init_ledger(secret: Union[MasterSecret, bytes], group_id: str) -> Ledger:
    return Ledger.create(secret, group_id)


def next_fresh(ledger: Ledger) -> int:
    return ledger.next_fresh()


def mark_used(
    ledger: Ledger, block_index: int, pulse_index: int, pulse_chain_hash: bytes, suite_id: SuiteId
) -> Ledger:
    return ledger.mark_used(block_index, pulse_index, pulse_chain_hash, suite_id)


def rotation_status(ledger: Ledger, threshold: int = DEFAULT_REKEY_THRESHOLD) -> RotationStatus:
    return ledger.rotation_status(threshold)


def save_ledger(ledger: Ledger, auth_key: Optional[KeyBlock] = None) -> bytes:
    return ledger.save(auth_key)


def load_ledger(data: bytes, auth_key: Optional[KeyBlock] = None) -> Ledger:
    return Ledger.load(data, auth_key)
