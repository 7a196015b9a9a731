"""One-message session agreement.

The proposer picks the lowest fresh key block and a random historical
pulse, derives the session key, and sends a proposal authenticated with the
group's reserved block.  Each acceptor checks the proposal against its own
ledger and pulse history and derives the same key.  Any number of acceptors
may process the same proposal, which gives multi-party keys for free.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Any, Mapping, Optional, Sequence, Union

from .beacon.chain import EntropySource, draw_bytes
from .beacon.store import DEFAULT_MIN_AGE, PulseStore, select_historical
from .errors import (
    BadGroupId,
    BadMac,
    BKDError,
    BlockNotFresh,
    FieldOutOfRange,
    GroupMismatch,
    MalformedDocument,
    NotFound,
    PulseBindingMismatch,
    ReplayedBlock,
    UnknownPulse,
)
from .kdf import SessionKey, SuiteId, derive_session, mac_compute, mac_verify
from .ledger import Ledger

PROTO = "bkd-agree-1"
NONCE_LEN = 16


@dataclass(frozen=True)
class SessionProposal:
    """Authenticated proposal.

    Fields are kept as received so that a tampered proposal can still be
    run through MAC verification and rejected there; ``suite_id`` is only
    converted to :class:`SuiteId` after the tag checks out.
    """

    group_id: str
    suite_id: Union[SuiteId, str]
    block_index: int
    pulse_index: int
    pulse_chain_hash: bytes
    nonce: bytes
    tag: bytes = b""
    proto: str = PROTO

    def transcript(self) -> bytes:
        return transcript_canonical(self)

    def to_json(self) -> dict[str, Any]:
        return {
            "proto": self.proto,
            "groupId": self.group_id,
            "suiteId": _suite_name(self.suite_id),
            "blockIndex": self.block_index,
            "pulseIndex": self.pulse_index,
            "pulseChainHash": self.pulse_chain_hash.hex(),
            "nonce": self.nonce.hex(),
            "tag": self.tag.hex(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "SessionProposal":
        try:
            p = cls(
                proto=obj["proto"],
                group_id=obj["groupId"],
                suite_id=obj["suiteId"],
                block_index=obj["blockIndex"],
                pulse_index=obj["pulseIndex"],
                pulse_chain_hash=bytes.fromhex(obj["pulseChainHash"]),
                nonce=bytes.fromhex(obj["nonce"]),
                tag=bytes.fromhex(obj["tag"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDocument(f"bad proposal: {exc}") from exc
        if not all(isinstance(v, str) for v in (p.proto, p.group_id, p.suite_id)) \
                or type(p.block_index) is not int or type(p.pulse_index) is not int:
            raise MalformedDocument("bad proposal: wrong field types")
        return p

    @classmethod
    def loads(cls, text: str) -> "SessionProposal":
        try:
            obj = json.loads(text)
        except ValueError as exc:
            raise MalformedDocument(f"proposal is not JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise MalformedDocument("proposal must be a JSON object")
        return cls.from_json(obj)


@dataclass(frozen=True)
class AgreementOutcome:
    session_key: SessionKey
    proposal: SessionProposal


@dataclass(frozen=True)
class MemberResult:
    member: int
    outcome: Optional[AgreementOutcome] = None
    error: Optional[BKDError] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _suite_name(suite: Union[SuiteId, str]) -> str:
    return suite.value if isinstance(suite, SuiteId) else suite


def transcript_canonical(p: SessionProposal) -> bytes:
    """``bkd-agree-1|group|suite|block|pulse|hex(chain_hash)|hex(nonce)``; the tag is excluded."""
    if not isinstance(p.group_id, str) or "|" in p.group_id:
        raise BadGroupId(f"group id {p.group_id!r} may not contain '|'")
    suite = _suite_name(p.suite_id)
    if "|" in suite:
        raise FieldOutOfRange("suite name may not contain '|'")
    for name in ("block_index", "pulse_index"):
        v = getattr(p, name)
        if type(v) is not int or v < 0:
            raise FieldOutOfRange(f"{name} must be a non-negative integer")
    text = "|".join([
        PROTO, p.group_id, suite, str(p.block_index), str(p.pulse_index),
        bytes(p.pulse_chain_hash).hex(), bytes(p.nonce).hex(),
    ])
    return text.encode("utf-8")


def propose_session(
    ledger: Ledger,
    store: PulseStore,
    rng: EntropySource,
    suite_id: Union[SuiteId, str] = SuiteId.AES_COMPOSE_V1,
    min_age: int = DEFAULT_MIN_AGE,
) -> tuple[SessionProposal, AgreementOutcome]:
    """Build a proposal and consume the scheduled block in ``ledger``."""
    suite_id = SuiteId(suite_id)
    block_index = ledger.next_fresh()
    pulse = select_historical(store, rng, min_age)
    key = derive_session(suite_id, ledger.block(block_index), pulse)
    unsigned = SessionProposal(
        group_id=ledger.group_id,
        suite_id=suite_id,
        block_index=block_index,
        pulse_index=pulse.index,
        pulse_chain_hash=pulse.chain_hash,
        nonce=draw_bytes(rng, NONCE_LEN),
    )
    proposal = replace(unsigned, tag=mac_compute(ledger.auth_block, transcript_canonical(unsigned)))
    ledger.mark_used(block_index, pulse.index, pulse.chain_hash, suite_id)
    return proposal, AgreementOutcome(key, proposal)


def accept_session(ledger: Ledger, store: PulseStore, proposal: SessionProposal) -> AgreementOutcome:
    """Verify ``proposal`` and derive the session key; the ledger is untouched on rejection.

    The tag is checked before anything else is interpreted, so every
    modification of an authenticated field surfaces as BadMac.
    """
    if proposal.proto != PROTO:
        raise MalformedDocument(f"unknown protocol {proposal.proto!r}")
    if len(proposal.tag) != 32:
        raise BadMac("tag must be 32 bytes")
    try:
        transcript = transcript_canonical(proposal)
    except BKDError as exc:
        raise BadMac(f"proposal cannot be authenticated: {exc}") from exc
    if not mac_verify(ledger.auth_block, transcript, proposal.tag):
        raise BadMac("proposal tag does not verify under the group key")
    if proposal.group_id != ledger.group_id:
        raise GroupMismatch(f"proposal for {proposal.group_id!r}, ledger is {ledger.group_id!r}")
    try:
        suite_id = SuiteId(proposal.suite_id)
    except ValueError as exc:
        raise MalformedDocument(f"unknown suite {proposal.suite_id!r}") from exc

    try:
        block = ledger.check_usable(proposal.block_index)
    except BlockNotFresh as exc:
        raise ReplayedBlock(f"block {proposal.block_index} already consumed") from exc
    try:
        pulse = store.get(proposal.pulse_index)
    except NotFound as exc:
        raise UnknownPulse(f"no local pulse {proposal.pulse_index}") from exc
    if not pulse.is_consistent() or pulse.recompute_hash() != proposal.pulse_chain_hash:
        raise PulseBindingMismatch(
            f"local pulse {pulse.index} does not hash to the proposal's pulse_chain_hash"
        )

    key = derive_session(suite_id, block, pulse)
    ledger.mark_used(block.index, pulse.index, pulse.chain_hash, suite_id)
    return AgreementOutcome(key, proposal)


def group_accept(
    ledgers: Sequence[Ledger], stores: Sequence[PulseStore], proposal: SessionProposal
) -> list[MemberResult]:
    """Run :func:`accept_session` for every member; failures are reported per member."""
    if len(ledgers) != len(stores):
        raise ValueError("need exactly one pulse store per ledger")
    results = []
    for k, (ledger, store) in enumerate(zip(ledgers, stores)):
        try:
            results.append(MemberResult(k, outcome=accept_session(ledger, store, proposal)))
        except BKDError as exc:
            results.append(MemberResult(k, error=exc))
    return results


def agreed_key(results: Sequence[MemberResult]) -> bytes:
    """The single key shared by all members; raises if any member failed or keys differ."""
    failed = [r for r in results if not r.ok]
    if failed:
        detail = ", ".join(f"member {r.member}: {r.error.name}" for r in failed)
        raise ValueError(f"group agreement incomplete ({detail})")
    keys = {r.outcome.session_key.data for r in results}
    if len(keys) != 1:
        raise ValueError("group members derived different session keys")
    return keys.pop()
