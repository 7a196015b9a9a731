"""Append-only pulse store and historical pulse selection."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterable, Iterator, Union

from ..errors import ChainInvalid, HistoryTooShort, MalformedDocument, NotFound, PulseIntegrity
from ..pulse import Pulse, ZERO_HASH
from .chain import EntropySource, genesis_pulse, next_pulse, verify_chain

DEFAULT_MIN_AGE = 10


class PulseStore:
    """Contiguous, hash-linked pulse history.

    Single appender, many readers: appends take a lock and publish a new
    tuple snapshot, so readers never see a half-written pulse.
    """

    def __init__(self, pulses: Iterable[Pulse] = ()):
        self._lock = threading.Lock()
        self._pulses: tuple[Pulse, ...] = ()
        for p in pulses:
            self.append(p)

    def __len__(self) -> int:
        return len(self._pulses)

    def __iter__(self) -> Iterator[Pulse]:
        return iter(self._pulses)

    @property
    def pulses(self) -> tuple[Pulse, ...]:
        return self._pulses

    @property
    def latest(self) -> int:
        """Index of the newest pulse, -1 when empty."""
        return len(self._pulses) - 1

    def last(self) -> Pulse:
        snap = self._pulses
        if not snap:
            raise NotFound("pulse store is empty")
        return snap[-1]

    def get(self, index: int) -> Pulse:
        snap = self._pulses
        if type(index) is not int or not 0 <= index < len(snap):
            raise NotFound(f"no pulse at index {index}")
        return snap[index]

    def range(self, start: int, stop: int) -> tuple[Pulse, ...]:
        """Pulses with start <= index <= stop."""
        snap = self._pulses
        if start < 0 or stop < start or stop >= len(snap):
            raise NotFound(f"range [{start}, {stop}] outside 0..{len(snap) - 1}")
        return snap[start:stop + 1]

    def append(self, pulse: Pulse) -> Pulse:
        with self._lock:
            snap = self._pulses
            if snap:
                verdict = verify_chain([snap[-1], pulse])
            elif pulse.index != 0 or pulse.prev_hash != ZERO_HASH:
                raise ChainInvalid("first pulse of a store must be the genesis pulse")
            else:
                verdict = verify_chain([pulse])
            if not verdict:
                raise ChainInvalid(f"refusing append: {verdict.describe()}")
            self._pulses = snap + (pulse,)
        return pulse

    def grow(self, rng: EntropySource, timestamp: int) -> Pulse:
        """Generate and append the next pulse."""
        with self._lock:
            snap = self._pulses
            pulse = next_pulse(snap[-1], rng, timestamp) if snap else genesis_pulse(rng, timestamp)
            self._pulses = snap + (pulse,)
        return pulse

    @classmethod
    def generate(cls, n: int, rng: EntropySource, start_time: int = 0, step: int = 1) -> "PulseStore":
        store = cls()
        for k in range(n):
            store.grow(rng, start_time + k * step)
        return store

    # JSON-lines export/import, ascending index.

    def to_jsonl(self) -> str:
        return "".join(json.dumps(p.to_json(), separators=(",", ":")) + "\n" for p in self._pulses)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "PulseStore":
        pulses = parse_jsonl(text)
        if pulses:
            verdict = verify_chain(pulses)
            if not verdict:
                raise ChainInvalid(f"chain file failed verification: {verdict.describe()}")
        return cls(pulses)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "PulseStore":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def parse_jsonl(text: str) -> list[Pulse]:
    """Parse exported pulses without checking the chain."""
    pulses = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"line {lineno}: {exc}") from exc
        pulses.append(Pulse.from_json(obj))
    return pulses


def select_historical(
    store: PulseStore, rng: EntropySource, min_age: int = DEFAULT_MIN_AGE
) -> Pulse:
    """Pick a pulse uniformly from all but the newest ``min_age`` pulses.

    Defends against a beacon that times a crafted pulse to coincide with a
    key update: recent pulses are never eligible.
    """
    if min_age < 1:
        raise ValueError("min_age must be >= 1")
    snap = store.pulses
    newest_eligible = len(snap) - 1 - min_age
    if newest_eligible < 0:
        raise HistoryTooShort(
            f"store holds {len(snap)} pulses; need more than min_age={min_age}"
        )
    pulse = snap[rng.randrange(newest_eligible + 1)]
    if not pulse.is_consistent():
        raise PulseIntegrity(f"stored pulse {pulse.index} failed its hash check")
    return pulse
