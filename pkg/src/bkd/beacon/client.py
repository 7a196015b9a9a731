"""Beacon client. Every pulse is re-hashed locally before it is handed back."""

from __future__ import annotations

import json
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any, Optional, Union

from ..errors import ChainInvalid, MalformedDocument, NotFound, PulseIntegrity, Unreachable
from ..pulse import Pulse
from .chain import verify_chain
from .store import PulseStore, parse_jsonl


def _get_json(url: str, timeout: float) -> Any:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            body = resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code == 404:
            raise NotFound(f"{url}: 404") from exc
        raise Unreachable(f"{url}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, OSError) as exc:
        raise Unreachable(f"{url}: {exc}") from exc
    try:
        return json.loads(body)
    except ValueError as exc:
        raise MalformedDocument(f"{url}: response is not JSON") from exc


def fetch_pulse(endpoint: str, index: Optional[int] = None, timeout: float = 5.0) -> Pulse:
    base = endpoint.rstrip("/")
    url = f"{base}/pulse/last" if index is None else f"{base}/pulse/{int(index)}"
    pulse = Pulse.from_json(_get_json(url, timeout))
    if not pulse.is_consistent():
        raise PulseIntegrity(f"pulse {pulse.index} from {base} failed chain-hash recomputation")
    if index is not None and pulse.index != index:
        raise PulseIntegrity(f"asked for pulse {index}, server returned {pulse.index}")
    return pulse


def fetch_raw_chain(
    endpoint: str, start: int = 0, stop: Optional[int] = None, timeout: float = 10.0
) -> list[Pulse]:
    """Range of pulses as served, with no verification."""
    base = endpoint.rstrip("/")
    if stop is None:
        stop = fetch_pulse(base, timeout=timeout).index
    objs = _get_json(f"{base}/chain?from={int(start)}&to={int(stop)}", timeout)
    if not isinstance(objs, list):
        raise MalformedDocument("chain response is not a list")
    pulses = [Pulse.from_json(o) for o in objs]
    if not pulses:
        raise NotFound(f"no pulses in [{start}, {stop}]")
    return pulses


def fetch_chain(
    endpoint: str, start: int = 0, stop: Optional[int] = None, timeout: float = 10.0
) -> list[Pulse]:
    base = endpoint.rstrip("/")
    pulses = fetch_raw_chain(base, start, stop, timeout)
    verdict = verify_chain(pulses)
    if not verdict:
        raise PulseIntegrity(f"chain from {base} failed verification: {verdict.describe()}")
    return pulses


def _is_url(source: Union[str, Path]) -> bool:
    return str(source).startswith(("http://", "https://"))


def load_pulses(source: Union[str, Path]) -> list[Pulse]:
    """All pulses from an endpoint or JSON-lines file, unverified."""
    if _is_url(source):
        return fetch_raw_chain(str(source))
    path = Path(source)
    if not path.exists():
        raise NotFound(f"chain file {path} does not exist")
    return parse_jsonl(path.read_text(encoding="utf-8"))


def open_store(source: Union[str, Path]) -> PulseStore:
    """Load a full pulse history from a live endpoint or an exported JSON-lines file."""
    if _is_url(source):
        try:
            return PulseStore(fetch_chain(str(source)))
        except ChainInvalid as exc:
            raise PulseIntegrity(str(exc)) from exc
    path = Path(source)
    if not path.exists():
        raise NotFound(f"chain file {path} does not exist")
    return PulseStore.load(path)
