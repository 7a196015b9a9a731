"""Local beacon HTTP service.

Routes::

    GET /pulse/last
    GET /pulse/<index>
    GET /chain?from=<a>&to=<b>     inclusive; JSON array of pulse objects
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable, Optional
from urllib.parse import parse_qs, urlsplit

from ..errors import NotFound
from .chain import EntropySource
from .store import PulseStore

log = logging.getLogger(__name__)


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"

    def log_message(self, format: str, *args: Any) -> None:
        log.debug("%s - %s", self.address_string(), format % args)

    def _send(self, status: int, body: Any) -> None:
        payload = json.dumps(body, separators=(",", ":")).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self) -> None:
        store = self.server.store
        url = urlsplit(self.path)
        parts = [p for p in url.path.split("/") if p]
        try:
            if parts == ["pulse", "last"]:
                self._send(200, store.last().to_json())
            elif len(parts) == 2 and parts[0] == "pulse" and parts[1].isdigit():
                self._send(200, store.get(int(parts[1])).to_json())
            elif parts == ["chain"]:
                q = parse_qs(url.query)
                start = int(q.get("from", ["0"])[0])
                stop = int(q["to"][0]) if "to" in q else store.latest
                self._send(200, [p.to_json() for p in store.range(start, stop)])
            else:
                self._send(404, {"error": "NoSuchRoute"})
        except NotFound as exc:
            self._send(404, {"error": "NotFound", "detail": str(exc)})
        except ValueError:
            self._send(400, {"error": "BadRequest"})


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr: tuple[str, int], store: PulseStore):
        super().__init__(addr, _Handler)
        self.store = store


class BeaconService:
    """Serves a :class:`PulseStore` and appends to it at a fixed cadence.

    ``interval=None`` is on-demand mode: pulses are only added by
    :meth:`emit`, which is what tests use.
    """

    def __init__(
        self,
        store: Optional[PulseStore] = None,
        host: str = "127.0.0.1",
        port: int = 0,
        interval: Optional[float] = 1.0,
        rng: Optional[EntropySource] = None,
        clock: Callable[[], float] = time.time,
        export_path: Optional[Path] = None,
    ):
        self.store = store if store is not None else PulseStore()
        self.interval = interval
        self.rng = rng if rng is not None else secrets.SystemRandom()
        self.clock = clock
        self.export_path = export_path
        self._httpd = _Server((host, port), self.store)
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def emit(self):
        ts = int(self.clock())
        if len(self.store):
            ts = max(ts, self.store.last().timestamp)
        return self.store.grow(self.rng, ts)

    def _tick_loop(self) -> None:
        while not self._stop.wait(self.interval):
            pulse = self.emit()
            log.debug("emitted pulse %d", pulse.index)

    def start(self) -> "BeaconService":
        if not len(self.store):
            self.emit()
        t = threading.Thread(target=self._httpd.serve_forever, name="bkd-http", daemon=True)
        t.start()
        self._threads.append(t)
        if self.interval is not None:
            t = threading.Thread(target=self._tick_loop, name="bkd-ticker", daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def stop(self) -> None:
        self._stop.set()
        self._httpd.shutdown()
        self._httpd.server_close()
        for t in self._threads:
            t.join(timeout=5)
        if self.export_path is not None:
            self.store.save(self.export_path)
            log.info("exported %d pulses to %s", len(self.store), self.export_path)

    def __enter__(self) -> "BeaconService":
        return self.start()

    def __exit__(self, *exc: Any) -> None:
        self.stop()
