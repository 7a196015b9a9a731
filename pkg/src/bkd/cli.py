"""``bkd`` command-line tool.

Verbs: init, beacon-serve, beacon-export, verify-chain, propose, accept, status.

Exit codes: 0 success, 1 I/O failure, 2 usage error, 3/4 from ``status``
(RekeySoon / Exhausted), 5 bind failure, and ``BKDError.exit_code`` (10+)
for protocol errors; see :func:`bkd.errors.exit_codes`.
"""

from __future__ import annotations

import argparse
import logging
import os
import random
import secrets
import signal
import sys
import tempfile
import threading
from pathlib import Path
from typing import Optional, Sequence

from .agreement import SessionProposal, accept_session, propose_session
from .beacon import BeaconService, PulseStore, load_pulses, open_store, verify_chain
from .beacon.chain import EntropySource
from .errors import BKDError, ChainInvalid, MalformedDocument, NotFound
from .kdf import BlockState, MasterSecret, SessionKey, SuiteId
from .ledger import DEFAULT_REKEY_THRESHOLD, Ledger, RotationVerdict

log = logging.getLogger("bkd")

DEFAULT_LEDGER = "bkd-ledger.json"
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_BIND = 5
STATUS_EXIT = {
    RotationVerdict.HEALTHY: 0,
    RotationVerdict.REKEY_SOON: 3,
    RotationVerdict.EXHAUSTED: 4,
}


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--ledger", help=f"ledger file (default: $BKD_LEDGER or {DEFAULT_LEDGER})")
    common.add_argument("--beacon", help="beacon URL (http://host:port) or exported chain file")
    common.add_argument("--min-age", type=_positive_int, default=10,
                        help="exclude this many newest pulses from selection (default 10)")
    common.add_argument("--suite", choices=[s.value for s in SuiteId],
                        default=SuiteId.AES_COMPOSE_V1.value)
    common.add_argument("--rekey-threshold", type=_positive_int, default=DEFAULT_REKEY_THRESHOLD)
    common.add_argument("--reveal", action="store_true", help="print raw session key bytes")
    common.add_argument("--rng-seed", type=int, help="deterministic randomness (tests only)")
    common.add_argument("--insecure-test", action="store_true",
                        help="required together with --rng-seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="bkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", parents=[common], help="create a ledger from a pre-shared secret")
    p.add_argument("--group", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--hex-file", type=Path, help="file holding the secret as hex")
    src.add_argument("--generate", type=_positive_int, metavar="N",
                     help="generate an N-byte secret from local entropy")
    p.add_argument("--export-secret", type=Path,
                   help="with --generate, also write the secret as hex for the other parties")
    p.add_argument("--force", action="store_true", help="overwrite an existing ledger")

    p = sub.add_parser("beacon-serve", parents=[common], help="run the local beacon service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--interval", type=float, default=1.0, help="seconds between pulses")
    p.add_argument("--chain", type=Path, help="resume from this chain file")
    p.add_argument("--prefill", type=int, default=0, help="emit N pulses at startup")
    p.add_argument("--out", type=Path, default=Path("beacon-chain.jsonl"),
                   help="JSON-lines file written on shutdown")

    p = sub.add_parser("beacon-export", parents=[common],
                       help="write a pulse chain to a JSON-lines file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--generate", type=_positive_int, metavar="N",
                   help="synthesize an offline chain of N pulses instead of fetching")
    p.add_argument("--start-time", type=int, default=0)

    sub.add_parser("verify-chain", parents=[common], help="verify a served or exported chain")

    p = sub.add_parser("propose", parents=[common], help="propose a new session key")
    p.add_argument("--proposal", default="proposal.json", help="output path, '-' for stdout")

    p = sub.add_parser("accept", parents=[common], help="accept a session proposal")
    p.add_argument("--proposal", default="proposal.json", help="input path, '-' for stdin")

    sub.add_parser("status", parents=[common], help="show key-block usage and rotation verdict")
    return parser


def _rng(args: argparse.Namespace) -> EntropySource:
    if args.rng_seed is not None:
        if not args.insecure_test:
            raise UsageError("--rng-seed is only allowed together with --insecure-test")
        return random.Random(args.rng_seed)
    return secrets.SystemRandom()


def _ledger_path(args: argparse.Namespace) -> Path:
    return Path(args.ledger or os.environ.get("BKD_LEDGER") or DEFAULT_LEDGER)


def _require_beacon(args: argparse.Namespace) -> str:
    if not args.beacon:
        raise UsageError("--beacon is required")
    return args.beacon


def _read_ledger(path: Path) -> Ledger:
    if not path.exists():
        raise NotFound(f"ledger {path} does not exist")
    return Ledger.load(path.read_bytes())


def _write_private(path: Path, data: bytes) -> None:
    path = path.resolve()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o600)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _report_key(key: SessionKey, reveal: bool) -> None:
    print(f"suite: {key.suite_id.value}")
    print(f"block: {key.block_index}")
    print(f"pulse: {key.pulse_index}")
    print(f"fingerprint: {key.fingerprint()}")
    if reveal:
        print(f"session key: {key.data.hex()}")


def cmd_init(args: argparse.Namespace) -> int:
    path = _ledger_path(args)
    if path.exists() and not args.force:
        raise UsageError(f"{path} exists; pass --force to overwrite")
    if args.generate is not None:
        raw = _rng(args).randbytes(args.generate)
    else:
        try:
            raw = bytes.fromhex("".join(args.hex_file.read_text().split()))
        except ValueError as exc:
            raise MalformedDocument(f"{args.hex_file} is not valid hex") from exc
    ledger = Ledger.create(MasterSecret(raw), args.group)
    _write_private(path, ledger.save())
    if args.export_secret is not None:
        if args.generate is None:
            raise UsageError("--export-secret only applies with --generate")
        _write_private(args.export_secret, raw.hex().encode("ascii") + b"\n")
    print(f"ledger: {path}")
    print(f"group: {ledger.group_id}")
    print(f"secret bytes: {len(raw)}")
    print(f"derivation blocks: {len(ledger.blocks.derivation_blocks)}")
    print("auth block: reserved (block 0)")
    return 0


def cmd_beacon_serve(args: argparse.Namespace) -> int:
    store = PulseStore.load(args.chain) if args.chain else PulseStore()
    interval = args.interval if args.interval > 0 else None
    try:
        service = BeaconService(store, args.host, args.port, interval, _rng(args),
                                export_path=args.out)
    except OSError as exc:
        print(f"error: cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_BIND
    for _ in range(args.prefill):
        service.emit()
    done = threading.Event()
    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, lambda *_: done.set())
    service.start()
    print(f"serving {service.url}", flush=True)
    done.wait()
    service.stop()
    print(f"exported {len(store)} pulses to {args.out}", flush=True)
    return 0


def cmd_beacon_export(args: argparse.Namespace) -> int:
    if args.generate is not None:
        store = PulseStore.generate(args.generate, _rng(args), start_time=args.start_time)
    else:
        store = open_store(_require_beacon(args))
    store.save(args.out)
    print(f"exported {len(store)} pulses (0..{store.latest}) to {args.out}")
    return 0


def cmd_verify_chain(args: argparse.Namespace) -> int:
    pulses = load_pulses(_require_beacon(args))
    verdict = verify_chain(pulses)
    print(f"pulses: {len(pulses)}")
    print(f"verdict: {verdict.describe()}")
    return 0 if verdict.ok else ChainInvalid.exit_code


def cmd_propose(args: argparse.Namespace) -> int:
    path = _ledger_path(args)
    ledger = _read_ledger(path)
    store = open_store(_require_beacon(args))
    proposal, outcome = propose_session(ledger, store, _rng(args), args.suite, args.min_age)
    text = proposal.dumps()
    if args.proposal == "-":
        sys.stdout.write(text)
    else:
        Path(args.proposal).write_text(text)
    _write_private(path, ledger.save())
    if args.proposal != "-":
        print(f"proposal: {args.proposal}")
        _report_key(outcome.session_key, args.reveal)
    else:
        # keep stdout a clean JSON document
        print(f"fingerprint: {outcome.session_key.fingerprint()}", file=sys.stderr)
    return 0


def cmd_accept(args: argparse.Namespace) -> int:
    path = _ledger_path(args)
    ledger = _read_ledger(path)
    store = open_store(_require_beacon(args))
    if args.proposal == "-":
        text = sys.stdin.read()
    else:
        proposal_path = Path(args.proposal)
        if not proposal_path.exists():
            raise NotFound(f"proposal {proposal_path} does not exist")
        text = proposal_path.read_text()
    outcome = accept_session(ledger, store, SessionProposal.loads(text))
    _write_private(path, ledger.save())
    print("accepted")
    _report_key(outcome.session_key, args.reveal)
    return 0


def cmd_status(args: argparse.Namespace) -> int:
    ledger = _read_ledger(_ledger_path(args))
    status = ledger.rotation_status(args.rekey_threshold)
    counts = ledger.counts()
    print(f"group: {ledger.group_id}")
    for state in BlockState:
        print(f"{state.value.lower()}: {counts[state]}")
    print(f"threshold: {status.threshold}")
    print(f"verdict: {status.verdict.value}")
    return STATUS_EXIT[status.verdict]


COMMANDS = {
    "init": cmd_init,
    "beacon-serve": cmd_beacon_serve,
    "beacon-export": cmd_beacon_export,
    "verify-chain": cmd_verify_chain,
    "propose": cmd_propose,
    "accept": cmd_accept,
    "status": cmd_status,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except BKDError as exc:
        print(f"error: {exc.name}: {exc}", file=sys.stderr)
        return exc.exit_code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
