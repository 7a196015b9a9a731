from .chain import ChainFault, ChainVerdict, genesis_pulse, next_pulse, verify_chain
from .client import fetch_chain, fetch_pulse, load_pulses, open_store
from .service import BeaconService
from .store import DEFAULT_MIN_AGE, PulseStore, parse_jsonl, select_historical

__all__ = [
    "BeaconService",
    "ChainFault",
    "ChainVerdict",
    "DEFAULT_MIN_AGE",
    "PulseStore",
    "fetch_chain",
    "fetch_pulse",
    "genesis_pulse",
    "load_pulses",
    "next_pulse",
    "open_store",
    "parse_jsonl",
    "select_historical",
    "verify_chain",
]
