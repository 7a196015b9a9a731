"""Beacon key distribution.

Grow 256-bit session keys from a pre-shared master secret and publicly
broadcast randomness-beacon pulses: ``S_i = F(M_i, P_i)``.
"""

from .agreement import (
    AgreementOutcome,
    MemberResult,
    SessionProposal,
    accept_session,
    agreed_key,
    group_accept,
    propose_session,
    transcript_canonical,
)
from .beacon import PulseStore, select_historical, verify_chain
from .errors import BKDError
from .kdf import (
    BlockState,
    KeyBlock,
    KeyBlockSet,
    MasterSecret,
    SessionKey,
    SuiteId,
    derive_session,
    derive_session_aes,
    derive_session_sha3,
    mac_compute,
    mac_verify,
    partition_master,
)
from .ledger import Ledger, RotationStatus, RotationVerdict, load_ledger, save_ledger
from .pulse import Pulse, canonical_serialize, chain_hash

__version__ = "0.1.0"
