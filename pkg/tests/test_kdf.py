import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from bkd.errors import (
    BadTagLength,
    BlockNotFresh,
    EmptyTranscript,
    NotAuthBlock,
    PulseIntegrity,
    SecretNotAligned,
    SecretTooShort,
)
from bkd.kdf import (
    BlockState,
    KeyBlock,
    MasterSecret,
    SuiteId,
    derive_session,
    derive_session_aes,
    derive_session_sha3,
    fingerprint,
    mac_compute,
    mac_verify,
    partition_master,
)
from bkd.pulse import Pulse, ZERO_HASH
from conftest import random_pulse
from oracles.aes_ref import encrypt_block
from oracles.keccak_ref import sha3_256

# Frozen from the reference oracles in tests/oracles.
AES_ZERO = "530f8afbc74536b9a963b4f1c4cb738bcea7403d4d606b6e074ec5d3baf39d18"
SHA3_ZERO = "cfb08e58f424129d635cc07e1315dd7c3f6078278c7f29a4a57eb157872fc89b"
SHA3_ZERO_INDEX1 = "2099d84c87b10fa84acc3b5b9f8c3953227c3202965767a19fb4286e86375d59"
MAC_ZERO_TEST = "9921d1cce548d8376c00d27d5b9c6f01fa4c623f251180da46e802f6663e1669"

ZERO_BLOCK = KeyBlock(1, bytes(32))
AUTH_ZERO = KeyBlock(0, bytes(32))


def zero_pulse(index=0):
    return Pulse.create(index, 0, bytes(64), ZERO_HASH)


def oracle_aes(key, rand_out):
    r = [rand_out[k:k + 16] for k in range(0, 64, 16)]
    halves = []
    for j, (x, y) in enumerate([(r[0], r[2]), (r[1], r[3])], start=1):
        ctr = bytes(15) + bytes([j])
        halves.append(encrypt_block(key, bytes(a ^ b ^ c for a, b, c in zip(x, y, ctr))))
    return halves[0] + halves[1]


def oracle_sha3(key, index, rand_out):
    return sha3_256(b"BKD-v1-derive" + key + index.to_bytes(8, "big") + rand_out)


class TestPartition:
    def test_minimum_secret(self):
        secret = bytes(range(64))
        blocks = partition_master(MasterSecret(secret))
        assert blocks.auth_block.index == 0
        assert blocks.auth_block.data == secret[:32]
        assert [b.index for b in blocks.derivation_blocks] == [1]
        assert blocks.derivation_blocks[0].data == secret[32:]

    def test_all_zero_96(self):
        blocks = list(partition_master(bytes(96)))
        assert [b.index for b in blocks] == [0, 1, 2]
        assert all(b.data == bytes(32) for b in blocks)

    def test_misaligned(self):
        with pytest.raises(SecretNotAligned):
            partition_master(bytes(100))

    @pytest.mark.parametrize("n", [0, 32, 63])
    def test_too_short(self, n):
        with pytest.raises(SecretTooShort):
            MasterSecret(bytes(n))

    def test_derivation_blocks_start_fresh(self):
        blocks = partition_master(bytes(160))
        assert all(b.state is BlockState.FRESH for b in blocks.derivation_blocks)

    @given(st.integers(2, 40).flatmap(lambda n: st.binary(min_size=32 * n, max_size=32 * n)))
    def test_round_trip(self, secret):
        blocks = partition_master(secret)
        assert blocks.concat() == secret
        assert len(blocks.derivation_blocks) == len(secret) // 32 - 1

    def test_repr_hides_key_material(self):
        secret = bytes([0xAB]) * 64
        assert "abab" not in repr(MasterSecret(secret)).lower()
        assert "abab" not in repr(partition_master(secret)).lower()


class TestKeyBlockState:
    def test_forward_transitions(self):
        b = KeyBlock(1, bytes(32))
        assert b.advance(BlockState.USED).advance(BlockState.RETIRED).state is BlockState.RETIRED

    @pytest.mark.parametrize("start, target", [
        (BlockState.USED, BlockState.FRESH),
        (BlockState.RETIRED, BlockState.USED),
        (BlockState.FRESH, BlockState.RETIRED),
        (BlockState.USED, BlockState.USED),
    ])
    def test_illegal_transitions(self, start, target):
        with pytest.raises(BlockNotFresh):
            KeyBlock(1, bytes(32), start).advance(target)

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            KeyBlock(1, bytes(16))


class TestAesSuite:
    def test_zero_vector(self):
        key = derive_session_aes(ZERO_BLOCK, zero_pulse())
        assert key.data.hex() == AES_ZERO
        assert key.suite_id is SuiteId.AES_COMPOSE_V1

    def test_halves_are_single_block_encryptions(self):
        key = derive_session_aes(ZERO_BLOCK, zero_pulse())
        assert key.data[:16] == encrypt_block(bytes(32), bytes(15) + b"\x01")
        assert key.data[16:] == encrypt_block(bytes(32), bytes(15) + b"\x02")

    def test_deterministic_across_instances(self):
        a = derive_session_aes(KeyBlock(1, bytes(range(32))), zero_pulse())
        b = derive_session_aes(KeyBlock(1, bytes(range(32))), zero_pulse())
        assert a == b

    def test_random_vectors_match_oracle(self):
        rng = random.Random(7)
        for _ in range(20):
            block = KeyBlock(1 + rng.randrange(100), rng.randbytes(32))
            pulse = random_pulse(rng)
            assert derive_session_aes(block, pulse).data == oracle_aes(block.data, pulse.rand_out)

    def test_provenance(self):
        pulse = zero_pulse(5)
        key = derive_session_aes(KeyBlock(3, bytes(32)), pulse)
        assert (key.block_index, key.pulse_index, key.pulse_chain_hash) == (3, 5, pulse.chain_hash)

    def test_uses_all_pulse_bits(self):
        base = derive_session_aes(ZERO_BLOCK, zero_pulse()).data
        for pos in (0, 16, 32, 48, 63):
            rand = bytearray(64)
            rand[pos] = 1
            p = Pulse.create(0, 0, bytes(rand), ZERO_HASH)
            assert derive_session_aes(ZERO_BLOCK, p).data != base


class TestSha3Suite:
    def test_zero_vector(self):
        assert derive_session_sha3(ZERO_BLOCK, zero_pulse()).data.hex() == SHA3_ZERO

    def test_index_changes_output(self):
        a = derive_session_sha3(ZERO_BLOCK, zero_pulse(0)).data
        b = derive_session_sha3(ZERO_BLOCK, zero_pulse(1)).data
        assert b.hex() == SHA3_ZERO_INDEX1
        assert a != b

    def test_random_vectors_match_oracle(self):
        rng = random.Random(8)
        for _ in range(20):
            block = KeyBlock(1, rng.randbytes(32))
            pulse = random_pulse(rng)
            expected = oracle_sha3(block.data, pulse.index, pulse.rand_out)
            assert derive_session_sha3(block, pulse).data == expected


@pytest.mark.parametrize("derive", [derive_session_aes, derive_session_sha3])
class TestDerivationPreconditions:
    def test_used_block_rejected(self, derive):
        with pytest.raises(BlockNotFresh):
            derive(KeyBlock(1, bytes(32), BlockState.USED), zero_pulse())

    def test_inconsistent_pulse_rejected(self, derive):
        bad = dataclasses.replace(zero_pulse(), timestamp=1)
        with pytest.raises(PulseIntegrity):
            derive(ZERO_BLOCK, bad)


def test_dispatch_by_name():
    p = zero_pulse()
    assert derive_session("SHA3_DERIVE_V1", ZERO_BLOCK, p).data.hex() == SHA3_ZERO
    assert derive_session(SuiteId.AES_COMPOSE_V1, ZERO_BLOCK, p).data.hex() == AES_ZERO


def test_fingerprint_is_prefix_of_sha3():
    key = bytes(32)
    assert fingerprint(key) == sha3_256(key).hex()[:8]


class TestMac:
    def test_zero_key_vector(self):
        assert mac_compute(AUTH_ZERO, b"test").hex() == MAC_ZERO_TEST

    def test_one_bit_transcript_change(self):
        assert mac_compute(AUTH_ZERO, b"test") != mac_compute(AUTH_ZERO, b"tesu")

    def test_deterministic(self):
        assert mac_compute(AUTH_ZERO, b"x") == mac_compute(AUTH_ZERO, b"x")

    def test_requires_auth_block(self):
        with pytest.raises(NotAuthBlock):
            mac_compute(KeyBlock(1, bytes(32)), b"test")

    def test_empty_transcript(self):
        with pytest.raises(EmptyTranscript):
            mac_compute(AUTH_ZERO, b"")

    def test_verify_round_trip(self):
        tag = mac_compute(AUTH_ZERO, b"hello")
        assert mac_verify(AUTH_ZERO, b"hello", tag)

    def test_verify_flipped_tag(self):
        tag = bytearray(mac_compute(AUTH_ZERO, b"hello"))
        tag[31] ^= 0x80
        assert not mac_verify(AUTH_ZERO, b"hello", bytes(tag))

    def test_bad_tag_length(self):
        with pytest.raises(BadTagLength):
            mac_verify(AUTH_ZERO, b"hello", bytes(16))

    def test_rejects_all_single_bit_tamperings(self):
        rng = random.Random(99)
        key = KeyBlock(0, rng.randbytes(32))
        transcript = rng.randbytes(48)
        tag = mac_compute(key, transcript)
        for _ in range(200):
            if rng.random() < 0.5:
                t = bytearray(transcript)
                t[rng.randrange(len(t))] ^= 1 << rng.randrange(8)
                assert not mac_verify(key, bytes(t), tag)
            else:
                g = bytearray(tag)
                g[rng.randrange(32)] ^= 1 << rng.randrange(8)
                assert not mac_verify(key, transcript, bytes(g))


@settings(max_examples=50)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=64, max_size=64),
       st.integers(0, 2**64 - 1))
def test_suites_are_pure(key, rand_out, index):
    pulse = Pulse.create(index, 0, rand_out, ZERO_HASH)
    block = KeyBlock(1, key)
    for suite in SuiteId:
        assert derive_session(suite, block, pulse) == derive_session(suite, block, pulse)


def _hamming(a, b):
    return sum(bin(x ^ y).count("1") for x, y in zip(a, b))


def test_aes_suite_diffusion_is_per_half():
    # A pulse bit reaches exactly one folded half, so exactly one ciphertext half changes.
    rng = random.Random(11)
    changed = []
    for _ in range(300):
        block = KeyBlock(1, rng.randbytes(32))
        pulse = random_pulse(rng)
        rand = bytearray(pulse.rand_out)
        bit = rng.randrange(512)
        rand[bit // 8] ^= 1 << (bit % 8)
        flipped = Pulse.create(pulse.index, pulse.timestamp, bytes(rand), pulse.prev_hash)
        a, b = derive_session_aes(block, pulse).data, derive_session_aes(block, flipped).data
        half = 0 if (bit // 128) % 2 == 0 else 1
        assert a[16 * (1 - half):16 * (2 - half)] == b[16 * (1 - half):16 * (2 - half)]
        changed.append(_hamming(a, b))
    mean = sum(changed) / len(changed)
    assert 60 <= mean <= 68


def test_sha3_suite_full_avalanche():
    rng = random.Random(12)
    dists = []
    for _ in range(1000):
        block = KeyBlock(1, rng.randbytes(32))
        pulse = random_pulse(rng)
        rand = bytearray(pulse.rand_out)
        bit = rng.randrange(512)
        rand[bit // 8] ^= 1 << (bit % 8)
        flipped = Pulse.create(pulse.index, pulse.timestamp, bytes(rand), pulse.prev_hash)
        dists.append(_hamming(derive_session_sha3(block, pulse).data,
                              derive_session_sha3(block, flipped).data))
    assert all(90 <= d <= 166 for d in dists)
    assert 126 <= sum(dists) / len(dists) <= 130
