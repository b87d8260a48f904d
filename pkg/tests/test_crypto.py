import random
import struct

import pytest

from provchain import crypto
from provchain.errors import InvalidKey, InvalidParams, InvalidSeed

SEED = b"0123456789abcdef0123456789abcdef"

# sha256 of the empty string, the fixed reference constant
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"

# chi2 critical value at alpha=0.01 for df=127 (scipy.stats.chi2.ppf(0.99, 127))
CHI2_CRIT_99_DF127 = 166.98739013667387


class TestKeygen:
    def test_same_seed_same_pair(self):
        assert crypto.keygen(SEED) == crypto.keygen(SEED)

    def test_fresh_keys_distinct(self):
        assert crypto.keygen().public_key != crypto.keygen().public_key

    def test_short_seed_rejected(self):
        with pytest.raises(InvalidSeed):
            crypto.keygen(b"8bytes!!")

    def test_public_derivable_from_secret(self):
        pair = crypto.keygen(SEED)
        assert crypto.public_key_from_secret(pair.secret_key) == pair.public_key


class TestSignVerify:
    def test_round_trip(self):
        pair = crypto.keygen(SEED)
        sig = crypto.sign(pair.secret_key, b"message")
        assert crypto.verify(pair.public_key, b"message", sig)

    def test_appended_byte_breaks(self):
        pair = crypto.keygen(SEED)
        sig = crypto.sign(pair.secret_key, b"message")
        assert not crypto.verify(pair.public_key, b"message\x00", sig)

    def test_unrelated_key_fails(self):
        pair = crypto.keygen(SEED)
        other = crypto.keygen(b"another-seed-another-seed")
        sig = crypto.sign(pair.secret_key, b"message")
        assert not crypto.verify(other.public_key, b"message", sig)

    def test_malformed_key_raises_on_sign(self):
        with pytest.raises(InvalidKey):
            crypto.sign(b"short", b"message")

    def test_malformed_inputs_verify_false(self):
        pair = crypto.keygen(SEED)
        sig = crypto.sign(pair.secret_key, b"m")
        assert not crypto.verify(b"short", b"m", sig)
        assert not crypto.verify(pair.public_key, b"m", b"not a signature")

    def test_round_trip_and_bit_flips_over_many_pairs(self):
        rng = random.Random(0x5157)
        for _ in range(1000):
            pair = crypto.keygen(rng.randbytes(32))
            msg = rng.randbytes(rng.randint(1, 64))
            sig = crypto.sign(pair.secret_key, msg)
            assert crypto.verify(pair.public_key, msg, sig)
        # single-bit flips in message and signature both break verification
        for _ in range(100):
            pair = crypto.keygen(rng.randbytes(32))
            msg = bytearray(rng.randbytes(32))
            sig = bytearray(crypto.sign(pair.secret_key, bytes(msg)))
            flipped_msg = bytearray(msg)
            flipped_msg[rng.randrange(len(msg))] ^= 1 << rng.randrange(8)
            assert not crypto.verify(pair.public_key, bytes(flipped_msg), bytes(sig))
            flipped_sig = bytearray(sig)
            flipped_sig[rng.randrange(len(sig))] ^= 1 << rng.randrange(8)
            assert not crypto.verify(pair.public_key, bytes(msg), bytes(flipped_sig))


class TestDigest:
    def test_deterministic(self):
        assert crypto.digest(b"abc") == crypto.digest(b"abc")

    def test_empty_constant(self):
        assert crypto.digest(b"").hex() == SHA256_EMPTY

    def test_distinct_over_random_pairs(self):
        rng = random.Random(0xD16E57)
        for _ in range(10_000):
            a = rng.randbytes(16)
            b = rng.randbytes(16)
            if a != b:
                assert crypto.digest(a) != crypto.digest(b)


class TestHashFamily:
    def test_deterministic_family(self):
        fam1 = crypto.derive_hash_family(SEED, 5, 100)
        fam2 = crypto.derive_hash_family(SEED, 5, 100)
        assert fam1 == fam2
        for i in range(1, 6):
            assert fam1.twin_index(i, b"probe") == fam2.twin_index(i, b"probe")
        assert fam1.tag64(b"probe") == fam2.tag64(b"probe")

    def test_index_range(self):
        fam = crypto.derive_hash_family(SEED, 3, 97)
        rng = random.Random(1)
        for _ in range(10_000):
            x = rng.randbytes(12)
            assert 0 <= fam.twin_index(1, x) < 97

    def test_tag_is_64_bit(self):
        fam = crypto.derive_hash_family(SEED, 1, 8)
        rng = random.Random(2)
        assert any(fam.tag64(rng.randbytes(8)) > 2 ** 32 for _ in range(100))
        for _ in range(1000):
            assert 0 <= fam.tag64(rng.randbytes(8)) < 2 ** 64

    def test_uniformity_chi_square(self):
        # frozen critical value at alpha=0.01 for m=128 bins
        m = 128
        n = 100_000
        fam = crypto.derive_hash_family(SEED, 1, m)
        counts = [0] * m
        for i in range(n):
            counts[fam.twin_index(1, struct.pack(">Q", i))] += 1
        expected = n / m
        stat = sum((c - expected) ** 2 / expected for c in counts)
        assert stat < CHI2_CRIT_99_DF127, f"chi2 statistic {stat:.2f}"

    def test_invalid_params(self):
        with pytest.raises(InvalidParams):
            crypto.derive_hash_family(SEED, 0, 100)
        with pytest.raises(InvalidParams):
            crypto.derive_hash_family(SEED, 3, 1)


class TestParityHash:
    def test_bit_valued_and_deterministic(self):
        for x in (0, 1, 2 ** 63, 2 ** 64 - 1):
            bit = crypto.parity_hash(x)
            assert bit in (0, 1)
            assert crypto.parity_hash(x) == bit

    def test_balance(self):
        rng = random.Random(3)
        n = 100_000
        ones = sum(crypto.parity_hash(rng.getrandbits(64)) for _ in range(n))
        assert 0.49 <= ones / n <= 0.51


class TestRandomness:
    def test_seeded_stream_resumable(self):
        a = crypto.SeededRandomness(SEED)
        first, second = a.bytes(16), a.bytes(16)
        resumed = crypto.SeededRandomness(SEED, counter=1)
        assert resumed.bytes(16) == second
        assert first != second

    def test_system_randomness_varies(self):
        rng = crypto.SystemRandomness()
        assert rng.bytes(16) != rng.bytes(16)
