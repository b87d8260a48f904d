"""Signature, digest, and keyed-hash primitives shared by every other module.

All functions are pure and thread-safe. Keys, signatures, and digests are raw
byte strings; callers render them as lowercase hex at the edges.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .errors import InvalidKey, InvalidParams, InvalidSeed

DIGEST_SIZE = 32
KEY_SIZE = 32
SIGNATURE_SIZE = 64
MIN_SEED_BYTES = 16

_RAW = serialization.Encoding.Raw
_RAW_PUBLIC = serialization.PublicFormat.Raw
_RAW_PRIVATE = serialization.PrivateFormat.Raw
_NO_ENCRYPTION = serialization.NoEncryption()


@dataclass(frozen=True)
class KeyPair:
    """Ed25519 pair; both halves are raw 32-byte strings."""

    public_key: bytes
    secret_key: bytes


def keygen(seed: bytes | None = None) -> KeyPair:
    """Create a key pair.

    Without a seed the pair is drawn from system randomness. A seed of at
    least 16 bytes makes the pair reproducible (test/deterministic mode).
    """
    if seed is None:
        priv = Ed25519PrivateKey.generate()
    else:
        if len(seed) < MIN_SEED_BYTES:
            raise InvalidSeed(f"seed must be >= {MIN_SEED_BYTES} bytes, got {len(seed)}")
        priv = Ed25519PrivateKey.from_private_bytes(hashlib.sha256(seed).digest())
    return KeyPair(
        public_key=priv.public_key().public_bytes(_RAW, _RAW_PUBLIC),
        secret_key=priv.private_bytes(_RAW, _RAW_PRIVATE, _NO_ENCRYPTION),
    )


def public_key_from_secret(secret_key: bytes) -> bytes:
    return _load_private(secret_key).public_key().public_bytes(_RAW, _RAW_PUBLIC)


def _load_private(secret_key: bytes) -> Ed25519PrivateKey:
    if not isinstance(secret_key, (bytes, bytearray)) or len(secret_key) != KEY_SIZE:
        raise InvalidKey("secret key must be 32 raw bytes")
    try:
        return Ed25519PrivateKey.from_private_bytes(bytes(secret_key))
    except Exception as exc:  # pragma: no cover - library-level rejection
        raise InvalidKey(str(exc)) from exc


def sign(secret_key: bytes, msg: bytes) -> bytes:
    return _load_private(secret_key).sign(msg)


def verify(public_key: bytes, msg: bytes, sig: bytes) -> bool:
    """True iff `sig` was produced over exactly `msg` by the matching key.

    Malformed inputs return False rather than raising.
    """
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != KEY_SIZE:
        return False
    if not isinstance(sig, (bytes, bytearray)) or not isinstance(msg, (bytes, bytearray)):
        return False
    try:
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(sig), bytes(msg))
    except (InvalidSignature, ValueError):
        return False
    return True


def digest(msg: bytes) -> bytes:
    """32-byte SHA-256; the one content hash used everywhere."""
    return hashlib.sha256(msg).digest()


def parity_hash(x: int) -> int:
    """Balanced single bit of a 64-bit unsigned value."""
    return digest(struct.pack(">Q", x))[-1] & 1


@dataclass(frozen=True)
class HashFamily:
    """k+1 HMAC-SHA256 functions derived from one master seed.

    Functions 1..k map any byte string onto [0, range_m); function k+1
    yields a 64-bit tag. Everything is a pure function of the seed.
    """

    keys: tuple[bytes, ...]
    range_m: int

    @property
    def k(self) -> int:
        return len(self.keys) - 1

    def twin_index(self, i: int, x: bytes) -> int:
        """Index function h_i (1-based, i <= k), value in [0, range_m)."""
        mac = hmac.digest(self.keys[i - 1], x, "sha256")
        return int.from_bytes(mac, "big") % self.range_m

    def tag64(self, x: bytes) -> int:
        """Low 64 bits of the (k+1)-th keyed MAC."""
        mac = hmac.digest(self.keys[-1], x, "sha256")
        return int.from_bytes(mac[-8:], "big")


def derive_hash_family(master_seed: bytes, k: int, m: int) -> HashFamily:
    if k < 1 or m < 2:
        raise InvalidParams(f"hash family needs k >= 1 and m >= 2, got k={k} m={m}")
    keys = tuple(
        hmac.digest(master_seed, b"ibf-key" + struct.pack(">I", i), "sha256")
        for i in range(1, k + 2)
    )
    return HashFamily(keys=keys, range_m=m)


class SystemRandomness:
    """OS-entropy randomness source."""

    def bytes(self, n: int) -> bytes:
        return os.urandom(n)

    def u64(self) -> int:
        return int.from_bytes(os.urandom(8), "big")


class SeededRandomness:
    """Reproducible randomness: (seed, counter) fully determine all output.

    Each call consumes one counter value, so the stream can be resumed
    across processes by persisting the counter.
    """

    def __init__(self, seed: bytes, counter: int = 0):
        if len(seed) < MIN_SEED_BYTES:
            raise InvalidSeed(f"rng seed must be >= {MIN_SEED_BYTES} bytes")
        self._seed = bytes(seed)
        self._counter = counter

    @property
    def counter(self) -> int:
        return self._counter

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        block = 0
        while len(out) < n:
            out += hmac.digest(self._seed, struct.pack(">QI", self._counter, block), "sha256")
            block += 1
        self._counter += 1
        return bytes(out[:n])

    def u64(self) -> int:
        return int.from_bytes(self.bytes(8), "big")
