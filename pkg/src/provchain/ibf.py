"""Twin-cell bloom filter with a keyed, nonce-obscured bit layout.

The filter holds m twins of two one-bit cells. For twin p exactly one cell is
"chosen" and carries real membership data; its index is
parity_hash(tag64(be64(p)) XOR gamma) and so depends only on the secret nonce
gamma and the keyed hash family. The other ("unchosen") cell is filled with
random bits at setup, making set and unset twins look alike to an observer
who does not hold gamma and the family seed.

Member values are the canonical encoding of (args, create_time) produced by
:func:`encode_member`. Filters are immutable values: ``insert`` returns a new
filter, so a committed version can be read from any thread.
"""

from __future__ import annotations

import hmac
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache

from .crypto import HashFamily, derive_hash_family, parity_hash
from .errors import CorruptFilter, InvalidParams

MAGIC = b"IBF1"
_HEADER = struct.Struct(">4sIIQI")  # magic, m, k, gamma, len(family_seed)

MIN_M = 8
MAX_K = 16


def encode_member(args: str, create_time: int) -> bytes:
    """Injective framing of (args, create_time): be64(len) || args || be64(time)."""
    raw = args.encode("utf-8")
    return struct.pack(">Q", len(raw)) + raw + struct.pack(">Q", create_time)


def _get_bit(buf: bytes, idx: int) -> int:
    return (buf[idx >> 3] >> (7 - (idx & 7))) & 1


def _set_bit(buf: bytearray, idx: int, bit: int) -> None:
    mask = 1 << (7 - (idx & 7))
    if bit:
        buf[idx >> 3] |= mask
    else:
        buf[idx >> 3] &= ~mask


@lru_cache(maxsize=256)
def _internals(family_seed: bytes, k: int, m: int, gamma: int) -> tuple[HashFamily, bytes]:
    """Hash family plus the chosen-cell index of every twin.

    The chosen index depends only on (family_seed, k, m, gamma), so all
    versions of one product's filter share a single cached table.
    """
    family = derive_hash_family(family_seed, k, m)
    chosen = bytearray(m)
    for p in range(m):
        chosen[p] = parity_hash(family.tag64(struct.pack(">Q", p)) ^ gamma)
    return family, bytes(chosen)


def _expand(seed: bytes, label: bytes, nbytes: int) -> bytes:
    out = bytearray()
    block = 0
    while len(out) < nbytes:
        out += hmac.digest(seed, label + struct.pack(">I", block), "sha256")
        block += 1
    return bytes(out[:nbytes])


@dataclass(frozen=True)
class IndistinguishableBloomFilter:
    """Immutable twin-cell filter value.

    ``cells`` packs both cells of every twin MSB-first: bit 2p is cell 0 of
    twin p, bit 2p+1 its cell 1, zero-padded to a byte boundary. This is the
    exact serialization layout, so equality over (m, k, gamma, family_seed,
    cells) is equality of serialized bytes.
    """

    m: int
    k: int
    gamma: int
    family_seed: bytes
    cells: bytes
    family: HashFamily = field(compare=False, repr=False)
    chosen: bytes = field(compare=False, repr=False)

    def chosen_index(self, p: int) -> int:
        """Which cell of twin p carries data (0 or 1)."""
        return self.chosen[p]

    def insert(self, member: bytes) -> "IndistinguishableBloomFilter":
        """New filter with `member` recorded.

        For each of the k twin indices the chosen cell is set to 1 and the
        unchosen cell to 0; all other twins are untouched.
        """
        cells = bytearray(self.cells)
        for i in range(1, self.k + 1):
            p = self.family.twin_index(i, member)
            c = self.chosen[p]
            _set_bit(cells, 2 * p + c, 1)
            _set_bit(cells, 2 * p + 1 - c, 0)
        return replace(self, cells=bytes(cells))

    def check(self, member: bytes) -> bool:
        """True iff all k chosen cells for `member` are 1 (may false-positive)."""
        return self.check_counting(member)[0]

    def check_counting(self, member: bytes) -> tuple[bool, int]:
        """Membership verdict plus the number of twins probed (<= k)."""
        probes = 0
        for i in range(1, self.k + 1):
            p = self.family.twin_index(i, member)
            probes += 1
            if not _get_bit(self.cells, 2 * p + self.chosen[p]):
                return False, probes
        return True, probes

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, self.m, self.k, self.gamma, len(self.family_seed))
        return header + self.family_seed + self.cells

    @classmethod
    def from_bytes(cls, blob: bytes) -> "IndistinguishableBloomFilter":
        if len(blob) < _HEADER.size:
            raise CorruptFilter("filter blob shorter than header")
        magic, m, k, gamma, seed_len = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CorruptFilter(f"bad magic {magic!r}")
        if m < MIN_M or not 1 <= k <= MAX_K:
            raise CorruptFilter(f"parameters out of range: m={m} k={k}")
        n_cell_bytes = (2 * m + 7) // 8
        if len(blob) != _HEADER.size + seed_len + n_cell_bytes:
            raise CorruptFilter("filter blob length does not match header")
        family_seed = blob[_HEADER.size:_HEADER.size + seed_len]
        cells = blob[_HEADER.size + seed_len:]
        pad_bits = n_cell_bytes * 8 - 2 * m
        if pad_bits and cells[-1] & ((1 << pad_bits) - 1):
            raise CorruptFilter("nonzero padding bits")
        family, chosen = _internals(family_seed, k, m, gamma)
        return cls(m=m, k=k, gamma=gamma, family_seed=family_seed, cells=cells,
                   family=family, chosen=chosen)


IBF = IndistinguishableBloomFilter


def setup(m: int, k: int, rng_seed: bytes) -> IndistinguishableBloomFilter:
    """Fresh filter: every chosen cell 0, every unchosen cell a random bit.

    gamma and the hash-family seed are derived from rng_seed, so the same
    seed yields a byte-identical filter.
    """
    if not isinstance(m, int) or m < MIN_M:
        raise InvalidParams(f"m must be an int >= {MIN_M}, got {m!r}")
    if not isinstance(k, int) or not 1 <= k <= MAX_K:
        raise InvalidParams(f"k must be in [1, {MAX_K}], got {k!r}")
    family_seed = hmac.digest(rng_seed, b"family", "sha256")
    gamma = int.from_bytes(hmac.digest(rng_seed, b"gamma", "sha256")[:8], "big")
    family, chosen = _internals(family_seed, k, m, gamma)
    noise = _expand(rng_seed, b"cells", (m + 7) // 8)
    cells = bytearray((2 * m + 7) // 8)
    for p in range(m):
        if _get_bit(noise, p):
            _set_bit(cells, 2 * p + 1 - chosen[p], 1)
    return IndistinguishableBloomFilter(
        m=m, k=k, gamma=gamma, family_seed=family_seed, cells=bytes(cells),
        family=family, chosen=chosen,
    )


def insert(filt: IndistinguishableBloomFilter, member: bytes) -> IndistinguishableBloomFilter:
    return filt.insert(member)


def check(filt: IndistinguishableBloomFilter, member: bytes) -> bool:
    return filt.check(member)


def serialize(filt: IndistinguishableBloomFilter) -> bytes:
    return filt.to_bytes()


def deserialize(blob: bytes) -> IndistinguishableBloomFilter:
    return IndistinguishableBloomFilter.from_bytes(blob)
