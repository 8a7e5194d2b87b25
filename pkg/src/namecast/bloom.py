"""Bloom filters used as implicit instantiation sets.

Index derivation is fixed so that any party holding the filter can test
membership: a single FNV-1a 64 hash is split into two 32-bit halves and
combined by double hashing, ``idx_i = (h1 + i * h2) mod m``.
"""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field
from typing import Iterable

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

MIN_BITS = 8
MAX_HASHES = 16


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def bit_indices(element: str, m: int, k: int) -> list[int]:
    h = fnv1a_64(element.encode("utf-8"))
    h1, h2 = h & 0xFFFFFFFF, h >> 32
    return [(h1 + i * h2) % m for i in range(k)]


def _check_params(m: int, k: int) -> None:
    if m < MIN_BITS:
        raise ValueError(f"bloom filter needs at least {MIN_BITS} bits, got {m}")
    if not 1 <= k <= MAX_HASHES:
        raise ValueError(f"hash count must be in [1, {MAX_HASHES}], got {k}")


@dataclass(frozen=True)
class BloomFilter:
    """Immutable bit array of ``m`` bits probed by ``k`` hashes.

    ``n_inserted`` is bookkeeping only. It does not travel on the wire and
    is excluded from equality, so a decoded filter equals its source.
    """

    m: int
    k: int
    bits: bytes = b""
    n_inserted: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        _check_params(self.m, self.k)
        nbytes = (self.m + 7) // 8
        if not self.bits:
            object.__setattr__(self, "bits", bytes(nbytes))
        elif len(self.bits) != nbytes:
            raise ValueError(f"expected {nbytes} bytes for m={self.m}, got {len(self.bits)}")
        elif self.m % 8 and self.bits[-1] >> (self.m % 8):
            raise ValueError("padding bits beyond m must be zero")

    @classmethod
    def from_elements(cls, elements: Iterable[str], m: int, k: int) -> BloomFilter:
        _check_params(m, k)
        buf = bytearray((m + 7) // 8)
        n = 0
        for element in elements:
            for i in bit_indices(element, m, k):
                buf[i >> 3] |= 1 << (i & 7)
            n += 1
        return cls(m, k, bytes(buf), n)

    def test_bit(self, i: int) -> bool:
        return bool(self.bits[i >> 3] & (1 << (i & 7)))

    def __contains__(self, element: str) -> bool:
        return all(self.test_bit(i) for i in bit_indices(element, self.m, self.k))

    def fill_ratio(self) -> float:
        return sum(bin(b).count("1") for b in self.bits) / self.m

    def expected_fpr(self, n: int | None = None) -> float:
        """Analytic false-positive rate ``(1 - exp(-k n / m)) ** k``."""
        n = self.n_inserted if n is None else n
        return (1.0 - math.exp(-self.k * n / self.m)) ** self.k

    def encode(self) -> str:
        """Wire form ``bf:<m>:<k>:<base64url bits, unpadded>``."""
        payload = base64.urlsafe_b64encode(self.bits).rstrip(b"=").decode("ascii")
        return f"bf:{self.m}:{self.k}:{payload}"

    @classmethod
    def decode(cls, text: str) -> BloomFilter:
        parts = text.split(":", 3)
        if len(parts) != 4:
            raise ValueError(f"not a bloom filter clause: {text!r}")
        tag, m, k, payload = parts
        if tag != "bf" or not m.isdigit() or not k.isdigit():
            raise ValueError(f"not a bloom filter clause: {text!r}")
        m_bits, k_hashes = int(m), int(k)
        _check_params(m_bits, k_hashes)
        bits = base64.urlsafe_b64decode(payload + "=" * (-len(payload) % 4))
        if encode_b64(bits) != payload:
            raise ValueError("non-canonical base64url bit payload")
        if len(bits) != (m_bits + 7) // 8:
            raise ValueError(f"bit payload length does not match m={m_bits}")
        return cls(m_bits, k_hashes, bits)


def encode_b64(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def bloom_insert(bf: BloomFilter, element: str) -> BloomFilter:
    buf = bytearray(bf.bits)
    for i in bit_indices(element, bf.m, bf.k):
        buf[i >> 3] |= 1 << (i & 7)
    return BloomFilter(bf.m, bf.k, bytes(buf), bf.n_inserted + 1)


def bloom_member(bf: BloomFilter, element: str) -> bool:
    return element in bf
