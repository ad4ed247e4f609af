"""k-wise independent hashing by random degree-(k-1) polynomials over GF(p).

For distinct keys and a uniform seed, the field values at any k keys are
exactly uniform on GF(p)^k. Reducing to ``[0, 2^b)`` by ``mod 2^b`` skews each
coordinate by at most ``2^b / p``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import sympy

MERSENNE_61 = (1 << 61) - 1


@dataclass(frozen=True)
class HashFamilySpec:
    domain_bits: int
    range_bits: int
    k: int
    p: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("independence k must be >= 1")
        if not sympy.isprime(self.p):
            raise ValueError(f"{self.p} is not prime")
        if self.p <= 1 << self.domain_bits or self.p <= 1 << self.range_bits:
            raise ValueError("field prime must exceed 2^domain_bits and 2^range_bits")

    @classmethod
    def for_sizes(cls, domain_bits: int, range_bits: int, k: int) -> "HashFamilySpec":
        """Mersenne prime 2^61-1 when it fits, else the smallest prime above 2^max(a,b)."""
        top = max(domain_bits, range_bits)
        p = MERSENNE_61 if top <= 60 else sympy.nextprime(1 << top)
        return cls(domain_bits, range_bits, k, p)

    @property
    def element_bits(self) -> int:
        return math.ceil(math.log2(self.p))

    @property
    def seed_bits(self) -> int:
        return self.k * self.element_bits


@dataclass(frozen=True)
class HashSeed:
    coefficients: tuple[int, ...]

    def to_bytes(self, spec: HashFamilySpec) -> bytes:
        width = (spec.element_bits + 7) // 8
        out = len(self.coefficients).to_bytes(4, "big")
        return out + b"".join(c.to_bytes(width, "big") for c in self.coefficients)

    @classmethod
    def from_bytes(cls, spec: HashFamilySpec, data: bytes) -> "HashSeed":
        count = int.from_bytes(data[:4], "big")
        width = (spec.element_bits + 7) // 8
        body = data[4:]
        if len(body) != count * width:
            raise ValueError("truncated seed")
        return cls(tuple(int.from_bytes(body[i * width:(i + 1) * width], "big") for i in range(count)))


def sample_seed(spec: HashFamilySpec, rng: random.Random) -> HashSeed:
    return HashSeed(tuple(rng.randrange(spec.p) for _ in range(spec.k)))


def field_eval(spec: HashFamilySpec, seed: HashSeed, key: int) -> int:
    if len(seed.coefficients) != spec.k:
        raise ValueError(f"seed has {len(seed.coefficients)} coefficients, expected {spec.k}")
    if not 0 <= key < 1 << spec.domain_bits:
        raise ValueError(f"key {key} outside [0, 2^{spec.domain_bits})")
    acc = 0
    for c in reversed(seed.coefficients):
        acc = (acc * key + c) % spec.p
    return acc


def eval_hash(spec: HashFamilySpec, seed: HashSeed, key: int) -> int:
    return field_eval(spec, seed, key) % (1 << spec.range_bits)


def pack_key(i: int, j: int, ell: int) -> int:
    """Key layout for index pairs: i * 2^ceil(log2(ell+1)) + j."""
    return (i << math.ceil(math.log2(ell + 1))) + j


class KWiseHash:
    """Convenience wrapper: a sampled member of a family mapped onto ``[0, size)``."""

    def __init__(self, spec: HashFamilySpec, seed: HashSeed, size: int):
        self.spec, self.seed, self.size = spec, seed, size

    @classmethod
    def sample(cls, domain_bits: int, size: int, k: int, rng: random.Random, range_bits: int = 40) -> "KWiseHash":
        spec = HashFamilySpec.for_sizes(domain_bits, range_bits, k)
        return cls(spec, sample_seed(spec, rng), size)

    def __call__(self, key: int) -> int:
        return eval_hash(self.spec, self.seed, key) % self.size
