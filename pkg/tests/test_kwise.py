import itertools
import math
import random
from collections import Counter

import pytest

from hybridnq.kwise import (MERSENNE_61, HashFamilySpec, HashSeed, KWiseHash, eval_hash, field_eval, pack_key,
                            sample_seed)


def spec(k, p=17, a=4, b=4):
    return HashFamilySpec(a, b, k, p)


def test_sample_seed_shapes():
    s = sample_seed(spec(1), random.Random(0))
    assert len(s.coefficients) == 1 and 0 <= s.coefficients[0] < 17
    big = HashFamilySpec.for_sizes(40, 40, 32)
    assert big.p == MERSENNE_61
    assert big.seed_bits == 32 * 61


def test_eval_examples():
    assert eval_hash(spec(1), HashSeed((5,)), 9) == 5
    assert eval_hash(spec(2), HashSeed((3, 2)), 4) == 11


def test_key_out_of_range():
    with pytest.raises(ValueError):
        eval_hash(spec(2), HashSeed((1, 1)), 16)
    with pytest.raises(ValueError):
        eval_hash(spec(2), HashSeed((1,)), 3)


def test_spec_validation():
    with pytest.raises(ValueError):
        HashFamilySpec(4, 4, 2, 15)       # not prime
    with pytest.raises(ValueError):
        HashFamilySpec(5, 4, 2, 17)       # p <= 2^a
    with pytest.raises(ValueError):
        HashFamilySpec(4, 4, 0, 17)
    assert HashFamilySpec.for_sizes(70, 10, 2).p > 1 << 70


def test_pairwise_uniform_p17():
    s = HashFamilySpec(4, 2, 2, 17)
    joint = Counter((field_eval(s, HashSeed(c), 0), field_eval(s, HashSeed(c), 1))
                    for c in itertools.product(range(17), repeat=2))
    assert len(joint) == 17 * 17 and set(joint.values()) == {1}


@pytest.mark.parametrize("p", [2, 3, 5, 7, 11, 13])
@pytest.mark.parametrize("k", [1, 2, 3])
def test_exhaustive_kwise_small(p, k):
    a = max(0, math.floor(math.log2(p - 1))) if p > 2 else 0
    s = HashFamilySpec(a, 0, k, p)
    keys = list(range(min(p, 1 << a)))
    for combo in itertools.combinations(keys, min(k, len(keys))):
        joint = Counter(tuple(field_eval(s, HashSeed(c), x) for x in combo)
                        for c in itertools.product(range(p), repeat=k))
        assert len(joint) == p ** len(combo)
        assert len(set(joint.values())) == 1


def test_seed_bytes_roundtrip():
    s = HashFamilySpec.for_sizes(20, 40, 5)
    seed = sample_seed(s, random.Random(3))
    blob = seed.to_bytes(s)
    assert len(blob) == 4 + 5 * 8
    assert HashSeed.from_bytes(s, blob) == seed
    with pytest.raises(ValueError):
        HashSeed.from_bytes(s, blob[:-1])


def test_range_bias_small():
    s = HashFamilySpec(8, 3, 2, 257)
    rng = random.Random(11)
    counts = Counter(eval_hash(s, sample_seed(s, rng), 77) for _ in range(200_000))
    for v in range(8):
        freq = counts[v] / 200_000
        assert abs(freq - 1 / 8) <= 8 / 257 + 0.01


def test_pack_key_and_wrapper():
    assert pack_key(3, 2, 4) == 3 * 8 + 2
    assert pack_key(0, 0, 1) == 0
    h = KWiseHash.sample(10, 7, 3, random.Random(0))
    assert all(0 <= h(x) < 7 for x in range(1024))
