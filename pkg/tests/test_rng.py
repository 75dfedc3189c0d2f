import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticefarm.rng import RngKey, philox, seed_words, uniforms

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expect", KAT)
def test_philox_known_answers(kern, ctr, key, expect):
    assert tuple(int(x) for x in kern.philox4x32(*ctr, *key)) == expect


def test_philox_module_wrapper():
    assert philox(*KAT[0][:2]) == KAT[0][2]


def test_uniform_pair_bit_construction(kern):
    """Two 53-bit doubles built from the word pairs of one Philox block."""
    o = [int(x) for x in kern.philox4x32(7, 1, 2, 3, 11, 0)]
    want = []
    for hi, lo in ((o[0], o[1]), (o[2], o[3])):
        x = (hi << 32) | lo
        want.append(((x >> 11) + 0.5) * 2.0**-53)
    got = kern.uniform_pair(7, 1, 2, 3, 11, 0)
    assert tuple(float(v) for v in got) == tuple(want)


def test_seed_words_split():
    assert seed_words(0x0123456789ABCDEF) == (0x89ABCDEF, 0x01234567)


def test_key_validation():
    with pytest.raises(ValueError):
        RngKey(-1)
    with pytest.raises(ValueError):
        RngKey(2**64)
    with pytest.raises(ValueError):
        RngKey(1, site=2**32)
    assert RngKey(5, draw=3).advance(4).draw == 7


def test_uniforms_deterministic_and_in_range():
    k = RngKey(99, site=12, mu=3, sweep=4)
    a = uniforms(k, 1001)
    assert a == uniforms(k, 1001)
    arr = np.array(a)
    assert arr.min() > 0 and arr.max() < 1
    assert abs(arr.mean() - 0.5) < 5 * np.sqrt(1 / 12 / arr.size)


def test_uniforms_stream_continues_across_draw_blocks():
    k = RngKey(3, site=1)
    assert uniforms(k, 6)[2:] == uniforms(k.advance(1), 4)


@settings(max_examples=50, deadline=None)
@given(a=st.tuples(*[st.integers(0, 2**32 - 1)] * 4), b=st.tuples(*[st.integers(0, 2**32 - 1)] * 4),
       seed=st.integers(0, 2**64 - 1))
def test_distinct_counters_give_distinct_blocks(a, b, seed):
    k = seed_words(seed)
    if a != b:
        assert philox(a, k) != philox(b, k)
    else:
        assert philox(a, k) == philox(b, k)
