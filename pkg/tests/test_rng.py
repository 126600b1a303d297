"""Portable SplitMix64 stream: determinism and scalar/vector agreement."""

import numpy as np

from neurochain.rng import SplitMix64, mix64, substream_seed


def test_deterministic():
    a = SplitMix64(123)
    b = SplitMix64(123)
    assert [a.next_u64() for _ in range(10)] == [b.next_u64() for _ in range(10)]


def test_mix64_is_u64():
    for z in (0, 1, 2**63, 2**64 - 1, 0xDEADBEEF):
        out = mix64(z)
        assert 0 <= out < 2**64


def test_floats_in_unit_interval():
    rng = SplitMix64(7)
    xs = rng.floats(10_000)
    assert xs.min() >= 0.0
    assert xs.max() < 1.0


def test_vectorized_matches_scalar():
    a = SplitMix64(987654321)
    b = SplitMix64(987654321)
    vec = a.floats(500)
    scalar = np.array([b.next_float() for _ in range(500)])
    assert np.array_equal(vec, scalar)


def test_vectorized_continues_stream():
    a = SplitMix64(5)
    b = SplitMix64(5)
    first = a.floats(100)
    second = a.floats(100)
    both = b.floats(200)
    assert np.array_equal(np.concatenate([first, second]), both)


def test_substreams_differ():
    seeds = {substream_seed(99, c) for c in range(64)}
    assert len(seeds) == 64
    r0 = SplitMix64(substream_seed(99, 0)).floats(8)
    r1 = SplitMix64(substream_seed(99, 1)).floats(8)
    assert not np.array_equal(r0, r1)
