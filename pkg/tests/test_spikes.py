"""Spike containers, CSV schemas, and the feature primitives against
brute-force oracles."""

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurochain.errors import ConfigError, DataError
from neurochain.spikes import (
    ChannelSet,
    SpikeBlock,
    SpikeEvent,
    SpikeTrain,
    bin_counts,
    firing_rate,
    firing_rate_series,
    group_into_trains,
    read_position_csv,
    read_spike_csv,
    select_channels,
    synchrony,
    write_position_csv,
    write_spike_csv,
)
from neurochain.timebase import SpikeTimestamp, encode_timestamp

from conftest import random_train


# -- brute-force oracles (kept deliberately dumb) ---------------------------

def oracle_bin_counts(times, t0, t1, width):
    counts = []
    k = 0
    while t0 + k * width < t1:
        lo = t0 + k * width
        hi = min(t0 + (k + 1) * width, t1)
        counts.append(sum(1 for x in times if lo <= x < hi))
        k += 1
    return counts or [0]


def oracle_rate(times, t, w):
    return sum(1 for x in times if t - w <= x < t) / w


def oracle_sync(a_times, b_times, t, w, d):
    in_win = [x for x in a_times if t - w <= x < t]
    c = sum(1 for x in in_win if any(abs(x - y) <= d for y in b_times))
    na = len(in_win)
    nb = sum(1 for y in b_times if t - w <= y < t)
    denom = max(na, nb)
    return c / denom if denom else 0.0


# -- containers --------------------------------------------------------------

def test_train_requires_strict_monotonicity():
    with pytest.raises(DataError):
        SpikeTrain(0, [0.2, 0.1])


def test_train_rejects_duplicates():
    with pytest.raises(DataError, match="duplicate"):
        SpikeTrain(0, [0.1, 0.1])


def test_train_rejects_sub_resolution_duplicates():
    t = 1.0
    with pytest.raises(DataError, match="duplicate"):
        SpikeTrain(0, [t, t + 1e-12])  # same raw value after encoding


def test_block_containment_and_order():
    ev = [SpikeEvent(0, encode_timestamp(0.5)), SpikeEvent(1, encode_timestamp(0.7))]
    block = SpikeBlock(start=encode_timestamp(0.0), end=encode_timestamp(1.0),
                       events=tuple(ev))
    assert len(block) == 2
    with pytest.raises(DataError):
        SpikeBlock(start=encode_timestamp(0.6), end=encode_timestamp(1.0),
                   events=tuple(ev))
    with pytest.raises(DataError):
        SpikeBlock(start=encode_timestamp(0.0), end=encode_timestamp(1.0),
                   events=tuple(reversed(ev)))


def test_select_channels():
    events = tuple(SpikeEvent(c, encode_timestamp(0.1 * (i + 1)))
                   for i, c in enumerate([0, 1, 2, 0, 1]))
    block = SpikeBlock(start=SpikeTimestamp(0), end=encode_timestamp(1.0),
                       events=events)
    all_keep = select_channels(block, ChannelSet([0, 1, 2]))
    assert all_keep.events == block.events
    none = select_channels(block, ChannelSet([]))
    assert none.events == () and none.start == block.start
    only0 = select_channels(block, ChannelSet([0]))
    assert [e.channel for e in only0.events] == [0, 0]
    assert [e.time for e in only0.events] == [events[0].time, events[3].time]


def test_select_channels_intersection_property():
    rng = np.random.default_rng(3)
    events = tuple(SpikeEvent(int(rng.integers(0, 5)), encode_timestamp(float(t)))
                   for t in np.sort(rng.uniform(0, 1, 40)))
    block = SpikeBlock(start=SpikeTimestamp(0), end=encode_timestamp(2.0),
                       events=events)
    a, b = ChannelSet([0, 1, 3]), ChannelSet([1, 3, 4])
    twice = select_channels(select_channels(block, a), b)
    once = select_channels(block, a.intersection(b))
    assert twice.events == once.events


def test_channel_set_validation():
    with pytest.raises(ConfigError):
        ChannelSet([1, 1])
    cs = ChannelSet([0, 5])
    with pytest.raises(ConfigError):
        cs.validate_for(4)


# -- binning / rates ----------------------------------------------------------

def test_bin_counts_hand_example():
    train = SpikeTrain(0, [0.1, 0.2, 0.3])
    assert list(bin_counts(train, 0.0, 0.4, 0.2)) == [2, 1]


def test_bin_counts_empty_train():
    train = SpikeTrain(0, [])
    assert list(bin_counts(train, 0.0, 1.0, 0.3)) == [0, 0, 0, 0]


def test_bin_counts_conservation():
    rng = np.random.default_rng(4)
    for _ in range(50):
        train = random_train(rng)
        t0, t1 = 1.0, 9.0
        counts = bin_counts(train, t0, t1, float(rng.uniform(0.05, 3.0)))
        assert counts.sum() == train.count_in(t0, t1)


def test_bin_counts_oracle():
    rng = np.random.default_rng(5)
    for _ in range(200):
        train = random_train(rng)
        t0 = float(rng.uniform(0, 2))
        t1 = t0 + float(rng.uniform(0.1, 8))
        width = float(rng.uniform(0.05, 2.0))
        got = list(bin_counts(train, t0, t1, width))
        want = oracle_bin_counts(train.times_s, t0, t1, width)
        assert got == want


def test_firing_rate_examples():
    train = SpikeTrain(0, np.arange(10) / 10.0)
    assert firing_rate(train, 1.0, 1.0) == 10.0
    assert firing_rate(SpikeTrain(0, []), 1.0, 1.0) == 0.0


def test_firing_rate_times_window_is_integer():
    rng = np.random.default_rng(6)
    for _ in range(100):
        train = random_train(rng)
        t = float(rng.uniform(0, 11))
        w = float(rng.uniform(0.05, 3))
        r = firing_rate(train, t, w)
        assert abs(r * w - round(r * w)) < 1e-9


def test_firing_rate_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        train = random_train(rng)
        t = float(rng.uniform(-1, 12))
        w = float(rng.uniform(0.05, 4))
        assert firing_rate(train, t, w) == oracle_rate(train.times_s, t, w)


def test_firing_rate_series_matches_scalar():
    rng = np.random.default_rng(8)
    train = random_train(rng, n=50)
    grid = np.linspace(0, 10, 101)
    series = firing_rate_series(train, grid, 0.25)
    for i, t in enumerate(grid):
        assert series[i] == firing_rate(train, float(t), 0.25)


# -- synchrony ----------------------------------------------------------------

def test_synchrony_identical_trains():
    times = [0.1, 0.25, 0.4, 0.6]
    a = SpikeTrain(0, times)
    b = SpikeTrain(1, times)
    assert synchrony(a, b, t_s=1.0, window_s=1.0, delta_s=0.01) == 1.0


def test_synchrony_separated_trains():
    a = SpikeTrain(0, [0.1, 0.3, 0.5])
    b = SpikeTrain(1, [0.2, 0.4])
    assert synchrony(a, b, t_s=1.0, window_s=1.0, delta_s=0.01) == 0.0


def test_synchrony_oracle():
    rng = np.random.default_rng(9)
    for _ in range(200):
        a = random_train(rng, channel=0)
        b = random_train(rng, channel=1)
        t = float(rng.uniform(0, 11))
        w = float(rng.uniform(0.1, 5))
        d = float(rng.uniform(0, 0.2))
        got = synchrony(a, b, t, w, d)
        want = oracle_sync(a.times_s, b.times_s, t, w, d)
        assert got == want


def test_synchrony_symmetric_for_sparse_equal_count_trains():
    # With inter-spike gaps > 2*delta in both trains the coincidence map is
    # a bijection, so equal window counts give exact symmetry.
    rng = np.random.default_rng(10)
    delta = 0.02
    for _ in range(50):
        base = np.sort(rng.uniform(1, 9, size=12))
        base = base[np.diff(np.concatenate([[-1], base])) > 5 * delta]
        jitter = rng.uniform(-delta, delta, size=base.size) * rng.integers(0, 2, base.size)
        a = SpikeTrain(0, base)
        b = SpikeTrain(1, np.sort(base + jitter))
        if len(a) != len(b):
            continue
        sa = synchrony(a, b, 10.0, 10.0, delta)
        sb = synchrony(b, a, 10.0, 10.0, delta)
        assert sa == pytest.approx(sb, abs=1e-12)


@given(st.floats(min_value=0.05, max_value=2.0))
@settings(max_examples=30)
def test_synchrony_range(w):
    rng = np.random.default_rng(11)
    a = random_train(rng, channel=0, n=30)
    b = random_train(rng, channel=1, n=30)
    s = synchrony(a, b, 5.0, w, 0.002)
    assert 0.0 <= s <= 1.0


# -- spike CSV -----------------------------------------------------------------

def test_spike_csv_two_rows():
    csv = read_spike_csv(io.StringIO("channel,time_s\n0,0.002000\n1,0.002500\n"))
    assert len(csv) == 2
    assert {e.channel for e in csv.events} == {0, 1}
    assert csv.channel_count == 2


def test_spike_csv_empty():
    csv = read_spike_csv(io.StringIO("channel,time_s\n"))
    assert len(csv) == 0
    assert csv.channel_count == 0


def test_spike_csv_round_trip():
    rng = np.random.default_rng(12)
    trains = [random_train(rng, channel=c, n=20) for c in range(4)]
    buf = io.StringIO()
    rows = write_spike_csv(buf, trains)
    buf.seek(0)
    csv = read_spike_csv(buf)
    assert len(csv) == rows == sum(len(t) for t in trains)
    grouped = group_into_trains(csv)
    for orig, back in zip(trains, grouped):
        assert np.allclose(back.times_s, orig.times_s, atol=1e-6)


def test_spike_csv_malformed_row_carries_line_number():
    with pytest.raises(DataError, match="line 3"):
        read_spike_csv(io.StringIO("channel,time_s\n0,0.1\nbogus\n"))


def test_spike_csv_bad_header():
    with pytest.raises(DataError, match="line 1"):
        read_spike_csv(io.StringIO("time,chan\n"))


def test_spike_csv_non_monotonic_channel():
    data = "channel,time_s\n0,0.200000\n1,0.100000\n0,0.150000\n"
    with pytest.raises(DataError, match="channel 0"):
        read_spike_csv(io.StringIO(data))


def test_spike_csv_channel_count_override():
    csv = read_spike_csv(io.StringIO("channel,time_s\n2,0.5\n"), expected_channels=33)
    assert csv.channel_count == 33
    with pytest.raises(ConfigError):
        read_spike_csv(io.StringIO("channel,time_s\n7,0.5\n"), expected_channels=4)


# -- position CSV ----------------------------------------------------------------

def test_position_csv_round_trip():
    index = np.array([1.0, 2.5, 3.25])
    thumb = np.array([0.5, 0.75, 1.0])
    buf = io.StringIO()
    n = write_position_csv(buf, index, thumb)
    assert n == 3
    buf.seek(0)
    start, i2, t2 = read_position_csv(buf)
    assert start == 0.0
    assert np.allclose(i2, np.round(index, 3))
    assert np.allclose(t2, np.round(thumb, 3))


def test_position_csv_rejects_wrong_rate():
    text = "time_s,index_mm,thumb_mm\n0.000000,1.000,1.000\n0.005000,1.000,1.000\n"
    with pytest.raises(DataError, match="500 Hz"):
        read_position_csv(io.StringIO(text))
