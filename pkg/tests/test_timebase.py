import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtmsim import ClockConfig, ConfigError, fold, fold_array, histogram

CLOCK = ClockConfig()


def test_fold_zero():
    coord = fold(0, CLOCK)
    assert (coord.frame_index, coord.offset_ps) == (0, 0)


def test_fold_exact_boundary():
    coord = fold(9100, CLOCK)
    assert (coord.frame_index, coord.offset_ps) == (1, 0)


def test_fold_mid_frame():
    coord = fold(21745, CLOCK)
    assert (coord.frame_index, coord.offset_ps) == (2, 3545)


@given(
    timestamp=st.integers(min_value=0, max_value=10**15),
    period=st.integers(min_value=1000, max_value=50_000),
)
def test_fold_recomposes_exactly(timestamp, period):
    clock = ClockConfig(
        repetition_period_ps=period,
        interferometer_delay_ps=max(1, (period - 302) // 3),
        pulse_fwhm_ps=300,
    )
    coord = fold(timestamp, clock)
    assert coord.frame_index * period + coord.offset_ps == timestamp
    assert 0 <= coord.offset_ps < period


@given(st.lists(st.integers(min_value=0, max_value=10**13), max_size=300))
def test_fold_array_matches_scalar(times):
    frames, offsets = fold_array(np.array(times, dtype=np.int64), CLOCK)
    for t, f, o in zip(times, frames, offsets):
        coord = fold(t, CLOCK)
        assert (coord.frame_index, coord.offset_ps) == (f, o)


def test_bin_offsets():
    assert [CLOCK.bin_offset(b) for b in range(3)] == [0, 3030, 6060]


def test_clock_validation():
    with pytest.raises(ConfigError):
        ClockConfig(repetition_period_ps=0)
    with pytest.raises(ConfigError):
        ClockConfig(interferometer_delay_ps=-5)
    # three bins plus guard must fit inside one frame
    with pytest.raises(ConfigError):
        ClockConfig(repetition_period_ps=6000, interferometer_delay_ps=3030)


def test_histogram_empty():
    hist = histogram(np.array([], dtype=np.int64), CLOCK, 25)
    assert hist.total == 0
    assert len(hist.counts) == 9100 // 25
    assert not hist.counts.any()


def test_histogram_single_offset():
    times = np.full(137, 3030, dtype=np.int64) + np.arange(137) * 9100
    hist = histogram(times, CLOCK, 10)
    assert hist.counts[3030 // 10] == 137
    assert hist.total == 137


def test_histogram_bin_width_must_divide_period():
    with pytest.raises(ConfigError):
        histogram(np.array([0], dtype=np.int64), CLOCK, 33)


@given(
    st.lists(st.integers(min_value=0, max_value=10**12), max_size=400),
    st.sampled_from([4, 10, 25, 50, 100, 175, 350, 455, 9100]),
)
def test_histogram_conserves_counts(times, width):
    hist = histogram(np.array(times, dtype=np.int64), CLOCK, width)
    assert hist.total == len(times)
    assert len(hist.counts) == 9100 // width


def test_histogram_three_peak_stream():
    # jittered arrivals in all three bins fold back onto the bin offsets
    rng = np.random.default_rng(11)
    n = 30_000
    frames = rng.integers(1, 10_000, size=n) * 9100
    offsets = rng.choice([0, 3030, 6060], size=n, p=[0.25, 0.5, 0.25])
    jitter = np.rint(rng.normal(0.0, 127.0, size=n)).astype(np.int64)
    hist = histogram(frames + offsets + jitter, CLOCK, 25)

    top = np.argsort(hist.counts)[-3:] * 25 + 12.5
    for peak in sorted(top):
        distances = [
            min(abs(peak - c), 9100 - abs(peak - c)) for c in (0, 3030, 6060)
        ]
        assert min(distances) <= 130


def test_histogram_csv(tmp_path):
    times = np.array([0, 3030, 3040, 9100], dtype=np.int64)
    hist = histogram(times, CLOCK, 25)
    path = tmp_path / "hist.csv"
    hist.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "offset_ps,count"
    assert len(lines) == 1 + 9100 // 25
    assert lines[1] == "0,2"  # offsets 0 and 9100 share the first bin
