import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dtmsim import (
    ClockConfig,
    ConfigError,
    PhaseConfig,
    SourceConfig,
    assign_channels,
    joint_distribution,
    sample_pairs,
)

import oracles

phase = st.floats(min_value=-10.0, max_value=10.0)


def test_central_port_probabilities_aligned_phases():
    table = joint_distribution(0.0, 0.0, 0.0)
    cond = table.central_port_conditional()
    assert cond[0, 0] == pytest.approx(0.5)
    assert cond[1, 1] == pytest.approx(0.5)
    assert cond[0, 1] == pytest.approx(0.0, abs=1e-15)
    assert cond[1, 0] == pytest.approx(0.0, abs=1e-15)


def test_central_port_probabilities_quadrature():
    table = joint_distribution(np.pi / 2, 0.0, 0.0)
    assert table.central_port_conditional() == pytest.approx(np.full((2, 2), 0.25))


def test_cross_bin_combinations():
    table = joint_distribution(0.7, 1.9, 0.4)
    bins = table.bin_marginal()
    early, central, late = 0, 1, 2
    assert bins[early, late] == pytest.approx(0.0, abs=1e-15)
    assert bins[late, early] == pytest.approx(0.0, abs=1e-15)
    assert bins[early, early] == pytest.approx(1 / 8)
    assert bins[late, late] == pytest.approx(1 / 8)
    assert bins[central, central] == pytest.approx(1 / 4)


def test_matches_amplitude_enumeration_frozen_cases():
    for alpha, beta, phi in [
        (0.0, 0.0, 0.0),
        (np.pi / 2, 0.0, 0.0),
        (0.3, -1.2, 2.5),
        (5.1, 4.4, -0.9),
    ]:
        table = joint_distribution(alpha, beta, phi)
        reference = oracles.amplitude_joint_table(alpha, beta, phi)
        assert np.max(np.abs(table.probs - reference)) < 1e-12


@given(alpha=phase, beta=phase, phi=phase)
def test_matches_amplitude_enumeration(alpha, beta, phi):
    table = joint_distribution(alpha, beta, phi)
    reference = oracles.amplitude_joint_table(alpha, beta, phi)
    assert np.max(np.abs(table.probs - reference)) < 1e-12


@given(alpha=phase, beta=phase, phi=phase)
def test_normalization_and_port_marginals(alpha, beta, phi):
    table = joint_distribution(alpha, beta, phi)
    assert abs(table.probs.sum() - 1.0) < 1e-12
    assert np.all(table.probs >= 0)
    # either port is equally likely for every bin on both sides
    per_bin = table.probs.sum(axis=(2, 3))  # (a_bin, a_port)
    np.testing.assert_allclose(per_bin[:, 0], per_bin[:, 1], atol=1e-12)
    per_bin_b = table.probs.sum(axis=(0, 1))
    np.testing.assert_allclose(per_bin_b[:, 0], per_bin_b[:, 1], atol=1e-12)


@given(alpha=phase, beta=phase, phi=phase)
def test_port_parity_flips_interference_sign(alpha, beta, phi):
    probs = joint_distribution(alpha, beta, phi).probs
    central = 1
    even = probs[central, 0, central, 0]
    odd = probs[central, 0, central, 1]
    # the cosine term cancels when an even and an odd cell are added
    assert even + odd == pytest.approx(1 / 8, abs=1e-12)
    assert probs[central, 1, central, 1] == pytest.approx(even, abs=1e-12)
    assert probs[central, 1, central, 0] == pytest.approx(odd, abs=1e-12)


def test_phase_sum_convention():
    phases = PhaseConfig(source_phase=0.25, receiver={"a": 1.0, "b": 0.5})
    assert phases.phase_sum("a", "b") == pytest.approx(1.25)


def test_source_config_validation():
    with pytest.raises(ConfigError):
        SourceConfig(mean_pairs_per_pulse=-0.01)
    with pytest.warns(UserWarning):
        SourceConfig(mean_pairs_per_pulse=0.3)


def test_assign_channels_two_pairs():
    cmap = assign_channels([("alice", "bob"), ("carol", "dave")], 2)
    assert [(a.index, a.users) for a in cmap.assignments] == [
        (1, ("alice", "bob")),
        (2, ("carol", "dave")),
    ]


def test_assign_channels_empty():
    assert assign_channels([], 4).assignments == ()


def test_assign_channels_errors():
    pairs3 = [("a", "b"), ("c", "d"), ("e", "f")]
    with pytest.raises(ConfigError):
        assign_channels(pairs3, 2)
    with pytest.raises(ConfigError):
        assign_channels([("a", "a")], 2)
    with pytest.raises(ConfigError):
        assign_channels([("a", "b"), ("b", "c")], 2)


def test_channel_map_swap():
    cmap = assign_channels([("alice", "bob"), ("carol", "dave")], 2)
    swapped = cmap.swapped(1, 2)
    assert swapped.assignments[0].users == ("carol", "dave")
    assert swapped.assignments[0].index == 1
    assert swapped.assignments[1].users == ("alice", "bob")
    with pytest.raises(ConfigError):
        cmap.swapped(1, 9)


def _sample(mu, n_frames, seed=3, theta=0.0):
    cmap = assign_channels([("alice", "bob")], 1)
    batches = sample_pairs(
        SourceConfig(mean_pairs_per_pulse=mu),
        ClockConfig(),
        cmap,
        PhaseConfig(receiver={"alice": theta, "bob": 0.0}),
        n_frames,
        seed,
    )
    return batches[1]


def test_sample_zero_brightness():
    assert len(_sample(0.0, 100_000)) == 0


def test_sample_pair_count_poisson():
    n_frames = 1_000_000
    batch = _sample(0.05, n_frames)
    mean = 0.05 * n_frames
    assert abs(len(batch) - mean) <= 3 * np.sqrt(mean)


def test_sample_outcome_frequencies():
    batch = _sample(0.2, 1_000_000, seed=12, theta=0.8)
    table = joint_distribution(0.8, 0.0, 0.0)
    n = len(batch)
    counts = np.zeros((3, 2, 3, 2))
    np.add.at(
        counts,
        (batch.a_bin, batch.a_port - 1, batch.b_bin, batch.b_port - 1),
        1,
    )
    freq = counts / n
    sigma = np.sqrt(table.probs * (1 - table.probs) / n)
    assert np.all(np.abs(freq - table.probs) <= 3 * sigma + 1e-9)


def test_sample_times_follow_bins():
    batch = _sample(0.05, 50_000)
    # both photons share the emission instant: the bin offsets alone
    # separate their timestamps
    np.testing.assert_array_equal(
        batch.a_time - batch.a_bin.astype(np.int64) * 3030,
        batch.b_time - batch.b_bin.astype(np.int64) * 3030,
    )
    assert np.all(np.diff(batch.frame) >= 0)
    offsets = batch.a_time - batch.frame * 9100 - batch.a_bin.astype(np.int64) * 3030
    assert np.std(offsets) == pytest.approx(300 / 2.355, rel=0.05)


def test_sample_deterministic():
    one = _sample(0.05, 20_000, seed=42)
    two = _sample(0.05, 20_000, seed=42)
    np.testing.assert_array_equal(one.a_time, two.a_time)
    np.testing.assert_array_equal(one.b_port, two.b_port)


def test_sample_channels_independent():
    cmap = assign_channels([("alice", "bob"), ("carol", "dave")], 2)
    batches = sample_pairs(
        SourceConfig(mean_pairs_per_pulse=0.05),
        ClockConfig(),
        cmap,
        PhaseConfig(),
        50_000,
        99,
    )
    assert set(batches) == {1, 2}
    assert batches[1].users == ("alice", "bob")
    assert batches[2].users == ("carol", "dave")
    # distinct channel seeds: identical statistics, different samples
    assert len(batches[1]) != 0
    assert batches[1].a_time[:50].tolist() != batches[2].a_time[:50].tolist()
