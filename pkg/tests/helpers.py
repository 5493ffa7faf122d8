"""Shared builders for the test suite: small scenario dicts and a seeded
bootstrap-alignment trial with known ground truth."""
import numpy as np

from dtmsim import ClockConfig, joint_distribution
from dtmsim.demux import BinTable, align, classify_array
from dtmsim.keyproc import match


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def scenario_dict(**overrides) -> dict:
    """A fast two-user scenario: short links, no dead time, half a second.

    Gives a few thousand coincidences in well under a second of wall time.
    Sections passed as keyword arguments are merged over the defaults.
    """
    base = {
        "clock": {},
        "source": {"mean_pairs_per_pulse": 0.02},
        "network": {"pairs": [["alice", "bob"]], "capacity": 2},
        "phases": {"source": 0.0, "receivers": {"alice": 0.0, "bob": 0.0}},
        "links": {
            "alice": {"length_km": 1.0, "excess_loss_db": 3.0},
            "bob": {"length_km": 2.0, "excess_loss_db": 3.0},
        },
        "detectors": {
            "alice": {"efficiency": [0.25, 0.25], "dead_time_ps": 0},
            "bob": {"efficiency": [0.25, 0.25], "dead_time_ps": 0},
        },
        "run": {
            "duration_s": 0.5,
            "accumulation_interval_s": 0.25,
            "seed": 7,
            "engine": "thinned",
            # links differ by 5 us; no need to search the full +-2 ms
            "sync_window_ps": 20_000_000,
        },
    }
    return deep_merge(base, overrides)


def alignment_trial(seed: int, n_pairs: int = 160, frame_stride: int = 3):
    """One seeded bootstrap-alignment run against known ground truth.

    Coincidences are drawn from the joint outcome table at random receiver
    phases. The local receiver is delay multiplexed: photons leaving one
    (randomly chosen) interferometer port pick up the multiplexing delay.
    Its window table either locks onto the undelayed comb or, half the
    time, onto the delayed one, which is the failure mode the bootstrap
    has to detect. The partner receiver is not multiplexed.

    Returns (AssignmentResult, expected_mapping, expected_shifted, n_used).
    """
    rng = np.random.default_rng(seed)
    clock = ClockConfig()
    delta = clock.interferometer_delay_ps
    dtm_delay = delta // 2
    alpha = float(rng.uniform(0.0, 2.0 * np.pi))
    beta = float(rng.uniform(0.0, 2.0 * np.pi))
    table = joint_distribution(alpha, beta, 0.0)
    flat = table.probs.reshape(-1)
    idx = rng.choice(flat.size, size=n_pairs, p=flat / flat.sum())
    a_bin, a_p, b_bin, _ = np.unravel_index(idx, (3, 2, 3, 2))
    a_port = (a_p + 1).astype(np.int8)
    true_delayed = int(rng.integers(1, 3))
    lock_shifted = bool(rng.integers(0, 2))

    # sparse frames so an event that slips a frame finds no partner
    frames = np.arange(n_pairs, dtype=np.int64) * frame_stride
    base = frames * clock.repetition_period_ps
    sigma = clock.pulse_sigma_ps
    t_a = (
        base
        + a_bin.astype(np.int64) * delta
        + np.where(a_port == true_delayed, dtm_delay, 0)
        + np.rint(rng.normal(0.0, sigma, n_pairs)).astype(np.int64)
    )
    t_b = (
        base
        + b_bin.astype(np.int64) * delta
        + np.rint(rng.normal(0.0, sigma, n_pairs)).astype(np.int64)
    )

    table_a = BinTable.build(
        clock, dtm_delay_ps=dtm_delay,
        phase_ps=-dtm_delay if lock_shifted else 0,
    )
    table_b = BinTable.build(clock)
    ca = classify_array(t_a, table_a)
    cb = classify_array(t_b, table_b)
    ka, kb = ca.classified, cb.classified
    ia, ib = match(ca.frame[ka], cb.frame[kb])

    result = align(
        ca.vdet[ka][ia], ca.time_bin[ka][ia], cb.time_bin[kb][ib],
        delayed_port=true_delayed,
    )
    other = 1 if true_delayed == 2 else 2
    if lock_shifted:
        expected = {0: true_delayed, 1: other}
    else:
        expected = {0: other, 1: true_delayed}
    return result, expected, lock_shifted, len(ia)
