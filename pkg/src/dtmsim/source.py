"""Entangled pair source: joint outcome statistics and pulsed emission.

The source emits photon pairs in a superposition of an early and a late
double pulse. Each receiver passes its photon through an unbalanced
interferometer, which maps the pair onto one of three arrival bins per side
(early, central, late) and one of two output ports. Port 2 carries the
long-arm minus sign at the source and at both receivers, which makes the
central-bin coincidences interfere with visibility one while all other bin
combinations stay phase independent.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigError
from .timebase import ClockConfig


class TimeBin(IntEnum):
    EARLY = 0
    CENTRAL = 1
    LATE = 2


PORTS = (1, 2)


@dataclass(frozen=True)
class PhaseConfig:
    """Interferometer phases in radians.

    source_phase: phase between the early and late source pulse
    receiver: long-arm phase per user name
    """

    source_phase: float = 0.0
    receiver: dict[str, float] = field(default_factory=dict)

    def phase_sum(self, user_a: str, user_b: str) -> float:
        """Interference argument alpha + beta - phi for one user pair."""
        return (
            self.receiver.get(user_a, 0.0)
            + self.receiver.get(user_b, 0.0)
            - self.source_phase
        )


class JointTable:
    """Probability table over the 36 (bin, port) x (bin, port) outcomes.

    Indexed as probs[a_bin, a_port - 1, b_bin, b_port - 1].
    """

    def __init__(self, probs: np.ndarray, phase_arg: float):
        self.probs = probs
        self.phase_arg = phase_arg

    def as_dict(self) -> dict:
        out = {}
        for a_bin in TimeBin:
            for a_port in PORTS:
                for b_bin in TimeBin:
                    for b_port in PORTS:
                        key = (a_bin.name, a_port, b_bin.name, b_port)
                        out[key] = float(self.probs[a_bin, a_port - 1, b_bin, b_port - 1])
        return out

    def bin_marginal(self) -> np.ndarray:
        """3x3 table over (a_bin, b_bin), ports summed out."""
        return self.probs.sum(axis=(1, 3))

    def central_port_conditional(self) -> np.ndarray:
        """2x2 port table conditioned on both photons in the central bin."""
        cc = self.probs[TimeBin.CENTRAL, :, TimeBin.CENTRAL, :]
        return cc / cc.sum()

    def side_marginal(self) -> np.ndarray:
        """3x2 (bin, port) marginal of one side; identical for both sides."""
        return self.probs.sum(axis=(2, 3))


def joint_distribution(
    receiver_phase_a: float, receiver_phase_b: float, source_phase: float = 0.0
) -> JointTable:
    """Joint (bin, port) distribution for one user pair.

    Early-early and late-late land with probability 1/8 each, early-late is
    forbidden, and the four central-central port combinations carry the
    interference term (1/16) * (1 + (-1)^(i+j) cos(alpha + beta - phi)).
    Mixed bin combinations take the remaining probability, 1/8 per
    combination, with ports equally likely throughout.
    """
    theta = receiver_phase_a + receiver_phase_b - source_phase
    cos_t = np.cos(theta)
    probs = np.zeros((3, 2, 3, 2))
    e, c, late = TimeBin.EARLY, TimeBin.CENTRAL, TimeBin.LATE
    for i in range(2):
        for j in range(2):
            sign = 1.0 if (i + j) % 2 == 0 else -1.0
            probs[e, i, e, j] = 1 / 32
            probs[late, i, late, j] = 1 / 32
            probs[c, i, c, j] = (1 + sign * cos_t) / 16
            probs[e, i, c, j] = 1 / 32
            probs[c, i, e, j] = 1 / 32
            probs[c, i, late, j] = 1 / 32
            probs[late, i, c, j] = 1 / 32
    return JointTable(probs, theta)


@dataclass(frozen=True)
class SourceConfig:
    """Pair generation brightness.

    mean_pairs_per_pulse: Poisson mean per frame and per wavelength channel
    pair. Values above 0.2 leave the regime where multi-pair emission is a
    small correction, so they trigger a warning rather than an error.
    """

    mean_pairs_per_pulse: float = 0.05

    def __post_init__(self):
        mu = self.mean_pairs_per_pulse
        if not 0.0 <= mu:
            raise ConfigError("source.mean_pairs_per_pulse: must be non-negative")
        if mu > 0.2:
            warnings.warn(
                f"mean_pairs_per_pulse={mu} exceeds 0.2; multi-pair emission "
                "is no longer a small correction",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ChannelAssignment:
    index: int                # wavelength channel pair (+index, -index)
    users: tuple[str, str]


@dataclass(frozen=True)
class ChannelMap:
    """Symmetric wavelength channel pairs assigned to user pairs."""

    capacity: int
    assignments: tuple[ChannelAssignment, ...]

    @property
    def user_pairs(self) -> list[tuple[str, str]]:
        return [a.users for a in self.assignments]

    def users(self) -> list[str]:
        seen: list[str] = []
        for a in self.assignments:
            for u in a.users:
                if u not in seen:
                    seen.append(u)
        return seen

    def swapped(self, index_a: int, index_b: int) -> "ChannelMap":
        """Channel map with the user pairs on two channel indices exchanged."""
        by_index = {a.index: a for a in self.assignments}
        if index_a not in by_index or index_b not in by_index:
            raise ConfigError(f"channel swap: no such channel index ({index_a}, {index_b})")
        new = []
        for a in self.assignments:
            if a.index == index_a:
                new.append(ChannelAssignment(index_a, by_index[index_b].users))
            elif a.index == index_b:
                new.append(ChannelAssignment(index_b, by_index[index_a].users))
            else:
                new.append(a)
        return ChannelMap(self.capacity, tuple(new))


def assign_channels(user_pairs: list[tuple[str, str]], capacity: int) -> ChannelMap:
    """Assign one symmetric channel pair (+k, -k) per user pair."""
    if len(user_pairs) > capacity:
        raise ConfigError(
            f"network.pairs: {len(user_pairs)} user pairs exceed the "
            f"channel capacity {capacity}"
        )
    seen_users: set[str] = set()
    for pair in user_pairs:
        a, b = pair
        if a == b:
            raise ConfigError(f"network.pairs: user '{a}' paired with itself")
        for u in pair:
            if u in seen_users:
                raise ConfigError(f"network.pairs: user '{u}' appears in two pairs")
            seen_users.add(u)
    assignments = tuple(
        ChannelAssignment(index=k + 1, users=(a, b))
        for k, (a, b) in enumerate(user_pairs)
    )
    return ChannelMap(capacity=capacity, assignments=assignments)


@dataclass
class PairBatch:
    """Photon pair emissions for one channel pair, struct-of-arrays.

    Timestamps are absolute picoseconds at the source output: frame start
    plus nominal bin offset plus the shared emission jitter of the pair
    (both photons of a pair are created at the same instant inside the
    pump pulse).
    """

    users: tuple[str, str]
    channel_index: int
    frame: np.ndarray    # int64
    a_bin: np.ndarray    # int8, TimeBin values
    a_port: np.ndarray   # int8, 1 or 2
    b_bin: np.ndarray
    b_port: np.ndarray
    a_time: np.ndarray   # int64 ps
    b_time: np.ndarray

    def __len__(self) -> int:
        return len(self.frame)


def _sample_one_pair(
    cfg: SourceConfig,
    clock: ClockConfig,
    assignment: ChannelAssignment,
    phases: PhaseConfig,
    n_frames: int,
    rng: np.random.Generator,
) -> PairBatch:
    table = joint_distribution(
        phases.receiver.get(assignment.users[0], 0.0),
        phases.receiver.get(assignment.users[1], 0.0),
        phases.source_phase,
    )
    n = rng.poisson(cfg.mean_pairs_per_pulse * n_frames)
    frames = np.sort(rng.integers(0, n_frames, size=n, dtype=np.int64))
    flat = table.probs.reshape(-1)
    cum = np.cumsum(flat)
    cum[-1] = 1.0  # guard against round-off at the top edge
    idx = np.searchsorted(cum, rng.random(n), side="right")
    a_bin, a_p, b_bin, b_p = np.unravel_index(idx, (3, 2, 3, 2))
    jitter = np.rint(rng.normal(0.0, clock.pulse_sigma_ps, size=n)).astype(np.int64)
    base = frames * clock.repetition_period_ps + jitter
    delay = clock.interferometer_delay_ps
    return PairBatch(
        users=assignment.users,
        channel_index=assignment.index,
        frame=frames,
        a_bin=a_bin.astype(np.int8),
        a_port=(a_p + 1).astype(np.int8),
        b_bin=b_bin.astype(np.int8),
        b_port=(b_p + 1).astype(np.int8),
        a_time=base + a_bin.astype(np.int64) * delay,
        b_time=base + b_bin.astype(np.int64) * delay,
    )


def sample_pairs(
    cfg: SourceConfig,
    clock: ClockConfig,
    channel_map: ChannelMap,
    phases: PhaseConfig,
    n_frames: int,
    seed: int | np.random.SeedSequence,
) -> dict[int, PairBatch]:
    """Sample pair emissions for every assigned channel pair.

    Returns a dict keyed by channel index. Each channel pair draws from its
    own seed stream derived from the master seed, so single channels can be
    regenerated (or generated in parallel) without touching the others.
    """
    if n_frames < 0:
        raise ConfigError("run.n_frames: must be non-negative")
    master = (
        seed
        if isinstance(seed, np.random.SeedSequence)
        else np.random.SeedSequence(seed)
    )
    children = master.spawn(len(channel_map.assignments))
    out: dict[int, PairBatch] = {}
    for assignment, child in zip(channel_map.assignments, children):
        rng = np.random.default_rng(child)
        out[assignment.index] = _sample_one_pair(
            cfg, clock, assignment, phases, n_frames, rng
        )
    return out
