"""Single photon detectors and the detector time multiplexing combiner.

Detectors convert arrivals with a fixed efficiency, add Poissonian dark
counts, and enforce a non-paralyzable dead time on the merged event stream.
The DTM combiner delays one interferometer output by a fixed offset and
merges both outputs into a single (multimode) fiber feeding one detector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .timebase import PS_PER_SECOND

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

ORIGIN_SIGNAL = 0
ORIGIN_DARK = 1

# Default extra connection loss: together with the 5% combiner insertion
# loss this puts the DTM path survival at sqrt(0.9) per receiver, i.e. a
# coincidence (and therefore sifted-rate) penalty of 10% for a user pair
# with a combiner on both sides.
DEFAULT_EXTRA_CONNECTION_LOSS = 1.0 - math.sqrt(0.9) / 0.95


@dataclass(frozen=True)
class DetectorConfig:
    """One physical single photon detector.

    mode_penalty scales the efficiency for arrivals flagged as multimode
    (free-space coupled detectors lose part of the multimode light; fiber
    coupled modules with large active area keep mode_penalty = 1).
    """

    efficiency: float = 0.2
    dead_time_ps: int = 10_000_000
    dark_rate_hz: float = 0.0
    mode_penalty: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("detector.efficiency: must be in [0, 1]")
        if self.dead_time_ps < 0:
            raise ConfigError("detector.dead_time_ps: must be non-negative")
        if self.dark_rate_hz < 0:
            raise ConfigError("detector.dark_rate_hz: must be non-negative")
        if not 0.0 <= self.mode_penalty <= 1.0:
            raise ConfigError("detector.mode_penalty: must be in [0, 1]")


@dataclass(frozen=True)
class DtmConfig:
    """Detector time multiplexing of the two interferometer outputs.

    The delayed port's events are shifted by delay_offset_ps before the
    merge; every event passing the combiner is dropped independently with
    the combiner insertion loss and the extra connection loss.
    """

    delay_offset_ps: int = 1515
    combiner_insertion_loss: float = 0.05
    extra_connection_loss: float = DEFAULT_EXTRA_CONNECTION_LOSS
    delayed_port: int = 2

    def __post_init__(self):
        if self.delay_offset_ps <= 0:
            raise ConfigError("dtm.delay_offset_ps: must be positive")
        if not 0.0 <= self.combiner_insertion_loss < 1.0:
            raise ConfigError("dtm.combiner_insertion_loss: must be in [0, 1)")
        if not 0.0 <= self.extra_connection_loss < 1.0:
            raise ConfigError("dtm.extra_connection_loss: must be in [0, 1)")
        if self.delayed_port not in (1, 2):
            raise ConfigError("dtm.delayed_port: must be 1 or 2")

    @property
    def path_survival(self) -> float:
        return (1.0 - self.combiner_insertion_loss) * (1.0 - self.extra_connection_loss)


@dataclass
class ArrivalStream:
    """Photon arrivals at a detector input, time ordered.

    source_index links each arrival back to the row of the pair batch it
    came from (-1 once dark counts are merged in). port records which
    interferometer output produced the photon.
    """

    times: np.ndarray          # int64 ps
    port: np.ndarray           # int8
    source_index: np.ndarray   # int64
    multimode: bool = False

    def __len__(self) -> int:
        return len(self.times)


def arrival_stream(times, port, source_index=None, multimode=False) -> ArrivalStream:
    times = np.asarray(times, dtype=np.int64)
    if np.isscalar(port):
        port = np.full(len(times), port, dtype=np.int8)
    if source_index is None:
        source_index = np.arange(len(times), dtype=np.int64)
    return ArrivalStream(
        times=times,
        port=np.asarray(port, dtype=np.int8),
        source_index=np.asarray(source_index, dtype=np.int64),
        multimode=multimode,
    )


def combine_dtm(
    port1: ArrivalStream,
    port2: ArrivalStream,
    dtm: DtmConfig,
    rng: np.random.Generator,
) -> ArrivalStream:
    """Merge the two interferometer outputs onto one fiber.

    The configured delayed port is offset by dtm.delay_offset_ps; every
    event is dropped independently with the combiner path loss; survivors
    are merged in time order and flagged multimode.
    """
    t1 = port1.times.astype(np.int64, copy=True)
    t2 = port2.times.astype(np.int64, copy=True)
    if dtm.delayed_port == 1:
        t1 += dtm.delay_offset_ps
    else:
        t2 += dtm.delay_offset_ps
    times = np.concatenate([t1, t2])
    port = np.concatenate([port1.port, port2.port])
    source = np.concatenate([port1.source_index, port2.source_index])
    kept = rng.random(len(times)) < dtm.path_survival
    times, port, source = times[kept], port[kept], source[kept]
    order = np.argsort(times, kind="stable")
    return ArrivalStream(
        times=times[order],
        port=port[order],
        source_index=source[order],
        multimode=True,
    )


def _dead_time_mask_py(times: np.ndarray, dead_ps: int) -> np.ndarray:
    keep = np.zeros(len(times), dtype=np.bool_)
    last = None
    for i in range(len(times)):
        if last is None or times[i] - last >= dead_ps:
            keep[i] = True
            last = times[i]
    return keep


if njit is not None:
    @njit(cache=True)
    def _dead_time_mask_jit(times, dead_ps):  # pragma: no cover - thin numba shim
        n = times.shape[0]
        keep = np.zeros(n, dtype=np.bool_)
        last = -(1 << 62)
        for i in range(n):
            if times[i] - last >= dead_ps:
                keep[i] = True
                last = times[i]
        return keep


def dead_time_mask(times: np.ndarray, dead_time_ps: int) -> np.ndarray:
    """Non-paralyzable dead time: greedy accept, then blind for dead_time_ps.

    Input must be sorted ascending. An event exactly dead_time_ps after the
    last accepted one is accepted again.
    """
    times = np.asarray(times, dtype=np.int64)
    if dead_time_ps <= 0 or len(times) == 0:
        return np.ones(len(times), dtype=np.bool_)
    if njit is not None and len(times) > 2000:
        return _dead_time_mask_jit(times, np.int64(dead_time_ps))
    return _dead_time_mask_py(times, int(dead_time_ps))


@dataclass
class DetectionBatch:
    """Output of one detector: converted arrivals merged with dark counts.

    accepted marks events surviving the dead time filter; downstream
    processing must use the accepted view.
    """

    detector_id: str
    times: np.ndarray          # int64, sorted
    origin: np.ndarray         # int8, ORIGIN_SIGNAL or ORIGIN_DARK
    port: np.ndarray           # int8, 0 for dark counts
    source_index: np.ndarray   # int64, -1 for dark counts
    accepted: np.ndarray       # bool

    def __len__(self) -> int:
        return len(self.times)

    @property
    def accepted_times(self) -> np.ndarray:
        return self.times[self.accepted]

    def accepted_view(self) -> "DetectionBatch":
        m = self.accepted
        return DetectionBatch(
            detector_id=self.detector_id,
            times=self.times[m],
            origin=self.origin[m],
            port=self.port[m],
            source_index=self.source_index[m],
            accepted=np.ones(int(m.sum()), dtype=np.bool_),
        )


def detect(
    arrivals: ArrivalStream,
    det: DetectorConfig,
    duration_s: float,
    rng: np.random.Generator,
    detector_id: str = "det",
) -> DetectionBatch:
    """Convert arrivals to detection events for one detector.

    Each arrival converts with probability efficiency (times mode_penalty
    for multimode input); dark counts arrive as a Poisson process over
    [0, duration); the merged, time ordered stream then passes the
    non-paralyzable dead time filter.
    """
    if duration_s < 0:
        raise ConfigError("detect.duration_s: must be non-negative")
    p = det.efficiency * (det.mode_penalty if arrivals.multimode else 1.0)
    conv = rng.random(len(arrivals.times)) < p
    times = arrivals.times[conv]
    port = arrivals.port[conv]
    source = arrivals.source_index[conv]
    origin = np.zeros(len(times), dtype=np.int8)

    duration_ps = int(round(duration_s * PS_PER_SECOND))
    n_dark = rng.poisson(det.dark_rate_hz * duration_s) if det.dark_rate_hz > 0 else 0
    if n_dark > 0:
        dark_times = rng.integers(0, max(duration_ps, 1), size=n_dark, dtype=np.int64)
        dark_times.sort()
        times = np.concatenate([times, dark_times])
        origin = np.concatenate([origin, np.full(n_dark, ORIGIN_DARK, dtype=np.int8)])
        port = np.concatenate([port, np.zeros(n_dark, dtype=np.int8)])
        source = np.concatenate([source, np.full(n_dark, -1, dtype=np.int64)])

    order = np.argsort(times, kind="stable")
    times, origin, port, source = times[order], origin[order], port[order], source[order]
    accepted = dead_time_mask(times, det.dead_time_ps)
    return DetectionBatch(
        detector_id=detector_id,
        times=times,
        origin=origin,
        port=port,
        source_index=source,
        accepted=accepted,
    )


def saturation_ratio(measured_rate_per_s: float, dead_time_s: float) -> float:
    """Fraction of the expected rate a saturating detector still measures.

    For a non-paralyzable detector, measured/expected = 1 - dead_time *
    measured_rate. Computed over integer picoseconds so that round count
    rates give exact decimal ratios.
    """
    tau_ps = round(dead_time_s * PS_PER_SECOND)
    if tau_ps < 0:
        raise ValueError("dead_time_s must be non-negative")
    numerator = PS_PER_SECOND - measured_rate_per_s * tau_ps
    if numerator <= 0:
        raise ValueError(
            f"dead time fraction reaches 1 (rate {measured_rate_per_s}/s, "
            f"dead time {dead_time_s}s)"
        )
    return numerator / PS_PER_SECOND


def expected_rate(measured_rate_per_s: float, dead_time_s: float) -> float:
    """Invert the saturation relation: the arrival rate that would be
    measured as measured_rate_per_s under the given dead time."""
    return measured_rate_per_s / saturation_ratio(measured_rate_per_s, dead_time_s)


def records_to_csv(batch: DetectionBatch, path) -> None:
    """Write the accepted detection records as detector_id,timestamp_ps,origin."""
    view = batch.accepted_view()
    labels = {ORIGIN_SIGNAL: "signal", ORIGIN_DARK: "dark"}
    with open(path, "w") as fh:
        fh.write("detector_id,timestamp_ps,origin\n")
        for t, o in zip(view.times, view.origin):
            fh.write(f"{batch.detector_id},{t},{labels[int(o)]}\n")
