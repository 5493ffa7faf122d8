"""Demultiplexing of time multiplexed detection streams.

With DTM active, one physical detector carries six arrival combs per frame:
the three time bins of the undelayed output interleaved with the three bins
of the delayed output. A bin table maps frame offsets back to (virtual
detector, time bin); a bootstrap step fixes which virtual detector is which
physical interferometer output by comparing early/late coincidence patterns
against the expected ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InsufficientBootstrap
from .source import TimeBin
from .timebase import ClockConfig

V0 = 0
V1 = 1

# Joint time-bin model for true coincidences, ports summed out: rows are the
# local bin, columns the partner bin, order early/central/late. Early-late
# combinations are forbidden; the model is independent of the phase setting.
_BIN_MODEL = np.array(
    [
        [1 / 8, 1 / 8, 0.0],
        [1 / 8, 1 / 4, 1 / 8],
        [0.0, 1 / 8, 1 / 8],
    ]
)
_MODEL_FLOOR = 1e-4  # floor for forbidden cells: one such observation costs ~7 nats


@dataclass(frozen=True)
class BinWindow:
    center_ps: int
    half_width_ps: int
    vdet: int
    time_bin: int


@dataclass(frozen=True)
class BinTable:
    """Acceptance windows tiling one frame.

    V0 windows sit on the undelayed comb {0, D, 2D}; with DTM a second set
    V1 sits at the DTM delay offset. phase_ps shifts the whole comb, which
    absorbs the constant propagation delay of a receiver.
    """

    period_ps: int
    windows: tuple[BinWindow, ...]
    phase_ps: int = 0

    def __post_init__(self):
        centers = [
            (w.center_ps + self.phase_ps) % self.period_ps for w in self.windows
        ]
        hw = [w.half_width_ps for w in self.windows]
        for i in range(len(centers)):
            if hw[i] <= 0:
                raise ConfigError("demux.half_width_ps: must be positive")
            for j in range(i + 1, len(centers)):
                d = abs(centers[i] - centers[j])
                d = min(d, self.period_ps - d)
                if d <= hw[i] + hw[j]:
                    raise ConfigError(
                        "demux windows overlap: centers "
                        f"{centers[i]} and {centers[j]} ps with half widths "
                        f"{hw[i]}/{hw[j]} ps"
                    )

    @classmethod
    def build(
        cls,
        clock: ClockConfig,
        dtm_delay_ps: int | None = None,
        half_width_ps: int = 500,
        phase_ps: int = 0,
    ) -> "BinTable":
        """Nominal table: three V0 windows, plus three V1 windows under DTM."""
        delta = clock.interferometer_delay_ps
        windows = [
            BinWindow(b * delta, half_width_ps, V0, b) for b in range(3)
        ]
        if dtm_delay_ps is not None:
            windows += [
                BinWindow(b * delta + dtm_delay_ps, half_width_ps, V1, b)
                for b in range(3)
            ]
        windows.sort(key=lambda w: w.center_ps)
        return cls(
            period_ps=clock.repetition_period_ps,
            windows=tuple(windows),
            phase_ps=phase_ps,
        )


@dataclass
class ClassifiedEvents:
    """Classification of a detection stream against a bin table.

    vdet/time_bin are -1 for events falling outside every window. frame is
    the logical emission frame implied by the matched window (an event a
    little before a frame boundary may belong to the next frame).
    """

    vdet: np.ndarray       # int8
    time_bin: np.ndarray   # int8
    frame: np.ndarray      # int64

    @property
    def classified(self) -> np.ndarray:
        return self.vdet >= 0

    def __len__(self) -> int:
        return len(self.vdet)


def classify_array(times_ps: np.ndarray, table: BinTable) -> ClassifiedEvents:
    """Assign each timestamp to (virtual detector, bin, logical frame)."""
    times = np.asarray(times_ps, dtype=np.int64)
    period = table.period_ps
    half = period // 2
    vdet = np.full(len(times), -1, dtype=np.int8)
    tbin = np.full(len(times), -1, dtype=np.int8)
    frame = np.zeros(len(times), dtype=np.int64)
    for w in table.windows:
        center = w.center_ps + table.phase_ps
        d = (times - center + half) % period - half
        m = (np.abs(d) <= w.half_width_ps) & (vdet < 0)
        vdet[m] = w.vdet
        tbin[m] = w.time_bin
        frame[m] = (times[m] - center - d[m]) // period
    return ClassifiedEvents(vdet=vdet, time_bin=tbin, frame=frame)


def classify(timestamp_ps: int, table: BinTable):
    """Single-event convenience: (vdet, TimeBin) or None if unclassified."""
    ev = classify_array(np.array([timestamp_ps]), table)
    if ev.vdet[0] < 0:
        return None
    return int(ev.vdet[0]), TimeBin(int(ev.time_bin[0]))


def summary_to_csv(events: ClassifiedEvents, path) -> None:
    """Write per-(virtual detector, bin) counts plus the unclassified rest."""
    with open(path, "w") as fh:
        fh.write("bin_label,count\n")
        for v in (V0, V1):
            for b in TimeBin:
                n = int(np.sum((events.vdet == v) & (events.time_bin == b)))
                fh.write(f"V{v}_{b.name.lower()},{n}\n")
        fh.write(f"unclassified,{int(np.sum(~events.classified))}\n")


@dataclass(frozen=True)
class AssignmentResult:
    """Outcome of the output-mapping bootstrap.

    mapping: physical interferometer port per virtual detector
    margin: log-likelihood margin of the winning hypothesis (nats)
    n_used: bootstrap coincidences consumed (these bits are discarded)
    shifted: True if the delayed comb was found on the V0 windows instead
    of the nominal V1 windows
    """

    mapping: dict
    margin: float
    n_used: int
    shifted: bool
    discarded: bool = True


def _comb_labels(shifted: bool) -> np.ndarray:
    """Time-bin label per comb index (comb = 2*bin + vdet) for a hypothesis.

    Nominal: even combs are the undelayed output, odd combs the delayed one,
    and both carry bins E, C, L in comb order. Shifted: the delayed comb set
    is the even one, i.e. every window actually holds the bin of the comb one
    step below it (the lowest comb wraps to the previous frame's late bin).
    """
    if not shifted:
        return np.array([0, 0, 1, 1, 2, 2], dtype=np.int8)
    return np.array([2, 0, 0, 1, 1, 2], dtype=np.int8)


def align(
    local_vdet: np.ndarray,
    local_bin: np.ndarray,
    partner_bin: np.ndarray,
    *,
    delayed_port: int = 2,
    min_count: int = 100,
    min_margin: float = 3.0,
) -> AssignmentResult:
    """Fix the virtual-detector to port mapping from bootstrap coincidences.

    Both comb hypotheses (delayed output on the V1 windows, or shifted onto
    the V0 windows) are scored by the log likelihood of the observed local
    versus partner time-bin pattern under the expected coincidence model;
    the early-late combinations it forbids make the wrong hypothesis pay per
    observation. The winning comb set is then attached to the port known to
    have the longer propagation path. Bits consumed here are discarded.

    Raises InsufficientBootstrap below min_count coincidences or when the
    likelihood margin stays under min_margin nats.
    """
    local_vdet = np.asarray(local_vdet)
    local_bin = np.asarray(local_bin)
    partner_bin = np.asarray(partner_bin)
    n = len(local_vdet)
    if n < min_count:
        raise InsufficientBootstrap(
            f"{n} bootstrap coincidences, need at least {min_count}"
        )
    comb = local_bin.astype(np.int64) * 2 + local_vdet.astype(np.int64)
    logp = np.log(np.maximum(_BIN_MODEL, _MODEL_FLOOR))
    scores = []
    for shifted in (False, True):
        labels = _comb_labels(shifted)[comb]
        scores.append(float(np.sum(logp[labels, partner_bin])))
    margin = abs(scores[0] - scores[1])
    if margin < min_margin:
        raise InsufficientBootstrap(
            f"comb hypotheses not separable: margin {margin:.2f} nats "
            f"over {n} coincidences"
        )
    shifted = scores[1] > scores[0]
    other_port = 1 if delayed_port == 2 else 2
    if shifted:
        mapping = {V0: delayed_port, V1: other_port}
    else:
        mapping = {V0: other_port, V1: delayed_port}
    return AssignmentResult(
        mapping=mapping, margin=margin, n_used=n, shifted=bool(shifted)
    )
