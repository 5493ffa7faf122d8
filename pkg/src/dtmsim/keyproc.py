"""Key processing: clock recovery, coincidence sifting, rates, penalties.

Works on classified detection streams from two parties. The inter-party
clock offset is recovered from a cross-correlation of raw timestamps, events
are matched frame by frame, matching bin combinations are sifted into time
and phase bits, and the resulting rates feed the secure-rate estimate and
the DTM penalty decomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SyncError
from .timebase import PS_PER_SECOND


# ---------------------------------------------------------------------------
# clock recovery

# upper bound on pairwise time differences gathered at once
_PAIR_SLAB = 4_000_000


def _ranges(counts: np.ndarray) -> np.ndarray:
    """[0..c0), [0..c1), ... concatenated; helper for grouped gathers."""
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    return np.arange(total, dtype=np.int64) - starts


def recover_offset(
    times_a: np.ndarray,
    times_b: np.ndarray,
    *,
    search_window_ps: int = 2 * 10**9,
    bin_width_ps: int = 200,
    sync_span_s: float = 2.0,
    max_events: int = 200_000,
    min_peak_excess: float = 6.0,
) -> int:
    """Offset that aligns stream B onto stream A (peak of t_b - t_a).

    Pairwise time differences within the search window are histogrammed at
    bin_width_ps; the histogram peak gives the offset, correct to within one
    bin width. Only a leading chunk of each stream (sync_span_s, capped at
    max_events per side) enters the search. Raises SyncError when no bin
    rises above the accidental background, e.g. for uncorrelated dark-only
    streams.
    """
    ta = np.asarray(times_a, dtype=np.int64)
    tb = np.asarray(times_b, dtype=np.int64)
    if len(ta) == 0 or len(tb) == 0:
        raise SyncError("cannot recover clock offset from an empty stream")
    w = int(search_window_ps)
    if w <= 0 or bin_width_ps <= 0:
        raise SyncError("search window and bin width must be positive")

    start = max(ta[0], tb[0] - w)
    stop = start + int(round(sync_span_s * PS_PER_SECOND))
    ca = ta[(ta >= start) & (ta < stop)][:max_events]
    cb = tb[(tb >= start - w) & (tb < stop + w)][:max_events]
    if len(ca) == 0 or len(cb) == 0:
        raise SyncError("no events inside the synchronization span")

    lo = np.searchsorted(cb, ca - w, side="left")
    hi = np.searchsorted(cb, ca + w, side="right")
    counts = hi - lo
    total = int(counts.sum())
    if total == 0:
        raise SyncError("no time differences inside the search window")

    n_bins = (2 * w) // bin_width_ps + 1
    hist = np.zeros(n_bins, dtype=np.int64)
    # hot streams can pair up far beyond available memory; accumulate the
    # difference histogram in bounded slabs instead of one gather
    cum = np.cumsum(counts)
    splits = (
        np.searchsorted(cum, np.arange(_PAIR_SLAB, total, _PAIR_SLAB), side="left") + 1
    )
    for s, e in zip(np.r_[0, splits], np.r_[splits, len(ca)]):
        if s >= e:
            continue
        c = counts[s:e]
        idx = np.repeat(lo[s:e], c) + _ranges(c)
        diffs = cb[idx] - np.repeat(ca[s:e], c)
        hist += np.bincount((diffs + w) // bin_width_ps, minlength=n_bins)
    # a lag on a bin edge splits its peak across two bins; score 3-bin sums
    # so a split main peak still beats narrower secondary comb peaks
    smooth = hist + np.roll(hist, 1) + np.roll(hist, -1)
    peak_bin = int(np.argmax(smooth))
    peak = float(smooth[peak_bin])
    background = 3.0 * (total - hist[peak_bin]) / max(n_bins - 1, 1)
    threshold = background + min_peak_excess * math.sqrt(background) + min_peak_excess
    if peak < threshold:
        raise SyncError(
            f"no correlation peak above background ({peak:.0f} vs "
            f"threshold {threshold:.1f})"
        )
    lo_bin = max(peak_bin - 1, 0)
    hi_bin = min(peak_bin + 2, n_bins)
    weights = hist[lo_bin:hi_bin].astype(float)
    centers = np.arange(lo_bin, hi_bin) * bin_width_ps + bin_width_ps // 2 - w
    if weights.sum() <= 0:
        return int(centers[len(centers) // 2])
    return int(round(float(np.dot(weights, centers) / weights.sum())))


# ---------------------------------------------------------------------------
# matching and sifting


def match(frames_a: np.ndarray, frames_b: np.ndarray):
    """Match events by logical frame index, first event wins per frame.

    Inputs must be in detection (time) order. Returns (idx_a, idx_b): index
    pairs into the two input arrays, one coincidence per shared frame.
    """
    frames_a = np.asarray(frames_a, dtype=np.int64)
    frames_b = np.asarray(frames_b, dtype=np.int64)
    ua, first_a = np.unique(frames_a, return_index=True)
    ub, first_b = np.unique(frames_b, return_index=True)
    _, ia, ib = np.intersect1d(ua, ub, return_indices=True)
    return first_a[ia], first_b[ib]


@dataclass
class SiftResult:
    """Sifted key bits of one processing block.

    Time basis: early-early gives bit 0, late-late bit 1 on both sides.
    Phase basis: central-central gives bit port-1 on each side; the port
    convention makes equal bits the expected outcome at zero phase sum.
    Every other bin combination is discarded.
    """

    time_a: np.ndarray
    time_b: np.ndarray
    phase_a: np.ndarray
    phase_b: np.ndarray
    n_discarded: int = 0

    @property
    def n_time(self) -> int:
        return len(self.time_a)

    @property
    def n_phase(self) -> int:
        return len(self.phase_a)

    @property
    def n_sifted(self) -> int:
        return self.n_time + self.n_phase


def sift(a_bin, a_port, b_bin, b_port) -> SiftResult:
    a_bin = np.asarray(a_bin)
    b_bin = np.asarray(b_bin)
    a_port = np.asarray(a_port)
    b_port = np.asarray(b_port)
    early_early = (a_bin == 0) & (b_bin == 0)
    late_late = (a_bin == 2) & (b_bin == 2)
    time_mask = early_early | late_late
    phase_mask = (a_bin == 1) & (b_bin == 1)
    time_bit = (a_bin[time_mask] == 2).astype(np.uint8)
    return SiftResult(
        time_a=time_bit,
        time_b=(b_bin[time_mask] == 2).astype(np.uint8),
        phase_a=(a_port[phase_mask] - 1).astype(np.uint8),
        phase_b=(b_port[phase_mask] - 1).astype(np.uint8),
        n_discarded=int(np.sum(~(time_mask | phase_mask))),
    )


def qber(bits_a: np.ndarray, bits_b: np.ndarray) -> float:
    """Fraction of positions where the two bit strings disagree."""
    bits_a = np.asarray(bits_a)
    bits_b = np.asarray(bits_b)
    if len(bits_a) != len(bits_b):
        raise ValueError("bit strings differ in length")
    if len(bits_a) == 0:
        raise ValueError("no sifted bits")
    return float(np.mean(bits_a != bits_b))


# ---------------------------------------------------------------------------
# rates


def binary_entropy(q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"binary entropy argument {q} outside [0, 1]")
    if q == 0.0 or q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def secure_rate(sifted_rate: float, q: float, f_ec=1.2) -> float:
    """Asymptotic secure key rate from the sifted rate and the QBER.

    f_ec is the error correction inefficiency, a constant or a callable
    f_ec(q). The estimate is clamped at zero once correction plus privacy
    amplification consume the full key.
    """
    if sifted_rate < 0:
        raise ValueError("sifted rate must be non-negative")
    if not 0.0 <= q < 0.5:
        raise ValueError(f"QBER {q} outside [0, 0.5)")
    f = f_ec(q) if callable(f_ec) else float(f_ec)
    h = binary_entropy(q)
    return sifted_rate * max(0.0, 1.0 - f * h - h)


def fit_error_correction_efficiency(
    sifted_rate: float, q: float, observed_secure_rate: float
) -> float:
    """The f_ec that reproduces an observed secure rate exactly.

    Inverts secure = sifted * (1 - f*h2(q) - h2(q)).
    """
    if sifted_rate <= 0:
        raise ValueError("sifted rate must be positive")
    if not 0.0 < q < 0.5:
        raise ValueError(f"QBER {q} outside (0, 0.5)")
    if not 0.0 <= observed_secure_rate <= sifted_rate:
        raise ValueError("secure rate must lie between 0 and the sifted rate")
    h = binary_entropy(q)
    return (1.0 - observed_secure_rate / sifted_rate) / h - 1.0


@dataclass
class KeyMetrics:
    """Per user-pair outcome of one run."""

    duration_s: float
    n_coincidences: int = 0
    n_sifted_time: int = 0
    n_sifted_phase: int = 0
    n_discarded: int = 0
    n_bootstrap_used: int = 0
    qber_time: float | None = None
    qber_phase: float | None = None
    qber_combined: float | None = None
    sifted_rate_per_s: float = 0.0
    secure_rate_per_s: float = 0.0
    f_ec: float = 1.2

    def to_dict(self) -> dict:
        return dict(
            duration_s=self.duration_s,
            n_coincidences=self.n_coincidences,
            n_sifted_time=self.n_sifted_time,
            n_sifted_phase=self.n_sifted_phase,
            n_discarded=self.n_discarded,
            n_bootstrap_used=self.n_bootstrap_used,
            qber_time=self.qber_time,
            qber_phase=self.qber_phase,
            qber_combined=self.qber_combined,
            sifted_rate_per_s=self.sifted_rate_per_s,
            secure_rate_per_s=self.secure_rate_per_s,
            f_ec=self.f_ec,
        )


def key_metrics(
    sifted: SiftResult,
    duration_s: float,
    n_coincidences: int,
    n_bootstrap_used: int = 0,
    f_ec: float = 1.2,
) -> KeyMetrics:
    """Assemble rates and error fractions for one user pair."""
    m = KeyMetrics(
        duration_s=duration_s,
        n_coincidences=n_coincidences,
        n_sifted_time=sifted.n_time,
        n_sifted_phase=sifted.n_phase,
        n_discarded=sifted.n_discarded,
        n_bootstrap_used=n_bootstrap_used,
        f_ec=f_ec,
    )
    if sifted.n_time > 0:
        m.qber_time = qber(sifted.time_a, sifted.time_b)
    if sifted.n_phase > 0:
        m.qber_phase = qber(sifted.phase_a, sifted.phase_b)
    if sifted.n_sifted > 0 and duration_s > 0:
        errors = 0
        errors += int(np.sum(sifted.time_a != sifted.time_b))
        errors += int(np.sum(sifted.phase_a != sifted.phase_b))
        m.qber_combined = errors / sifted.n_sifted
        m.sifted_rate_per_s = sifted.n_sifted / duration_s
        if m.qber_combined < 0.5:
            m.secure_rate_per_s = secure_rate(
                m.sifted_rate_per_s, m.qber_combined, f_ec
            )
    return m


# ---------------------------------------------------------------------------
# DTM penalty decomposition

from .detect import saturation_ratio  # noqa: E402  (no import cycle: detect is leaf)


def party_duty_factor(measured_rates_per_s, dead_time_s: float) -> float:
    """Live-time fraction of one receiver: per-detector saturation ratios
    averaged over that receiver's detectors."""
    rates = list(measured_rates_per_s)
    if not rates:
        raise ValueError("no measured rates")
    return sum(saturation_ratio(r, dead_time_s) for r in rates) / len(rates)


def saturation_component(
    rates_without: dict, rates_with: dict, dead_time_s: float
) -> float:
    """Sifted-rate fraction lost to saturation when moving to DTM.

    Both arguments map user -> per-detector measured rates: two separate
    detectors without multiplexing, a single combined detector with it. The
    coincidence rate scales with the product of both receivers' live-time
    fractions, so the component follows from the ratio of those products.
    dead_time_s applies to every receiver, or per receiver when given as a
    mapping.
    """
    ratio = 1.0
    for user, rates in rates_without.items():
        if user not in rates_with:
            raise ValueError(f"no multiplexed rate for user '{user}'")
        with_rates = rates_with[user]
        if isinstance(with_rates, (int, float)):
            with_rates = [with_rates]
        tau = dead_time_s[user] if isinstance(dead_time_s, dict) else dead_time_s
        ratio *= party_duty_factor(with_rates, tau) / party_duty_factor(rates, tau)
    return 1.0 - ratio


def insertion_component(path_survivals) -> float:
    """Sifted-rate fraction lost to combiner and connection losses: one
    minus the product of the per-receiver DTM path survivals."""
    product = 1.0
    for s in path_survivals:
        if not 0.0 < s <= 1.0:
            raise ValueError(f"path survival {s} outside (0, 1]")
        product *= s
    return 1.0 - product


@dataclass
class PenaltyReport:
    """Decomposition of the DTM sifted-rate penalty for one user pair.

    insertion, mode_coupling and saturation are model components
    (configured losses, configured multimode coupling, and the saturation
    relation applied to measured rates); combined_model composes them.
    measured_reduction is the directly simulated sifted-rate reduction when
    both runs are available, and residual is whatever part of it the model
    components do not explain.
    """

    insertion: float
    saturation: float
    combined_model: float
    mode_coupling: float = 0.0
    measured_reduction: float | None = None
    residual: float | None = None
    secure_reduction: float | None = None
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(
            insertion=self.insertion,
            saturation=self.saturation,
            mode_coupling=self.mode_coupling,
            combined_model=self.combined_model,
            measured_reduction=self.measured_reduction,
            residual=self.residual,
            secure_reduction=self.secure_reduction,
            detail=self.detail,
        )


def penalty_report(
    rates_without: dict,
    rates_with: dict,
    dead_time_s: float,
    path_survivals,
    mode_penalties=(),
    sifted_rate_no_dtm: float | None = None,
    sifted_rate_dtm: float | None = None,
    secure_rate_no_dtm: float | None = None,
    secure_rate_dtm: float | None = None,
) -> PenaltyReport:
    a = insertion_component(path_survivals)
    b = saturation_component(rates_without, rates_with, dead_time_s)
    c = insertion_component(mode_penalties) if len(tuple(mode_penalties)) else 0.0
    report = PenaltyReport(
        insertion=a,
        saturation=b,
        mode_coupling=c,
        combined_model=1.0 - (1.0 - a) * (1.0 - b) * (1.0 - c),
        detail=dict(
            rates_without={
                u: [float(x) for x in np.atleast_1d(r)] for u, r in rates_without.items()
            },
            rates_with={
                u: [float(x) for x in np.atleast_1d(r)] for u, r in rates_with.items()
            },
            dead_time_s=dead_time_s,
            path_survivals=list(path_survivals),
        ),
    )
    if sifted_rate_no_dtm and sifted_rate_dtm is not None:
        report.measured_reduction = 1.0 - sifted_rate_dtm / sifted_rate_no_dtm
        report.residual = report.measured_reduction - report.combined_model
    if secure_rate_no_dtm and secure_rate_dtm is not None:
        report.secure_reduction = 1.0 - secure_rate_dtm / secure_rate_no_dtm
    return report
