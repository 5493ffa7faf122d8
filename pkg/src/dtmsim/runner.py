"""Run orchestration: generate, detect, demultiplex, sift, report.

Two generation engines produce statistically identical detection streams:

* "event" samples every emitted photon pair and walks it through fiber,
  combiner and detector losses. Transparent, but memory scales with the
  emission rate, so it suits short runs.
* "thinned" splits the Poisson pair process analytically into
  both-detected, left-only and right-only classes and synthesizes only
  photons that reach a detector. Loss thinning commutes with Poisson
  sampling, so the detector-level statistics match the event engine
  exactly; long accumulation runs become cheap.

Everything downstream of generation is shared: per-detector dead-time
filtering, folded arrival histograms, comb-position estimation, clock
offset recovery, window classification, output-mapping bootstrap, frame
matching, sifting and key metrics.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import demux, keyproc
from .detect import (
    DetectionBatch,
    DetectorConfig,
    arrival_stream,
    combine_dtm,
    detect,
    records_to_csv,
    saturation_ratio,
)
from .errors import ComparisonError
from .link import transmit
from .source import PhaseConfig, joint_distribution, sample_pairs
from .timebase import PS_PER_SECOND, Histogram, histogram
from .scenario import Scenario

_PHASE_BIN_PS = 5


# ---------------------------------------------------------------------------
# generation engines


def _effective_phases(scn: Scenario) -> PhaseConfig:
    receiver = {
        u: scn.phases.receiver.get(u, 0.0)
        + (scn.dtm[u].phase_trim_rad if u in scn.dtm else 0.0)
        for u in scn.users
    }
    return PhaseConfig(source_phase=scn.phases.source_phase, receiver=receiver)


def _detect_user_event(scn, user, times, ports, source_idx, seeds, duration_s):
    """Arrivals after the fiber -> one or two DetectionBatch per user."""
    rng_path = np.random.default_rng(seeds[0])
    rng_det = np.random.default_rng(seeds[1])
    rec = scn.receivers[user]
    if scn.has_dtm(user):
        udtm = scn.dtm[user]
        streams = [
            arrival_stream(times[ports == p], p, source_idx[ports == p])
            for p in (1, 2)
        ]
        combined = combine_dtm(streams[0], streams[1], udtm.config, rng_path)
        det = DetectorConfig(
            efficiency=udtm.efficiency,
            dead_time_ps=rec.dead_time_ps,
            dark_rate_hz=rec.dark_rate_hz,
            mode_penalty=udtm.mode_penalty,
        )
        return [detect(combined, det, duration_s, rng_det, f"{user}:dtm")]
    out = []
    for p in (1, 2):
        det = DetectorConfig(
            efficiency=rec.efficiencies[p - 1],
            dead_time_ps=rec.dead_time_ps,
            dark_rate_hz=rec.dark_rate_hz,
        )
        sel = ports == p
        out.append(
            detect(
                arrival_stream(times[sel], p, source_idx[sel]),
                det, duration_s, rng_det, f"{user}:{p}",
            )
        )
    return out


def _event_channel(scn, assignment, phases, n_frames, pair_seed, stage_seed):
    batch = sample_pairs(
        scn.source, scn.clock, _single_channel_map(scn, assignment),
        phases, n_frames, pair_seed,
    )[assignment.index]
    duration_s = scn.run.duration_s
    seeds = stage_seed.spawn(6)
    out = {}
    for side, user, seed_pair in (
        ("a", assignment.users[0], (seeds[0], seeds[1])),
        ("b", assignment.users[1], (seeds[2], seeds[3])),
    ):
        src_times = batch.a_time if side == "a" else batch.b_time
        src_ports = batch.a_port if side == "a" else batch.b_port
        rng_link = np.random.default_rng(seed_pair[0])
        res = transmit(src_times, scn.links[user], rng_link)
        idx = np.nonzero(res.kept)[0]
        out[user] = _detect_user_event(
            scn, user, res.times, src_ports[res.kept], idx,
            seed_pair[1].spawn(2), duration_s,
        )
    return out


def _single_channel_map(scn, assignment):
    from .source import ChannelMap

    return ChannelMap(capacity=scn.channel_map.capacity, assignments=(assignment,))


def _port_weights(scn, user):
    """Per-port survival from source output to a detector click, darks and
    dead time excluded."""
    s_link = scn.links[user].survival
    rec = scn.receivers[user]
    if scn.has_dtm(user):
        udtm = scn.dtm[user]
        s = s_link * udtm.config.path_survival * udtm.efficiency * udtm.mode_penalty
        return np.array([s, s])
    return s_link * np.array(rec.efficiencies)


def _thinned_times(scn, user, frames, bins, ports, jit_emit, rng):
    clock = scn.clock
    link = scn.links[user]
    t = (
        frames * clock.repetition_period_ps
        + bins.astype(np.int64) * clock.interferometer_delay_ps
        + jit_emit
        + link.delay_ps
        + np.rint(rng.normal(0.0, link.extra_jitter_sigma_ps, size=len(frames))).astype(np.int64)
    )
    if scn.has_dtm(user):
        cfg = scn.dtm[user].config
        t = t + np.where(ports == cfg.delayed_port, cfg.delay_offset_ps, 0)
    return t


def _sample_outcomes(table_flat, n, rng):
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    cum = np.cumsum(table_flat)
    cum /= cum[-1]
    cum[-1] = 1.0
    return np.searchsorted(cum, rng.random(n), side="right")


def _detect_thinned(scn, user, times, ports, seeds, duration_s):
    """Pre-thinned arrivals: unit-efficiency detectors, dead time and darks."""
    rec = scn.receivers[user]
    rng = np.random.default_rng(seeds[0])
    out = []
    if scn.has_dtm(user):
        order = np.argsort(times, kind="stable")
        det = DetectorConfig(
            efficiency=1.0, dead_time_ps=rec.dead_time_ps,
            dark_rate_hz=rec.dark_rate_hz,
        )
        stream = arrival_stream(times[order], ports[order])
        out.append(detect(stream, det, duration_s, rng, f"{user}:dtm"))
        return out
    for p in (1, 2):
        det = DetectorConfig(
            efficiency=1.0, dead_time_ps=rec.dead_time_ps,
            dark_rate_hz=rec.dark_rate_hz,
        )
        sel = ports == p
        t = times[sel]
        order = np.argsort(t, kind="stable")
        out.append(
            detect(arrival_stream(t[order], p), det, duration_s, rng, f"{user}:{p}")
        )
    return out


def _thinned_channel(scn, assignment, phases, n_frames, pair_seed, stage_seed):
    user_a, user_b = assignment.users
    table = joint_distribution(
        phases.receiver.get(user_a, 0.0),
        phases.receiver.get(user_b, 0.0),
        phases.source_phase,
    ).probs
    w_a = _port_weights(scn, user_a)
    w_b = _port_weights(scn, user_b)

    both = table * w_a[None, :, None, None] * w_b[None, None, None, :]
    a_only = table * w_a[None, :, None, None] * (1.0 - w_b)[None, None, None, :]
    b_only = table * (1.0 - w_a)[None, :, None, None] * w_b[None, None, None, :]
    mean_pairs = scn.source.mean_pairs_per_pulse * n_frames

    rng = np.random.default_rng(pair_seed)
    sigma = scn.clock.pulse_sigma_ps
    times = {user_a: [], user_b: []}
    ports = {user_a: [], user_b: []}

    # both-detected class: joint outcome, shared emission jitter
    n = rng.poisson(mean_pairs * both.sum())
    idx = _sample_outcomes(both.reshape(-1), n, rng)
    a_bin, a_p, b_bin, b_p = np.unravel_index(idx, (3, 2, 3, 2))
    frames = rng.integers(0, n_frames, size=n, dtype=np.int64)
    jit = np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)
    a_ports = (a_p + 1).astype(np.int8)
    b_ports = (b_p + 1).astype(np.int8)
    times[user_a].append(_thinned_times(scn, user_a, frames, a_bin, a_ports, jit, rng))
    ports[user_a].append(a_ports)
    times[user_b].append(_thinned_times(scn, user_b, frames, b_bin, b_ports, jit, rng))
    ports[user_b].append(b_ports)

    # single-detected classes: marginal outcome for the surviving side
    for user, cls in ((user_a, a_only), (user_b, b_only)):
        marg = cls.sum(axis=(2, 3)) if user == user_a else cls.sum(axis=(0, 1))
        n = rng.poisson(mean_pairs * marg.sum())
        idx = _sample_outcomes(marg.reshape(-1), n, rng)
        s_bin, s_p = np.unravel_index(idx, (3, 2))
        frames = rng.integers(0, n_frames, size=n, dtype=np.int64)
        jit = np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)
        s_ports = (s_p + 1).astype(np.int8)
        times[user].append(_thinned_times(scn, user, frames, s_bin, s_ports, jit, rng))
        ports[user].append(s_ports)

    seeds = stage_seed.spawn(2)
    duration_s = scn.run.duration_s
    out = {}
    for user, seed in ((user_a, seeds[0]), (user_b, seeds[1])):
        t = np.concatenate(times[user]) if times[user] else np.zeros(0, np.int64)
        p = np.concatenate(ports[user]) if ports[user] else np.zeros(0, np.int8)
        out[user] = _detect_thinned(scn, user, t, p, seed.spawn(1), duration_s)
    return out


# ---------------------------------------------------------------------------
# stream processing


def _merged_accepted(batches):
    """All accepted events of one user across detectors, time ordered."""
    times = np.concatenate([b.accepted_times for b in batches])
    port = np.concatenate([b.port[b.accepted] for b in batches])
    order = np.argsort(times, kind="stable")
    return times[order], port[order]


def _comb_offsets(scn, user):
    delta = scn.clock.interferometer_delay_ps
    base = [(b * delta, w) for b, w in ((0, 0.25), (1, 0.5), (2, 0.25))]
    if not scn.has_dtm(user):
        return base
    shift = scn.dtm[user].config.delay_offset_ps
    return [(o, w / 2) for o, w in base] + [(o + shift, w / 2) for o, w in base]


def estimate_comb_phase(times, scn: Scenario, user: str) -> float:
    """Position of the arrival comb inside the frame, from the folded
    histogram by circular template correlation. Sub-bin refined."""
    hist = histogram(times, scn.clock, _PHASE_BIN_PS)
    counts = hist.counts.astype(float)
    n = len(counts)
    grid = np.arange(n) * _PHASE_BIN_PS
    period = scn.clock.repetition_period_ps
    sigma = scn.clock.pulse_sigma_ps
    template = np.zeros(n)
    for offset, weight in _comb_offsets(scn, user):
        d = (grid - offset + period // 2) % period - period // 2
        template += weight * np.exp(-0.5 * (d / sigma) ** 2)
    corr = np.fft.irfft(np.fft.rfft(counts) * np.conj(np.fft.rfft(template)), n)
    k = int(np.argmax(corr))
    prev_c, next_c = corr[(k - 1) % n], corr[(k + 1) % n]
    denom = prev_c - 2 * corr[k] + next_c
    frac = 0.5 * (prev_c - next_c) / denom if denom != 0 else 0.0
    return float((k + frac) * _PHASE_BIN_PS % period)


def comb_centroids(times, scn: Scenario, user: str, phase_ps: float):
    """Measured centroid deviation of each comb position from nominal.

    Returns a list of dicts: nominal offset, absolute position, centroid
    deviation in ps and the count inside the window.
    """
    period = scn.clock.repetition_period_ps
    half = scn.run.sift_half_width_ps
    folded = np.asarray(times, dtype=np.int64) % period
    rows = []
    for offset, _ in _comb_offsets(scn, user):
        center = (phase_ps + offset) % period
        d = (folded - center + period // 2) % period - period // 2
        sel = np.abs(d) <= half
        dev = float(np.mean(d[sel])) if np.any(sel) else None
        rows.append(
            dict(
                nominal_offset_ps=int(offset),
                position_ps=float(center),
                centroid_deviation_ps=dev,
                count=int(np.sum(sel)),
            )
        )
    return rows


@dataclass
class DetectorSummary:
    detector_id: str
    n_accepted: int
    n_recorded: int
    measured_rate_per_s: float
    saturation_ratio: float
    expected_rate_per_s: float

    def to_dict(self) -> dict:
        return dict(
            detector_id=self.detector_id,
            n_accepted=self.n_accepted,
            n_recorded=self.n_recorded,
            measured_rate_per_s=self.measured_rate_per_s,
            saturation_ratio=self.saturation_ratio,
            expected_rate_per_s=self.expected_rate_per_s,
        )


@dataclass
class PairOutcome:
    users: tuple[str, str]
    metrics: keyproc.KeyMetrics
    offset_ps: int | None
    comb_phase_ps: dict
    detector_summaries: dict
    dtm_info: dict
    comb: dict
    histograms: dict = field(repr=False, default_factory=dict)
    timeseries: list = field(repr=False, default_factory=list)
    batches: dict = field(repr=False, default_factory=dict)
    classified: dict = field(repr=False, default_factory=dict)

    def to_dict(self) -> dict:
        return dict(
            users=list(self.users),
            key=self.metrics.to_dict(),
            offset_ps=self.offset_ps,
            comb_phase_ps=self.comb_phase_ps,
            detectors={
                u: [s.to_dict() for s in lst]
                for u, lst in self.detector_summaries.items()
            },
            dtm=self.dtm_info,
            comb=self.comb,
        )


def _summaries(scn, batches):
    duration = scn.run.duration_s
    out = []
    for b in batches:
        n_acc = int(np.sum(b.accepted))
        rate = n_acc / duration if duration > 0 else 0.0
        rec = scn.receivers[b.detector_id.split(":")[0]]
        ratio = saturation_ratio(rate, rec.dead_time_ps / PS_PER_SECOND)
        out.append(
            DetectorSummary(
                detector_id=b.detector_id,
                n_accepted=n_acc,
                n_recorded=len(b),
                measured_rate_per_s=rate,
                saturation_ratio=ratio,
                expected_rate_per_s=rate / ratio if ratio > 0 else float("nan"),
            )
        )
    return out


def _process_pair(scn: Scenario, users, user_batches) -> PairOutcome:
    run = scn.run
    clock = scn.clock
    user_a, user_b = users

    merged = {u: _merged_accepted(user_batches[u]) for u in users}
    summaries = {u: _summaries(scn, user_batches[u]) for u in users}
    hists = {u: histogram(merged[u][0], clock, run.histogram_bin_ps) for u in users}
    phases = {
        u: estimate_comb_phase(merged[u][0], scn, u) if len(merged[u][0]) else 0.0
        for u in users
    }
    comb = {
        u: comb_centroids(merged[u][0], scn, u, phases[u]) for u in users
    }

    if len(merged[user_a][0]) == 0 or len(merged[user_b][0]) == 0:
        # nothing recorded on one side (zero duration, or every photon
        # lost): no synchronization possible, report empty metrics
        empty8 = np.zeros(0, dtype=np.int8)
        return PairOutcome(
            users=tuple(users),
            metrics=keyproc.KeyMetrics(duration_s=run.duration_s, f_ec=run.f_ec),
            offset_ps=None,
            comb_phase_ps={u: phases[u] for u in users},
            detector_summaries=summaries,
            dtm_info={},
            comb=comb,
            histograms=hists,
            timeseries=_timeseries(
                scn, np.zeros(0, dtype=np.int64), empty8, empty8, empty8, empty8
            ),
            batches=user_batches,
        )

    offset = keyproc.recover_offset(
        merged[user_a][0], merged[user_b][0],
        search_window_ps=run.sync_window_ps, bin_width_ps=run.sync_bin_ps,
    )

    # both sides classify against the first user's comb position so logical
    # frame indices agree
    phase_ref = int(round(phases[user_a]))
    tables = {
        u: demux.BinTable.build(
            clock,
            dtm_delay_ps=(scn.dtm[u].config.delay_offset_ps if scn.has_dtm(u) else None),
            half_width_ps=run.sift_half_width_ps,
            phase_ps=phase_ref,
        )
        for u in users
    }
    ca = demux.classify_array(merged[user_a][0], tables[user_a])
    cb = demux.classify_array(merged[user_b][0] - offset, tables[user_b])

    keep_a = ca.classified
    keep_b = cb.classified
    a_frames, a_bins, a_vdet = ca.frame[keep_a], ca.time_bin[keep_a], ca.vdet[keep_a]
    b_frames, b_bins, b_vdet = cb.frame[keep_b], cb.time_bin[keep_b], cb.vdet[keep_b]
    a_port_phys = merged[user_a][1][keep_a]
    b_port_phys = merged[user_b][1][keep_b]
    a_times_cls = merged[user_a][0][keep_a]

    ia, ib = keyproc.match(a_frames, b_frames)
    n_coin = len(ia)

    dtm_users = [u for u in users if scn.has_dtm(u)]
    dtm_info = {}
    n_boot = 0
    if dtm_users:
        n_boot = run.bootstrap_min_count
        boot = slice(0, n_boot)
        for u in dtm_users:
            own_vdet = (a_vdet if u == user_a else b_vdet)[(ia if u == user_a else ib)[boot]]
            own_bin = (a_bins if u == user_a else b_bins)[(ia if u == user_a else ib)[boot]]
            partner_bin = (b_bins if u == user_a else a_bins)[(ib if u == user_a else ia)[boot]]
            result = demux.align(
                own_vdet, own_bin, partner_bin,
                delayed_port=scn.dtm[u].config.delayed_port,
                min_count=run.bootstrap_min_count,
                min_margin=run.bootstrap_min_margin,
            )
            dtm_info[u] = dict(
                mapping={str(v): int(p) for v, p in result.mapping.items()},
                margin_nats=result.margin,
                n_used=result.n_used,
                shifted=result.shifted,
            )

    def resolved_ports(u, vdet, phys):
        if not scn.has_dtm(u):
            return phys
        mapping = dtm_info[u]["mapping"]
        return np.where(vdet == 0, mapping["0"], mapping["1"]).astype(np.int8)

    a_ports = resolved_ports(user_a, a_vdet, a_port_phys)
    b_ports = resolved_ports(user_b, b_vdet, b_port_phys)

    key = slice(n_boot, None)
    ka, kb = ia[key], ib[key]
    sifted = keyproc.sift(a_bins[ka], a_ports[ka], b_bins[kb], b_ports[kb])
    metrics = keyproc.key_metrics(
        sifted, run.duration_s, n_coin, n_bootstrap_used=min(n_boot, n_coin),
        f_ec=run.f_ec,
    )

    timeseries = _timeseries(
        scn, a_times_cls[ka], a_bins[ka], a_ports[ka], b_bins[kb], b_ports[kb]
    )

    return PairOutcome(
        users=tuple(users),
        metrics=metrics,
        offset_ps=int(offset),
        comb_phase_ps={u: phases[u] for u in users},
        detector_summaries=summaries,
        dtm_info=dtm_info,
        comb=comb,
        histograms=hists,
        timeseries=timeseries,
        batches=user_batches,
        classified={user_a: ca, user_b: cb},
    )


def _timeseries(scn, t_coin, a_bins, a_ports, b_bins, b_ports):
    run = scn.run
    interval_ps = int(round(run.accumulation_interval_s * PS_PER_SECOND))
    n_buckets = int(np.ceil(run.duration_s / run.accumulation_interval_s))
    rows = []
    if len(t_coin):
        bucket = np.clip(t_coin // interval_ps, 0, n_buckets - 1).astype(np.int64)
    else:
        bucket = np.zeros(0, dtype=np.int64)

    time_mask = ((a_bins == 0) & (b_bins == 0)) | ((a_bins == 2) & (b_bins == 2))
    phase_mask = (a_bins == 1) & (b_bins == 1)
    sift_mask = time_mask | phase_mask
    err = np.zeros(len(t_coin), dtype=bool)
    err[time_mask] = a_bins[time_mask] != b_bins[time_mask]
    err[phase_mask] = a_ports[phase_mask] != b_ports[phase_mask]

    sifted_counts = np.bincount(bucket[sift_mask], minlength=n_buckets)
    err_counts = np.bincount(bucket[sift_mask & err], minlength=n_buckets)
    for k in range(n_buckets):
        n_s, n_e = int(sifted_counts[k]), int(err_counts[k])
        srate = n_s / run.accumulation_interval_s
        if n_s > 0:
            q = n_e / n_s
            sec = keyproc.secure_rate(srate, q, run.f_ec) if q < 0.5 else 0.0
            rows.append(((k + 1) * run.accumulation_interval_s, srate, q, sec))
        else:
            rows.append(((k + 1) * run.accumulation_interval_s, 0.0, None, 0.0))
    return rows


# ---------------------------------------------------------------------------
# run entry point and outputs


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    pair_outcomes: list

    def outcome(self, user_a: str, user_b: str) -> PairOutcome:
        for po in self.pair_outcomes:
            if set(po.users) == {user_a, user_b}:
                return po
        raise KeyError(f"no outcome for pair ({user_a}, {user_b})")


def run_scenario(
    scn: Scenario,
    *,
    seed: int | None = None,
    out_dir=None,
    write_records: bool = False,
) -> RunResult:
    run_seed = scn.run.seed if seed is None else int(seed)
    duration_ps = int(round(scn.run.duration_s * PS_PER_SECOND))
    n_frames = duration_ps // scn.clock.repetition_period_ps
    phases = _effective_phases(scn)

    root = np.random.SeedSequence(run_seed)
    n_chan = len(scn.channel_map.assignments)
    children = root.spawn(2 * n_chan)

    outcomes = []
    engine = _event_channel if scn.run.engine == "event" else _thinned_channel
    for i, assignment in enumerate(scn.channel_map.assignments):
        user_batches = engine(
            scn, assignment, phases, n_frames, children[2 * i], children[2 * i + 1]
        )
        outcomes.append(_process_pair(scn, assignment.users, user_batches))

    result = RunResult(scenario=scn, seed=run_seed, pair_outcomes=outcomes)
    if out_dir is not None:
        write_outputs(result, out_dir, write_records=write_records)
    return result


def _json_bytes(data) -> bytes:
    return (json.dumps(data, sort_keys=True, indent=2) + "\n").encode()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def write_outputs(result: RunResult, out_dir, *, write_records: bool = False) -> dict:
    """Write per-pair metrics, time series and histograms plus a manifest.

    Output bytes depend only on scenario content and seed: keys are sorted,
    floats formatted, and no timestamps are embedded, so identical runs
    produce identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    scn = result.scenario
    files = {}

    def _write(name: str, payload: bytes):
        path = os.path.join(out_dir, name)
        with open(path, "wb") as fh:
            fh.write(payload)
        files[name] = hashlib.sha256(payload).hexdigest()

    for po in result.pair_outcomes:
        tag = f"{po.users[0]}_{po.users[1]}"
        body = po.to_dict()
        body["scenario"] = scn.name
        body["engine"] = scn.run.engine
        body["seed"] = result.seed
        body["duration_s"] = scn.run.duration_s
        _write(f"metrics_{tag}.json", _json_bytes(body))

        lines = ["t_s,sifted_rate_per_s,qber,secure_rate_per_s"]
        for t, srate, q, sec in po.timeseries:
            lines.append(f"{_fmt(t)},{_fmt(srate)},{_fmt(q)},{_fmt(sec)}")
        _write(f"timeseries_{tag}.csv", ("\n".join(lines) + "\n").encode())

        for u, hist in po.histograms.items():
            lines = ["offset_ps,count"]
            for edge, count in zip(hist.bin_edges_ps[:-1], hist.counts):
                lines.append(f"{int(edge)},{int(count)}")
            _write(f"histogram_{u}.csv", ("\n".join(lines) + "\n").encode())

        for u, events in po.classified.items():
            path = os.path.join(out_dir, f"bins_{u}.csv")
            demux.summary_to_csv(events, path)
            with open(path, "rb") as fh:
                files[f"bins_{u}.csv"] = hashlib.sha256(fh.read()).hexdigest()

        if write_records:
            for u, batches in po.batches.items():
                for b in batches:
                    name = f"records_{b.detector_id.replace(':', '_')}.csv"
                    path = os.path.join(out_dir, name)
                    records_to_csv(b, path)
                    with open(path, "rb") as fh:
                        files[name] = hashlib.sha256(fh.read()).hexdigest()

    manifest = dict(
        scenario_name=scn.name,
        seed=result.seed,
        engine=scn.run.engine,
        scenario=scn.echo_dict(),
        files=files,
    )
    with open(os.path.join(out_dir, "manifest.json"), "wb") as fh:
        fh.write(_json_bytes(manifest))
    return files


# ---------------------------------------------------------------------------
# run comparison


def load_run_dir(path):
    """Rebuild (Scenario, RunResult) from a written output directory.

    Only what comparison needs is restored: scenario echo, key metrics and
    per-detector summaries. Histograms and time series stay on disk.
    """
    from .scenario import scenario_from_dict

    with open(os.path.join(path, "manifest.json"), "rb") as fh:
        manifest = json.loads(fh.read().decode())
    scn = scenario_from_dict(manifest["scenario"], manifest["scenario_name"])
    outcomes = []
    for name in sorted(manifest["files"]):
        if not (name.startswith("metrics_") and name.endswith(".json")):
            continue
        with open(os.path.join(path, name), "rb") as fh:
            body = json.loads(fh.read().decode())
        key = body["key"]
        outcomes.append(
            PairOutcome(
                users=tuple(body["users"]),
                metrics=keyproc.KeyMetrics(**key),
                offset_ps=body["offset_ps"],
                comb_phase_ps=body["comb_phase_ps"],
                detector_summaries={
                    u: [DetectorSummary(**d) for d in lst]
                    for u, lst in body["detectors"].items()
                },
                dtm_info=body["dtm"],
                comb=body["comb"],
            )
        )
    return scn, RunResult(scenario=scn, seed=manifest["seed"], pair_outcomes=outcomes)


_COMPARE_SECTIONS = ("clock", "source", "phases", "network", "links", "detectors")


def compare_runs(scn_a: Scenario, result_a: RunResult, scn_b: Scenario, result_b: RunResult):
    """Penalty decomposition of run B (multiplexed) against run A (not).

    Scenarios must agree in every section that is not part of the
    multiplexing arrangement; run controls (duration, seed, engine) may
    differ. Returns one PenaltyReport per shared user pair.
    """
    for section in _COMPARE_SECTIONS:
        if scn_a.raw.get(section) != scn_b.raw.get(section):
            raise ComparisonError(
                f"runs are not comparable: section '{section}' differs"
            )
    reports = {}
    for po_b in result_b.pair_outcomes:
        try:
            po_a = result_a.outcome(*po_b.users)
        except KeyError:
            continue
        if any(scn_a.has_dtm(u) and not scn_b.has_dtm(u) for u in po_b.users):
            raise ComparisonError(
                f"pair {po_b.users}: first run is multiplexed where the "
                "second is not; pass the baseline run first"
            )
        # only receivers multiplexed in B but not in A contribute path loss;
        # identical arrangements decompose to zero
        dtm_users = [
            u for u in po_b.users if scn_b.has_dtm(u) and not scn_a.has_dtm(u)
        ]
        rates_without = {
            u: [s.measured_rate_per_s for s in po_a.detector_summaries[u]]
            for u in po_b.users
        }
        rates_with = {
            u: [s.measured_rate_per_s for s in po_b.detector_summaries[u]]
            for u in po_b.users
        }
        dead = {
            u: scn_b.receivers[u].dead_time_ps / PS_PER_SECOND for u in po_b.users
        }
        reports[po_b.users] = keyproc.penalty_report(
            rates_without,
            rates_with,
            dead,
            [scn_b.dtm[u].config.path_survival for u in dtm_users],
            mode_penalties=[scn_b.dtm[u].mode_penalty for u in dtm_users],
            sifted_rate_no_dtm=po_a.metrics.sifted_rate_per_s,
            sifted_rate_dtm=po_b.metrics.sifted_rate_per_s,
            secure_rate_no_dtm=po_a.metrics.secure_rate_per_s,
            secure_rate_dtm=po_b.metrics.secure_rate_per_s,
        )
    if not reports:
        raise ComparisonError("runs share no user pair")
    return reports
