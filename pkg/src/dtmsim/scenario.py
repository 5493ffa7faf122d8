"""Scenario files: TOML input describing one network configuration.

A scenario bundles everything one run needs: clock and source settings,
receiver phases, the channel plan, per-user fiber links and detectors, the
optional time-multiplexing section, and run controls. Loading validates
eagerly and reports problems by their dotted key path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

try:
    import tomllib as tomli
except ModuleNotFoundError:  # pragma: no cover - stdlib from 3.11 on
    import tomli

from .detect import DEFAULT_EXTRA_CONNECTION_LOSS, DtmConfig
from .errors import ConfigError
from .link import LinkConfig
from .source import ChannelMap, PhaseConfig, SourceConfig, assign_channels
from .timebase import ClockConfig

_ENGINES = ("event", "thinned")


@dataclass(frozen=True)
class ReceiverConfig:
    """Detector parameters of one user's receiver.

    efficiencies holds one value per output port. Without multiplexing each
    port gets its own detector; with it a single detector (see UserDtm)
    serves both ports.
    """

    efficiencies: tuple[float, ...] = (0.2, 0.2)
    dead_time_ps: int = 10_000_000
    dark_rate_hz: float = 0.0

    def __post_init__(self):
        if len(self.efficiencies) != 2:
            raise ConfigError("detectors: exactly two port efficiencies required")
        for e in self.efficiencies:
            if not 0.0 <= e <= 1.0:
                raise ConfigError(f"detectors.efficiency: {e} outside [0, 1]")
        if self.dead_time_ps < 0:
            raise ConfigError("detectors.dead_time_ps: must be non-negative")
        if self.dark_rate_hz < 0:
            raise ConfigError("detectors.dark_rate_hz: must be non-negative")


@dataclass(frozen=True)
class UserDtm:
    """Time-multiplexing arrangement at one receiver: both ports combined
    onto a single detector.

    phase_trim_rad models the interferometric drift the extra combiner path
    adds at this receiver; it shifts the effective receiver phase whenever
    the multiplexed arrangement is active.
    """

    config: DtmConfig
    efficiency: float
    mode_penalty: float = 1.0
    phase_trim_rad: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError(f"dtm.efficiency: {self.efficiency} outside [0, 1]")
        if not 0.0 < self.mode_penalty <= 1.0:
            raise ConfigError(f"dtm.mode_penalty: {self.mode_penalty} outside (0, 1]")


@dataclass(frozen=True)
class RunConfig:
    duration_s: float = 10.0
    accumulation_interval_s: float = 1.0
    seed: int = 0
    engine: str = "event"
    sift_half_width_ps: int = 500
    histogram_bin_ps: int = 25
    f_ec: float = 1.2
    bootstrap_min_count: int = 100
    bootstrap_min_margin: float = 3.0
    sync_window_ps: int = 2 * 10**9
    sync_bin_ps: int = 200

    def __post_init__(self):
        if self.duration_s < 0:
            raise ConfigError("run.duration_s: must be non-negative")
        if self.accumulation_interval_s <= 0:
            raise ConfigError("run.accumulation_interval_s: must be positive")
        if self.engine not in _ENGINES:
            raise ConfigError(
                f"run.engine: '{self.engine}' is not one of {', '.join(_ENGINES)}"
            )
        if self.sift_half_width_ps <= 0:
            raise ConfigError("run.sift_half_width_ps: must be positive")
        if self.histogram_bin_ps <= 0:
            raise ConfigError("run.histogram_bin_ps: must be positive")
        if self.f_ec < 1.0:
            raise ConfigError("run.f_ec: must be at least 1")
        if self.bootstrap_min_count < 1:
            raise ConfigError("run.bootstrap_min_count: must be positive")
        if self.sync_window_ps <= 0 or self.sync_bin_ps <= 0:
            raise ConfigError("run.sync_window_ps / sync_bin_ps: must be positive")


@dataclass(frozen=True)
class Scenario:
    name: str
    clock: ClockConfig
    source: SourceConfig
    phases: PhaseConfig
    channel_map: ChannelMap
    links: dict[str, LinkConfig]
    receivers: dict[str, ReceiverConfig]
    dtm: dict[str, UserDtm]
    run: RunConfig
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def users(self) -> tuple[str, ...]:
        return tuple(self.channel_map.users())

    def has_dtm(self, user: str) -> bool:
        return user in self.dtm

    def echo_dict(self) -> dict:
        """Normalized copy of the parsed input, for run manifests."""
        return dict(self.raw)


def _section(data: dict, key: str) -> dict:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError(f"{key}: expected a table")
    return value


def _number(section: dict, key: str, default, path: str, *, integer=False):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path}.{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def scenario_from_dict(data: dict, name: str = "scenario") -> Scenario:
    clock_t = _section(data, "clock")
    clock = ClockConfig(
        repetition_period_ps=_number(clock_t, "repetition_period_ps", 9100, "clock", integer=True),
        interferometer_delay_ps=_number(clock_t, "interferometer_delay_ps", 3030, "clock", integer=True),
        pulse_fwhm_ps=_number(clock_t, "pulse_fwhm_ps", 300.0, "clock"),
    )

    source_t = _section(data, "source")
    source = SourceConfig(
        mean_pairs_per_pulse=_number(source_t, "mean_pairs_per_pulse", 0.05, "source")
    )

    network_t = _section(data, "network")
    pairs_raw = network_t.get("pairs")
    if not pairs_raw:
        raise ConfigError("network.pairs: at least one user pair is required")
    pairs = []
    for entry in pairs_raw:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise ConfigError(f"network.pairs: expected two-user entries, got {entry!r}")
        pairs.append((str(entry[0]), str(entry[1])))
    capacity = _number(network_t, "capacity", len(pairs), "network", integer=True)
    channel_map = assign_channels(pairs, capacity)
    users = channel_map.users()

    phases_t = _section(data, "phases")
    receivers_phase = {
        u: _number(_section(phases_t, "receivers"), u, 0.0, "phases.receivers")
        for u in users
    }
    phases = PhaseConfig(
        source_phase=_number(phases_t, "source", 0.0, "phases"),
        receiver=receivers_phase,
    )

    links_t = _section(data, "links")
    links = {}
    for u in users:
        entry = links_t.get(u)
        if entry is None:
            raise ConfigError(f"links.{u}: missing link definition")
        links[u] = LinkConfig(
            length_km=_number(entry, "length_km", 0.0, f"links.{u}"),
            attenuation_db_per_km=_number(entry, "attenuation_db_per_km", 0.2, f"links.{u}"),
            excess_loss_db=_number(entry, "excess_loss_db", 0.0, f"links.{u}"),
            extra_jitter_sigma_ps=_number(entry, "extra_jitter_sigma_ps", 30.0, f"links.{u}"),
        )

    detectors_t = _section(data, "detectors")
    receivers = {}
    for u in users:
        entry = detectors_t.get(u)
        if entry is None:
            raise ConfigError(f"detectors.{u}: missing detector definition")
        eff = entry.get("efficiency", [0.2, 0.2])
        if isinstance(eff, (int, float)):
            eff = [eff, eff]
        if not (isinstance(eff, list) and len(eff) == 2):
            raise ConfigError(
                f"detectors.{u}.efficiency: expected one value or a two-entry list"
            )
        receivers[u] = ReceiverConfig(
            efficiencies=tuple(float(e) for e in eff),
            dead_time_ps=_number(entry, "dead_time_ps", 10_000_000, f"detectors.{u}", integer=True),
            dark_rate_hz=_number(entry, "dark_rate_hz", 0.0, f"detectors.{u}"),
        )

    dtm_t = _section(data, "dtm")
    dtm: dict[str, UserDtm] = {}
    if dtm_t:
        enabled = dtm_t.get("users", [])
        if not isinstance(enabled, list):
            raise ConfigError("dtm.users: expected a list of user names")
        for u in enabled:
            if u not in users:
                raise ConfigError(f"dtm.users: unknown user '{u}'")
            override = _section(dtm_t, u)
            cfg = DtmConfig(
                delay_offset_ps=_number(
                    dtm_t, "delay_offset_ps", 1515, "dtm", integer=True
                ),
                combiner_insertion_loss=_number(
                    dtm_t, "combiner_insertion_loss", 0.05, "dtm"
                ),
                extra_connection_loss=_number(
                    dtm_t, "extra_connection_loss", DEFAULT_EXTRA_CONNECTION_LOSS, "dtm"
                ),
                delayed_port=_number(dtm_t, "delayed_port", 2, "dtm", integer=True),
            )
            default_eff = sum(receivers[u].efficiencies) / 2.0
            dtm[u] = UserDtm(
                config=cfg,
                efficiency=_number(override, "efficiency", default_eff, f"dtm.{u}"),
                mode_penalty=_number(
                    override, "mode_penalty", _number(dtm_t, "mode_penalty", 1.0, "dtm"), f"dtm.{u}"
                ),
                phase_trim_rad=_number(
                    override, "phase_trim_rad",
                    _number(dtm_t, "phase_trim_rad", 0.0, "dtm"), f"dtm.{u}"
                ),
            )

    run_t = _section(data, "run")
    run = RunConfig(
        duration_s=_number(run_t, "duration_s", 10.0, "run"),
        accumulation_interval_s=_number(run_t, "accumulation_interval_s", 1.0, "run"),
        seed=_number(run_t, "seed", 0, "run", integer=True),
        engine=str(run_t.get("engine", "event")),
        sift_half_width_ps=_number(run_t, "sift_half_width_ps", 500, "run", integer=True),
        histogram_bin_ps=_number(run_t, "histogram_bin_ps", 25, "run", integer=True),
        f_ec=_number(run_t, "f_ec", 1.2, "run"),
        bootstrap_min_count=_number(run_t, "bootstrap_min_count", 100, "run", integer=True),
        bootstrap_min_margin=_number(run_t, "bootstrap_min_margin", 3.0, "run"),
        sync_window_ps=_number(run_t, "sync_window_ps", 2 * 10**9, "run", integer=True),
        sync_bin_ps=_number(run_t, "sync_bin_ps", 200, "run", integer=True),
    )

    # sift windows must not cross bin boundaries once DTM halves the spacing
    min_spacing = clock.interferometer_delay_ps
    for u in dtm:
        min_spacing = min(min_spacing, dtm[u].config.delay_offset_ps)
    if run.sift_half_width_ps * 2 > min_spacing:
        raise ConfigError(
            "run.sift_half_width_ps: windows of half-width "
            f"{run.sift_half_width_ps} ps overlap at {min_spacing} ps spacing"
        )

    return Scenario(
        name=name,
        clock=clock,
        source=source,
        phases=phases,
        channel_map=channel_map,
        links=links,
        receivers=receivers,
        dtm=dtm,
        run=run,
        raw=data,
    )


def preset_path(name: str) -> str:
    """Filesystem path of a bundled scenario preset."""
    from importlib import resources

    path = resources.files("dtmsim") / "presets" / f"{name}.toml"
    import os

    if not os.path.exists(str(path)):
        available = sorted(
            p.name[:-5]
            for p in (resources.files("dtmsim") / "presets").iterdir()
            if p.name.endswith(".toml")
        )
        raise ConfigError(
            f"unknown preset '{name}'; available: {', '.join(available)}"
        )
    return str(path)


def load_scenario(path, name: str | None = None) -> Scenario:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    with fh:
        try:
            data = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if name is None:
        import os

        name = os.path.splitext(os.path.basename(str(path)))[0]
    return scenario_from_dict(data, name)
