"""Discrete-event simulator for a star-topology entanglement QKD network
with detector time multiplexing at the receivers."""

from .errors import ComparisonError, ConfigError, InsufficientBootstrap, SyncError
from .timebase import (
    PS_PER_SECOND,
    ClockConfig,
    FrameCoord,
    Histogram,
    fold,
    fold_array,
    histogram,
)
from .source import (
    ChannelMap,
    JointTable,
    PairBatch,
    PhaseConfig,
    SourceConfig,
    TimeBin,
    assign_channels,
    joint_distribution,
    sample_pairs,
)
from .link import LinkConfig, transmit
from .detect import (
    DEFAULT_EXTRA_CONNECTION_LOSS,
    DetectorConfig,
    DtmConfig,
    combine_dtm,
    dead_time_mask,
    detect,
    expected_rate,
    saturation_ratio,
)
from .demux import BinTable, BinWindow, align, classify, classify_array
from .keyproc import (
    KeyMetrics,
    PenaltyReport,
    binary_entropy,
    fit_error_correction_efficiency,
    insertion_component,
    match,
    penalty_report,
    qber,
    recover_offset,
    saturation_component,
    secure_rate,
    sift,
)
from .scenario import Scenario, load_scenario, preset_path, scenario_from_dict
from .runner import RunResult, compare_runs, load_run_dir, run_scenario, write_outputs

__version__ = "0.1.0"

__all__ = [
    "PS_PER_SECOND",
    "DEFAULT_EXTRA_CONNECTION_LOSS",
    "ClockConfig",
    "FrameCoord",
    "Histogram",
    "fold",
    "fold_array",
    "histogram",
    "TimeBin",
    "PhaseConfig",
    "JointTable",
    "joint_distribution",
    "SourceConfig",
    "ChannelMap",
    "assign_channels",
    "PairBatch",
    "sample_pairs",
    "LinkConfig",
    "transmit",
    "DetectorConfig",
    "DtmConfig",
    "combine_dtm",
    "dead_time_mask",
    "detect",
    "saturation_ratio",
    "expected_rate",
    "BinTable",
    "BinWindow",
    "classify",
    "classify_array",
    "align",
    "KeyMetrics",
    "PenaltyReport",
    "binary_entropy",
    "secure_rate",
    "fit_error_correction_efficiency",
    "recover_offset",
    "match",
    "sift",
    "qber",
    "penalty_report",
    "saturation_component",
    "insertion_component",
    "Scenario",
    "load_scenario",
    "preset_path",
    "scenario_from_dict",
    "RunResult",
    "run_scenario",
    "compare_runs",
    "load_run_dir",
    "write_outputs",
    "ConfigError",
    "SyncError",
    "InsufficientBootstrap",
    "ComparisonError",
]
