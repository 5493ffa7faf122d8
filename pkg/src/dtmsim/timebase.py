"""Shared integer-picosecond time base.

Every timestamp in the simulator is an integer number of picoseconds on the
common pump clock. Frames repeat with a fixed period; the three time bins of
a frame (early, central, late) sit at multiples of the interferometer delay.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

PS_PER_SECOND = 10**12


@dataclass(frozen=True)
class ClockConfig:
    """Pulsed-source clock geometry.

    repetition_period_ps: pump frame period (9100 ps is the 109.89 MHz default)
    interferometer_delay_ps: long-short arm separation, one bin spacing
    pulse_fwhm_ps: full width at half maximum of one pump pulse
    """

    repetition_period_ps: int = 9100
    interferometer_delay_ps: int = 3030
    pulse_fwhm_ps: int = 300

    def __post_init__(self):
        if self.repetition_period_ps <= 0:
            raise ConfigError("clock.repetition_period_ps: must be positive")
        if self.interferometer_delay_ps <= 0:
            raise ConfigError("clock.interferometer_delay_ps: must be positive")
        if self.pulse_fwhm_ps <= 0:
            raise ConfigError("clock.pulse_fwhm_ps: must be positive")
        # three bins plus one pulse width of guard must fit in a frame
        if self.repetition_period_ps <= 2 * self.interferometer_delay_ps + self.pulse_fwhm_ps:
            raise ConfigError(
                "clock.repetition_period_ps: three time bins do not fit "
                f"({self.repetition_period_ps} <= 2*{self.interferometer_delay_ps}"
                f" + {self.pulse_fwhm_ps})"
            )

    @property
    def pulse_sigma_ps(self) -> float:
        """Gaussian sigma matching the configured FWHM."""
        return self.pulse_fwhm_ps / 2.355

    @property
    def frames_per_second(self) -> float:
        return PS_PER_SECOND / self.repetition_period_ps

    def bin_offset(self, time_bin: int) -> int:
        """Nominal frame offset of a time bin (0: early, 1: central, 2: late)."""
        return time_bin * self.interferometer_delay_ps


@dataclass(frozen=True)
class FrameCoord:
    """A timestamp split into frame index and offset within the frame."""

    frame_index: int
    offset_ps: int


def fold(timestamp_ps: int, clock: ClockConfig) -> FrameCoord:
    """Split an absolute timestamp into (frame index, offset).

    frame_index * period + offset reproduces the timestamp exactly; offsets
    lie in [0, period). Timestamps are expected to be non-negative.
    """
    frame, offset = divmod(int(timestamp_ps), clock.repetition_period_ps)
    return FrameCoord(frame, offset)


def fold_array(times_ps: np.ndarray, clock: ClockConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vector version of fold: returns (frame indices, offsets)."""
    times = np.asarray(times_ps, dtype=np.int64)
    frames = np.floor_divide(times, clock.repetition_period_ps)
    offsets = times - frames * clock.repetition_period_ps
    return frames, offsets


@dataclass
class Histogram:
    """Counts of folded arrival offsets, one bin per `bin_width_ps`."""

    bin_width_ps: int
    period_ps: int
    counts: np.ndarray = field(repr=False)

    @property
    def bin_edges_ps(self) -> np.ndarray:
        return np.arange(0, self.period_ps + self.bin_width_ps, self.bin_width_ps)

    @property
    def bin_centers_ps(self) -> np.ndarray:
        return np.arange(len(self.counts)) * self.bin_width_ps + self.bin_width_ps / 2

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, path) -> None:
        """Write `offset_ps,count` rows; offset is the lower bin edge."""
        offsets = np.arange(len(self.counts)) * self.bin_width_ps
        with open(path, "w") as fh:
            fh.write("offset_ps,count\n")
            for off, cnt in zip(offsets, self.counts):
                fh.write(f"{off},{cnt}\n")


def histogram(times_ps: np.ndarray, clock: ClockConfig, bin_width_ps: int) -> Histogram:
    """Fold timestamps into one frame and count them in fixed-width bins.

    The bin width must divide the repetition period so bins tile the frame.
    """
    period = clock.repetition_period_ps
    if bin_width_ps <= 0 or period % bin_width_ps != 0:
        raise ConfigError(
            f"bin_width_ps: {bin_width_ps} does not divide the period {period}"
        )
    n_bins = period // bin_width_ps
    _, offsets = fold_array(times_ps, clock)
    counts = np.bincount(offsets // bin_width_ps, minlength=n_bins)
    return Histogram(bin_width_ps=bin_width_ps, period_ps=period, counts=counts)
