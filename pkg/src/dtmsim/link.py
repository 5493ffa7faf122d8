"""Fiber links: loss, group delay, and timing jitter."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

GROUP_DELAY_PS_PER_KM = 5_000_000.0  # ~5 us/km in standard single mode fiber


@dataclass(frozen=True)
class LinkConfig:
    length_km: float
    attenuation_db_per_km: float = 0.2
    excess_loss_db: float = 0.0
    extra_jitter_sigma_ps: float = 30.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ConfigError("link.length_km: must be non-negative")
        if self.attenuation_db_per_km < 0:
            raise ConfigError("link.attenuation_db_per_km: must be non-negative")
        if self.excess_loss_db < 0:
            raise ConfigError("link.excess_loss_db: must be non-negative")
        if self.extra_jitter_sigma_ps < 0:
            raise ConfigError("link.extra_jitter_sigma_ps: must be non-negative")

    @property
    def total_loss_db(self) -> float:
        return self.length_km * self.attenuation_db_per_km + self.excess_loss_db

    @property
    def survival(self) -> float:
        """Per-photon transmission probability, 10^(-dB/10)."""
        return 10.0 ** (-self.total_loss_db / 10.0)

    @property
    def delay_ps(self) -> int:
        return int(round(self.length_km * GROUP_DELAY_PS_PER_KM))


@dataclass
class TransmitResult:
    kept: np.ndarray      # bool mask into the input stream
    times: np.ndarray     # int64 arrival times of the kept photons


def transmit(
    times_ps: np.ndarray, link: LinkConfig, rng: np.random.Generator
) -> TransmitResult:
    """Propagate photons through a link.

    Each photon survives independently with the link's transmission
    probability; survivors pick up the fixed group delay plus a Gaussian
    jitter rounded to integer picoseconds. Ordering is preserved up to that
    jitter (the output is not re-sorted).
    """
    times = np.asarray(times_ps, dtype=np.int64)
    kept = rng.random(len(times)) < link.survival
    out = times[kept] + link.delay_ps
    if link.extra_jitter_sigma_ps > 0:
        out = out + np.rint(
            rng.normal(0.0, link.extra_jitter_sigma_ps, size=out.size)
        ).astype(np.int64)
    return TransmitResult(kept=kept, times=out)
