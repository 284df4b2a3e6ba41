"""Free-space link budget: Shannon rate and one-hop delivery time."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigurationError, InfeasibleError
from .orbital import (
    ConstellationConfig,
    R_EARTH,
    GroundStation,
    VisibilityPattern,
    cluster_pattern,
    max_gs_distance,
    max_slant_range,
)

K_BOLTZMANN = 1.380649e-23  # J/K
SPEED_OF_LIGHT = 2.99792458e8  # m/s
BITS_PER_PARAM = 32


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def dbm_to_watts(dbm: float) -> float:
    return db_to_linear(dbm - 30.0)


def watts_to_dbm(w: float) -> float:
    return linear_to_db(w) + 30.0


@dataclass(frozen=True)
class LinkBudget:
    tx_power_W: float
    antenna_gain_linear: float
    bandwidth_Hz: float
    carrier_Hz: float
    system_temp_K: float

    def __post_init__(self):
        for name in ("tx_power_W", "antenna_gain_linear", "bandwidth_Hz", "carrier_Hz", "system_temp_K"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")

    @classmethod
    def from_db(cls, tx_power_dbm, antenna_gain_dbi, bandwidth_hz, carrier_hz, system_temp_k) -> "LinkBudget":
        return cls(dbm_to_watts(tx_power_dbm), db_to_linear(antenna_gain_dbi), bandwidth_hz, carrier_hz, system_temp_k)


@dataclass(frozen=True)
class HopTiming:
    rate_bps: float
    transfer_s: float
    propagation_s: float


def noise_power(bandwidth_Hz: float, system_temp_K: float) -> float:
    if bandwidth_Hz <= 0 or system_temp_K <= 0:
        raise ValueError("bandwidth and temperature must be positive")
    return K_BOLTZMANN * bandwidth_Hz * system_temp_K


def snr(budget: LinkBudget, d: float) -> float:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    n_t = noise_power(budget.bandwidth_Hz, budget.system_temp_K)
    # same gain at both ends of the link
    num = budget.tx_power_W * budget.antenna_gain_linear**2 * SPEED_OF_LIGHT**2
    return num / (16 * math.pi**2 * d**2 * budget.carrier_Hz**2 * n_t)


def data_rate(budget: LinkBudget, d: float) -> float:
    """Shannon rate (bit/s) over a free-space link of length ``d`` metres."""
    return budget.bandwidth_Hz * math.log2(1.0 + snr(budget, d))


def transfer_time(S: float, budget: LinkBudget, d: float) -> HopTiming:
    """Transmission plus propagation time for ``S`` bits over distance ``d``."""
    if S < 0:
        raise ValueError("payload must be non-negative")
    rate = data_rate(budget, d)
    prop = d / SPEED_OF_LIGHT
    return HopTiming(rate, S / rate + prop, prop)


def payload_bits(param_count: int) -> int:
    return int(param_count) * BITS_PER_PARAM


def isl_hop_distance(altitude_m: float, sats_in_orbit: int) -> float:
    """Chord between adjacent equidistant satellites of one orbit."""
    return 2 * (R_EARTH + altitude_m) * math.sin(math.pi / sats_in_orbit)


def isl_hop_time(config: ConstellationConfig, p: int, S: float, budget: LinkBudget) -> float:
    """Neighbour-to-neighbour delivery time in orbit ``p``; zero for a lone satellite."""
    K_p = config.sats_in(p)
    if K_p == 1:
        return 0.0
    h = config.altitude_m[p - 1]
    d = isl_hop_distance(h, K_p)
    if d >= max_slant_range(h, h):
        raise ConfigurationError(
            f"orbit {p}: neighbours {d:.0f} m apart exceed the slant range; intra-orbit links impossible"
        )
    return transfer_time(S, budget, d).transfer_s


def worst_case_gs_timing(
    config: ConstellationConfig,
    p: int,
    gs: GroundStation,
    min_elevation_deg: float,
    S: float,
    budget: LinkBudget,
    pattern: VisibilityPattern | None = None,
    horizon_s: float = 86400.0,
    step_s: float = 10.0,
) -> tuple[float, float]:
    """(station->cluster, cluster->station) delivery times at the longest visible range."""
    if pattern is None:
        pattern = cluster_pattern(config, p, gs, min_elevation_deg, horizon_s, step_s)
    if len(pattern) == 0:
        raise InfeasibleError(f"cluster {p} is never visible from {gs.name}")
    d = max_gs_distance(config.altitude_m[p - 1], min_elevation_deg)
    t = transfer_time(S, budget, d).transfer_s
    return t, t
