"""Orbit-side scheduler: training budget, epoch count and sink for one cluster."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .errors import SchedulingInconsistencyError
from .gu_scheduler import ClusterTiming
from .orbital import ConstellationConfig, GroundStation, SatelliteId, VisibilityPattern, satellite_pattern

log = logging.getLogger(__name__)

_ROUNDING_ULPS = 16


@dataclass(frozen=True)
class ClusterPlan:
    slot: int
    cluster: int
    receive_s: float
    available_s: float
    epochs: int
    raw_epochs: int
    source: SatelliteId
    sink: SatelliteId

    @property
    def contact_s(self) -> float:
        """Last instant the plan allows for the station contact."""
        return self.receive_s + self.available_s

    @property
    def clamped(self) -> bool:
        return self.raw_epochs < 1

    def to_json(self) -> dict:
        return {
            "cluster": self.cluster,
            "t_x": round(self.receive_s, 3),
            "t_a": round(self.available_s, 3),
            "epochs": self.epochs,
            "source": str(self.source),
            "sink": str(self.sink),
        }


def available_time(pattern: VisibilityPattern, t_n: float, t_x: float) -> float:
    """Longest duration after ``t_x`` that still ends on a station contact no later than ``t_n``."""
    if not t_x < t_n:
        raise SchedulingInconsistencyError(f"receive time {t_x} is not before the update instant {t_n}")
    if pattern.contains(t_n):
        return t_n - t_x
    m = pattern.last_set_index(t_n)
    if m is None or pattern.intervals[m].set_s <= t_x:
        raise SchedulingInconsistencyError(
            f"{pattern.subject or 'cluster'}: no set time in ({t_x:.3f}, {t_n:.3f}] while invisible at t_n"
        )
    return pattern.intervals[m].set_s - t_x


def isl_round_time(sats_in_orbit: int, hop_s: float) -> float:
    if sats_in_orbit < 1 or hop_s < 0:
        raise ValueError("need K_p >= 1 and a non-negative hop time")
    return math.ceil(sats_in_orbit / 2) * hop_s


def raw_local_epochs(
    available_s: float, isl_round_s: float, cluster_to_gs_s: float, epoch_s: float, slack_s: float = 0.0
) -> int:
    """Unclamped epoch budget; exact rational floor of the float inputs.

    ``slack_s`` is added to the budget before flooring, to absorb rounding in
    ``available_s`` when it was obtained by subtracting large timestamps.
    """
    if not epoch_s > 0:
        raise ValueError("epoch_s must be positive")
    budget = Fraction(available_s) + Fraction(slack_s) - 2 * Fraction(isl_round_s) - Fraction(cluster_to_gs_s)
    return math.floor(budget / Fraction(epoch_s))


def local_epochs(available_s: float, isl_round_s: float, cluster_to_gs_s: float, epoch_s: float) -> int:
    raw = raw_local_epochs(available_s, isl_round_s, cluster_to_gs_s, epoch_s)
    if raw < 1:
        log.warning("epoch budget %d < 1 (available %.3f s); clamping to one epoch", raw, available_s)
        return 1
    return raw


def select_sink(
    member_patterns: Mapping[SatelliteId, VisibilityPattern], at_time: float, covering_from: float | None = None
) -> SatelliteId:
    """Visible member with the longest remaining pass at ``at_time``; ties go to the lowest slot.

    With ``covering_from`` set, members whose current pass already covers
    ``[covering_from, at_time]`` are preferred, so the uplink can start early enough
    to land by ``at_time``.
    """
    best = None
    for sat in sorted(member_patterns):
        pat = member_patterns[sat]
        i = pat.index_at(at_time)
        if i is None:
            continue
        covers = covering_from is None or pat.intervals[i].rise_s <= covering_from
        key = (covers, pat.intervals[i].set_s - at_time)
        if best is None or key > best[0]:
            best = (key, sat)
    if best is None:
        raise SchedulingInconsistencyError(f"no member visible at t={at_time:.3f} s")
    return best[1]


def select_sink_in_orbit(
    config: ConstellationConfig,
    p: int,
    gs: GroundStation,
    min_elevation_deg: float,
    at_time: float,
    horizon_s: float,
    step_s: float = 10.0,
) -> SatelliteId:
    members = {s: satellite_pattern(config, s, gs, min_elevation_deg, horizon_s, step_s) for s in config.satellites(p)}
    return select_sink(members, at_time)


def plan_cluster(
    slot: int,
    p: int,
    cluster: VisibilityPattern,
    members: Mapping[SatelliteId, VisibilityPattern],
    t_n: float,
    rise_s: float,
    timing: ClusterTiming,
) -> ClusterPlan:
    """Source, receive instant, available time, epochs and sink for cluster ``p`` in ``slot``."""
    source = select_sink(members, rise_s)
    t_x = rise_s + timing.gs_to_cluster_s
    t_a = available_time(cluster, t_n, t_x)
    # t_a = t_n - t_x loses a few ulps of t_n; an exact fit must not floor to one epoch less
    slack = _ROUNDING_ULPS * math.ulp(t_n)
    raw = raw_local_epochs(t_a, timing.isl_round_s, timing.cluster_to_gs_s, timing.epoch_s, slack)
    if raw < 1:
        log.warning("slot %d cluster %d: epoch budget %d < 1; clamping to one epoch", slot, p, raw)
    contact = t_x + t_a
    sink = select_sink(members, contact, covering_from=contact - timing.cluster_to_gs_s)
    return ClusterPlan(slot, p, t_x, t_a, max(raw, 1), raw, source, sink)
