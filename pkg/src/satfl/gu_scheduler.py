"""Ground-station side scheduler: earliest feasible global-update instant per slot."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .errors import HorizonExhaustedError, InfeasibleError
from .orbital import VisibilityPattern


@dataclass(frozen=True)
class ClusterTiming:
    """Durations (s) a cluster needs per slot.

    ``min_learning_s`` is the minimum learning duration the GS budgets for; it is
    independent of ``epoch_s``, which the cluster uses to count epochs.
    """

    gs_to_cluster_s: float
    cluster_to_gs_s: float
    isl_round_s: float
    min_learning_s: float
    epoch_s: float

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if v < 0:
                raise ValueError(f"{k} must be non-negative")


@dataclass(frozen=True)
class ClusterSlot:
    cluster: int
    rise_s: float
    demand_s: float
    feasible_s: float


@dataclass(frozen=True)
class SlotSchedule:
    slot_index: int
    slot_start_s: float
    global_update_s: float
    per_cluster: tuple[ClusterSlot, ...] = field(default_factory=tuple)

    def cluster(self, p: int) -> ClusterSlot:
        return self.per_cluster[p - 1]

    def to_json(self) -> dict:
        return {
            "n": self.slot_index,
            "slot_start_s": round(self.slot_start_s, 3),
            "t_n_s": round(self.global_update_s, 3),
            "clusters": [
                {"cluster": c.cluster, "rise_s": round(c.rise_s, 3), "demand_s": round(c.demand_s, 3),
                 "feasible_s": round(c.feasible_s, 3)}
                for c in self.per_cluster
            ],
        }


def first_rise(pattern: VisibilityPattern, after_s: float) -> float:
    """First instant at or after ``after_s`` at which the station can reach the subject.

    An ongoing pass counts: if ``after_s`` lies inside an interval it is returned as is.
    """
    if pattern.index_at(after_s) is not None:
        return after_s
    m = pattern.next_rise_index(after_s)
    if m is None:
        raise HorizonExhaustedError(f"{pattern.subject or 'pattern'}: no visibility after t={after_s:.3f} s")
    return pattern.intervals[m].rise_s


def _demand_after_rise(rise: float, timing: ClusterTiming) -> float:
    return rise + timing.gs_to_cluster_s + timing.isl_round_s + timing.min_learning_s + timing.isl_round_s


def demand_time(pattern: VisibilityPattern, slot_start_s: float, timing: ClusterTiming) -> float:
    """Instant by which receive, distribute, minimum learning and collect can be done."""
    return _demand_after_rise(first_rise(pattern, slot_start_s), timing)


def feasible_time(
    pattern: VisibilityPattern, demand_s: float, timing: ClusterTiming, strict: bool = False
) -> float:
    """Earliest arrival of the cluster aggregate at the station.

    Literal mode checks only that ``demand_s`` lies in a closed visibility interval.
    ``strict`` additionally requires the uplink to finish before that interval's set
    time, otherwise it moves on to the first later interval long enough to hold it.
    """
    up = timing.cluster_to_gs_s
    m = pattern.index_at(demand_s)
    if m is not None and (not strict or demand_s + up <= pattern.intervals[m].set_s):
        return demand_s + up
    k = pattern.next_rise_index(demand_s)
    while k is not None and k < len(pattern):
        iv = pattern.intervals[k]
        if not strict or iv.rise_s + up <= iv.set_s:
            return iv.rise_s + up
        k += 1
    raise HorizonExhaustedError(
        f"{pattern.subject or 'pattern'}: no rise after demand time {demand_s:.3f} s within horizon"
    )


def next_global_update(
    clusters: Sequence[tuple[VisibilityPattern, ClusterTiming]],
    slot_start_s: float,
    slot_index: int = 1,
    strict: bool = False,
) -> SlotSchedule:
    """Schedule slot ``slot_index``: the update happens once every cluster can deliver."""
    if not clusters:
        raise ValueError("need at least one cluster")
    rows = []
    for p, (pattern, timing) in enumerate(clusters, start=1):
        try:
            rise = first_rise(pattern, slot_start_s)
            t_d = _demand_after_rise(rise, timing)
            t_f = feasible_time(pattern, t_d, timing, strict)
        except HorizonExhaustedError as exc:
            raise HorizonExhaustedError(f"cluster {p} infeasible in slot {slot_index}: {exc}") from exc
        rows.append(ClusterSlot(p, rise, t_d, t_f))
    t_n = max(r.feasible_s for r in rows)
    if not t_n > slot_start_s:
        raise InfeasibleError(f"slot {slot_index}: update instant {t_n} does not advance past {slot_start_s}")
    return SlotSchedule(slot_index, slot_start_s, t_n, tuple(rows))
