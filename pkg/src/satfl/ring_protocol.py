"""Intra-orbit ring protocol: bidirectional distribution and in-network weighted aggregation.

The protocol is simulated, not executed: every function returns the hop events it
would produce together with their timestamps, computed from a constant per-hop
delivery time. Satellites forward on both ISL antennas at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InfeasibleError, ProtocolError
from .orbital import SatelliteId, VisibilityPattern

GS = "GS"

DOWNLINK = "downlink"
DISTRIBUTE = "distribute"
COLLECT = "collect"
UPLINK = "uplink"
FALLBACK = "fallback"


@dataclass(frozen=True)
class RingTopology:
    members: tuple[SatelliteId, ...]
    hop_s: float

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ProtocolError("a ring needs at least one satellite")
        if len(set(self.members)) != len(self.members):
            raise ProtocolError("duplicate satellite in ring")
        if self.hop_s < 0:
            raise ProtocolError("hop time must be non-negative")

    @classmethod
    def for_orbit(cls, p: int, sats_in_orbit: int, hop_s: float) -> "RingTopology":
        return cls(tuple(SatelliteId(p, s) for s in range(1, sats_in_orbit + 1)), hop_s)

    def __len__(self) -> int:
        return len(self.members)

    def index(self, sat: SatelliteId) -> int:
        try:
            return self.members.index(sat)
        except ValueError:
            raise ProtocolError(f"{sat} is not on this ring") from None

    def at(self, i: int) -> SatelliteId:
        return self.members[i % len(self.members)]

    def distance(self, a: SatelliteId, b: SatelliteId) -> int:
        c = (self.index(b) - self.index(a)) % len(self)
        return min(c, len(self) - c)

    def path(self, src: SatelliteId, dst: SatelliteId) -> list[SatelliteId]:
        """Shortest hop sequence from ``src`` to ``dst`` (both included).

        When both arcs are equally long the one whose first hop is the lower
        satellite id is taken.
        """
        K = len(self)
        i, j = self.index(src), self.index(dst)
        cw = (j - i) % K
        ccw = K - cw if cw else 0
        if cw < ccw or (cw == ccw and self.at(i + 1) <= self.at(i - 1)):
            return [self.at(i + k) for k in range(cw + 1)]
        return [self.at(i - k) for k in range(ccw + 1)]


@dataclass(frozen=True)
class HopEvent:
    time_s: float
    src: SatelliteId | str
    dst: SatelliteId | str
    kind: str
    payload_bits: float
    arrival_s: float
    slot: int = 0

    def to_json(self) -> dict:
        return {
            "slot": self.slot,
            "time_s": round(self.time_s, 3),
            "arrival_s": round(self.arrival_s, 3),
            "from": str(self.src),
            "to": str(self.dst),
            "kind": self.kind,
            "payload_bits": int(self.payload_bits),
        }


def write_events_jsonl(events: Iterable[HopEvent], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")


def tag_slot(events: Iterable[HopEvent], slot: int) -> list[HopEvent]:
    return [replace(e, slot=slot) for e in events]


@dataclass
class PartialAggregate:
    """Running ``sum D_k w_k`` with its integer weight ``sum D_k``."""

    weighted_sum: np.ndarray
    weight: int
    contributors: frozenset = field(default_factory=frozenset)

    @classmethod
    def of(cls, sat: SatelliteId, samples: int, params: np.ndarray) -> "PartialAggregate":
        return cls(int(samples) * np.asarray(params, dtype=float), int(samples), frozenset([sat]))

    def merge(self, other: "PartialAggregate") -> "PartialAggregate":
        if self.contributors & other.contributors:
            raise ProtocolError("satellite counted twice in aggregate")
        return PartialAggregate(
            self.weighted_sum + other.weighted_sum, self.weight + other.weight, self.contributors | other.contributors
        )

    def finalize(self) -> np.ndarray:
        return self.weighted_sum / self.weight


def _opposite_parent(ring: RingTopology, i: int) -> int:
    """For even rings: the diametric node forwards towards its lower-id neighbour."""
    K = len(ring)
    return (i - 1) % K if ring.at(i - 1) < ring.at(i + 1) else (i + 1) % K


def receive_times(ring: RingTopology, source: SatelliteId, start_s: float) -> dict[SatelliteId, float]:
    s = ring.index(source)
    return {ring.at(s + k): start_s + ring.distance(source, ring.at(s + k)) * ring.hop_s for k in range(len(ring))}


def distribute(
    ring: RingTopology, source: SatelliteId, payload_bits: float, start_s: float
) -> tuple[list[HopEvent], float]:
    """Flood the global model from ``source`` along both arcs of the ring."""
    K = len(ring)
    s = ring.index(source)
    hop = ring.hop_s
    events = []
    for d in range(1, K // 2 + 1):
        senders = [(s + d - 1, s + d), (s - d + 1, s - d)]
        if 2 * d == K:
            # both arcs reach the same satellite; only the designated arc delivers
            target = (s + d) % K
            parent = _opposite_parent(ring, target)
            senders = [(parent, target)]
        for a, b in senders:
            t = start_s + (d - 1) * hop
            events.append(HopEvent(t, ring.at(a), ring.at(b), DISTRIBUTE, payload_bits, t + hop))
    events.sort(key=lambda e: (e.arrival_s, e.dst))
    completion = start_s + (K // 2) * hop
    return events, completion


def collect(
    ring: RingTopology,
    sink: SatelliteId,
    locals_: Sequence[tuple[SatelliteId, int, np.ndarray]],
    start_s: float | Mapping[SatelliteId, float],
    payload_bits: float = 0.0,
) -> tuple[list[HopEvent], PartialAggregate, float]:
    """Aggregate every member's ``(D_k, w_k)`` towards ``sink`` along the two arcs.

    ``start_s`` is either one instant at which all locals are ready or a per-satellite
    mapping of ready times. Each relay forwards once its own model and all upstream
    partial aggregates are in hand.
    """
    K = len(ring)
    k_sink = ring.index(sink)
    by_sat = {}
    for sat, samples, params in locals_:
        if sat in by_sat:
            raise ProtocolError(f"duplicate local contribution from {sat}")
        by_sat[sat] = PartialAggregate.of(sat, samples, params)
    for sat in ring.members:
        if sat not in by_sat:
            raise ProtocolError(f"missing local contribution from {sat}")
    if len(by_sat) != K:
        extra = sorted(set(by_sat) - set(ring.members))
        raise ProtocolError(f"contributions from satellites outside the ring: {extra}")
    if isinstance(start_s, Mapping):
        ready = {sat: float(start_s[sat]) for sat in ring.members}
    else:
        ready = {sat: float(start_s) for sat in ring.members}

    parent = {}
    for i in range(K):
        c = (i - k_sink) % K
        if c == 0:
            continue
        if c < K - c:
            parent[i] = (i - 1) % K
        elif c > K - c:
            parent[i] = (i + 1) % K
        else:
            parent[i] = _opposite_parent(ring, i)

    order = sorted(parent, key=lambda i: (-ring.distance(sink, ring.at(i)), ring.at(i)))
    partial = {i: by_sat[ring.at(i)] for i in range(K)}
    inbound: dict[int, float] = {i: ready[ring.at(i)] for i in range(K)}
    hop = ring.hop_s
    events = []
    for i in order:
        j = parent[i]
        t_send = inbound[i]
        events.append(HopEvent(t_send, ring.at(i), ring.at(j), COLLECT, payload_bits, t_send + hop))
        partial[j] = partial[j].merge(partial[i])
        inbound[j] = max(inbound[j], t_send + hop)
    events.sort(key=lambda e: (e.arrival_s, e.src))
    return events, partial[k_sink], inbound[k_sink]


def next_visible(pattern: VisibilityPattern, t: float) -> float | None:
    if pattern.contains(t):
        return t
    m = pattern.next_rise_index(t)
    return None if m is None else pattern.intervals[m].rise_s


def fallback_handoff(
    ring: RingTopology,
    sink: SatelliteId,
    aggregate: PartialAggregate,
    gs_visibility_per_sat: Mapping[SatelliteId, VisibilityPattern],
    t: float,
    payload_bits: float = 0.0,
    uplink_s: float = 0.0,
) -> list[HopEvent]:
    """Hand the aggregate to the ring member that can reach the station soonest.

    Cost of a candidate = arrival over the shortest ring path, then waiting for its
    next contact. Returns the relay hops followed by the uplink, or nothing when the
    sink is visible at ``t``.
    """
    if gs_visibility_per_sat[sink].contains(t):
        return []
    best = None
    for sat in ring.members:
        route = ring.path(sink, sat)
        hops = len(route) - 1
        v = next_visible(gs_visibility_per_sat[sat], t + hops * ring.hop_s)
        if v is None:
            continue
        key = (v, hops, sat)
        if best is None or key < best[0]:
            best = (key, route)
    if best is None:
        raise InfeasibleError(f"no satellite on the ring of {sink} sees the station again within the horizon")
    (v, hops, relay), route = best
    events = []
    for k in range(hops):
        ts = t + k * ring.hop_s
        events.append(HopEvent(ts, route[k], route[k + 1], FALLBACK, payload_bits, ts + ring.hop_s))
    events.append(HopEvent(v, relay, GS, UPLINK, payload_bits, v + uplink_s))
    return events
