from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from satfl.errors import InfeasibleError, ProtocolError
from satfl.orbital import SatelliteId, VisibilityPattern
from satfl.ring_protocol import (
    COLLECT,
    DISTRIBUTE,
    FALLBACK,
    GS,
    UPLINK,
    HopEvent,
    PartialAggregate,
    RingTopology,
    collect,
    distribute,
    fallback_handoff,
    receive_times,
    write_events_jsonl,
)


def bfs_hops(K: int, src: int) -> list[int]:
    dist = [-1] * K
    dist[src] = 0
    q = deque([src])
    while q:
        u = q.popleft()
        for v in ((u + 1) % K, (u - 1) % K):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def ring(K, hop=10.0, p=1):
    return RingTopology.for_orbit(p, K, hop)


class TestTopology:
    def test_path_shortest_and_tie(self):
        r = ring(6)
        s = r.members
        assert r.path(s[0], s[2]) == [s[0], s[1], s[2]]
        assert r.path(s[0], s[4]) == [s[0], s[5], s[4]]
        # equal arcs: first hop to the lower id
        assert r.path(s[2], s[5]) == [s[2], s[1], s[0], s[5]]
        assert r.distance(s[0], s[3]) == 3

    def test_validation(self):
        with pytest.raises(ProtocolError):
            RingTopology((), 1.0)
        with pytest.raises(ProtocolError):
            RingTopology((SatelliteId(1, 1), SatelliteId(1, 1)), 1.0)
        with pytest.raises(ProtocolError):
            ring(3).index(SatelliteId(2, 1))


class TestDistribute:
    @pytest.mark.parametrize("K", range(1, 17))
    def test_matches_bfs(self, K):
        r = ring(K)
        for src in range(K):
            events, done = distribute(r, r.at(src), 100, 50.0)
            dist = bfs_hops(K, src)
            first = {r.at(src): 50.0}
            for e in events:
                assert e.kind == DISTRIBUTE and e.arrival_s == pytest.approx(e.time_s + 10.0)
                assert e.dst not in first, "satellite received the model twice"
                assert e.src in first and first[e.src] <= e.time_s
                first[e.dst] = e.arrival_s
            assert set(first) == set(r.members)
            for k in range(K):
                assert first[r.at(k)] == pytest.approx(50.0 + 10.0 * dist[k])
            assert done == pytest.approx(50.0 + 10.0 * max(dist))
            assert done <= 50.0 + 10.0 * -(-K // 2)
            assert len(events) == K - 1

    def test_odd_ring_completion(self):
        # five satellites, 10 s hops: farthest pair is two hops away
        _, done = distribute(ring(5), SatelliteId(1, 1), 0, 0.0)
        assert done == 20.0

    def test_receive_times(self):
        r = ring(8)
        rt = receive_times(r, r.at(0), 0.0)
        assert rt[r.at(4)] == 40.0 and rt[r.at(7)] == 10.0

    def test_single_satellite(self):
        events, done = distribute(ring(1), SatelliteId(1, 1), 10, 7.0)
        assert events == [] and done == 7.0


def _locals(rng, r, dim=32):
    return [(s, int(rng.integers(1, 1001)), rng.normal(size=dim)) for s in r.members]


class TestCollect:
    @pytest.mark.parametrize("K", [1, 2, 3, 4, 7, 8, 16])
    def test_equals_weighted_mean(self, K, rng):
        r = ring(K)
        loc = _locals(rng, r)
        for sink in r.members:
            events, agg, done = collect(r, sink, loc, 0.0)
            want = sum(d * w for _, d, w in loc) / sum(d for _, d, _ in loc)
            np.testing.assert_allclose(agg.finalize(), want, rtol=1e-12, atol=1e-14)
            assert agg.weight == sum(d for _, d, _ in loc)
            assert agg.contributors == frozenset(r.members)
            assert len(events) == K - 1
            senders = [e.src for e in events]
            assert len(set(senders)) == len(senders), "a relay forwarded twice"
            assert sink not in senders
            assert done <= -(-K // 2) * 10.0

    def test_farthest_first(self):
        r = ring(8)
        events, _, done = collect(r, r.at(0), [(s, 1, np.zeros(2)) for s in r.members], 100.0)
        assert min(events, key=lambda e: e.time_s).src == r.at(4)
        assert done == 140.0

    def test_waits_for_slow_relays(self):
        r = ring(5)
        ready = {s: 0.0 for s in r.members}
        ready[r.at(2)] = 500.0
        _, _, done = collect(r, r.at(0), [(s, 1, np.zeros(1)) for s in r.members], ready)
        # r.at(2) is two hops from the sink
        assert done == 520.0

    def test_bad_inputs(self):
        r = ring(3)
        loc = [(s, 1, np.zeros(1)) for s in r.members]
        with pytest.raises(ProtocolError):
            collect(r, r.at(0), loc[:2], 0.0)
        with pytest.raises(ProtocolError):
            collect(r, r.at(0), loc + [loc[0]], 0.0)
        with pytest.raises(ProtocolError):
            collect(r, r.at(0), loc + [(SatelliteId(9, 9), 1, np.zeros(1))], 0.0)

    @given(st.integers(1, 12), st.integers(0, 2**31), st.data())
    def test_conservation(self, K, seed, data):
        rng = np.random.default_rng(seed)
        r = ring(K)
        loc = _locals(rng, r, dim=4)
        sink = r.at(data.draw(st.integers(0, K - 1)))
        _, agg, _ = collect(r, sink, loc, 0.0)
        assert agg.weight == sum(d for _, d, _ in loc)


def test_partial_aggregate_double_count():
    a = PartialAggregate.of(SatelliteId(1, 1), 3, np.ones(2))
    with pytest.raises(ProtocolError):
        a.merge(a)


class TestFallback:
    def _pats(self, visible_now):
        r = ring(6)
        pats = {s: VisibilityPattern.from_pairs([(5000, 6000)], 10_000) for s in r.members}
        for k in visible_now:
            pats[r.at(k)] = VisibilityPattern.from_pairs([(0, 2000)], 10_000)
        return r, pats

    def test_sink_visible(self):
        r, pats = self._pats([0])
        agg = PartialAggregate.of(r.at(0), 1, np.zeros(1))
        assert fallback_handoff(r, r.at(0), agg, pats, 100.0) == []

    def test_neighbor_visible(self):
        r, pats = self._pats([1])
        agg = PartialAggregate.of(r.at(0), 1, np.zeros(1))
        events = fallback_handoff(r, r.at(0), agg, pats, 100.0, payload_bits=8, uplink_s=2.0)
        assert [e.kind for e in events] == [FALLBACK, UPLINK]
        assert events[0].dst == r.at(1) and events[1].src == r.at(1) and events[1].dst == GS
        assert events[1].time_s == 110.0 and events[1].arrival_s == 112.0

    def test_waits_for_own_pass_when_best(self):
        r, pats = self._pats([])
        agg = PartialAggregate.of(r.at(0), 1, np.zeros(1))
        events = fallback_handoff(r, r.at(0), agg, pats, 100.0)
        assert [e.kind for e in events] == [UPLINK] and events[0].time_s == 5000.0

    def test_never_visible(self):
        r = ring(3)
        pats = {s: VisibilityPattern.from_pairs([(0, 10)], 100) for s in r.members}
        with pytest.raises(InfeasibleError):
            fallback_handoff(r, r.at(0), PartialAggregate.of(r.at(0), 1, np.zeros(1)), pats, 50.0)


def test_events_jsonl(tmp_path):
    path = tmp_path / "e.jsonl"
    write_events_jsonl([HopEvent(1.23456, GS, SatelliteId(1, 2), "downlink", 64, 2.0, slot=1)], path)
    assert path.read_text() == (
        '{"arrival_s": 2.0, "from": "GS", "kind": "downlink", "payload_bits": 64, "slot": 1, '
        '"time_s": 1.235, "to": "sat-1-2"}\n'
    )
