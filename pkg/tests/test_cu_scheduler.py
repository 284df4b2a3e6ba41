import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_pattern
from satfl.cu_scheduler import (
    available_time,
    isl_round_time,
    local_epochs,
    plan_cluster,
    raw_local_epochs,
    select_sink,
    select_sink_in_orbit,
)
from satfl.errors import InfeasibleError, SchedulingInconsistencyError
from satfl.gu_scheduler import ClusterTiming, next_global_update
from satfl.orbital import ConstellationConfig, GroundStation, SatelliteId, VisibilityPattern, satellite_pattern, union_patterns


class TestAvailableTime:
    def test_visible_branch(self):
        pat = VisibilityPattern.from_pairs([(0, 6000)], 10_000)
        assert available_time(pat, 5000, 1000) == 4000

    def test_gap_branch(self):
        pat = VisibilityPattern.from_pairs([(0, 4200), (6000, 7000)], 10_000)
        assert available_time(pat, 5000, 1000) == 3200

    def test_latest_set_wins(self):
        pat = VisibilityPattern.from_pairs([(0, 1500), (2000, 4200), (6000, 7000)], 10_000)
        assert available_time(pat, 5000, 1000) == 3200

    def test_inconsistent(self):
        pat = VisibilityPattern.from_pairs([(0, 900), (6000, 7000)], 10_000)
        with pytest.raises(SchedulingInconsistencyError):
            available_time(pat, 5000, 1000)
        with pytest.raises(SchedulingInconsistencyError):
            available_time(pat, 1000, 1000)

    def test_against_grid_scan(self, rng):
        """The longest usable span after t_X equals the farthest visible 1 s instant up to t_n."""
        grid = np.arange(0, 20_001, 1.0)
        checked = 0
        while checked < 100:
            pat = random_pattern(rng)
            iv = pat.intervals[int(rng.integers(len(pat)))]
            t_x = float(rng.integers(int(iv.rise_s), int(iv.set_s)))
            t_n = float(rng.integers(int(t_x) + 1, 20_001))
            vis = np.array([pat.contains(t) for t in grid])
            usable = grid[vis & (grid > t_x) & (grid <= t_n)]
            if not len(usable):
                continue
            assert available_time(pat, t_n, t_x) == pytest.approx(usable.max() - t_x, abs=1.0)
            checked += 1


class TestIslRound:
    @pytest.mark.parametrize("K, hop, expected", [(8, 12, 48), (1, 7, 7), (9, 10, 50)])
    def test_examples(self, K, hop, expected):
        assert isl_round_time(K, hop) == expected


class TestLocalEpochs:
    def test_exact_fit(self):
        assert local_epochs(3 * 3600 + 2 * 48 + 5, 48, 5, 3600) == 3

    def test_floor_strictness(self):
        eps = 1e-6
        assert local_epochs(3 * 3600 + 2 * 48 + 5 - eps, 48, 5, 3600) == 2

    def test_exact_rational_floor(self):
        # 0.1 + 0.2 in floats is slightly above 0.3
        assert raw_local_epochs(0.1 + 0.2, 0.0, 0.0, 0.3) == 1
        assert raw_local_epochs(0.3, 0.0, 0.0, 0.1 + 0.2) == 0

    def test_clamp_warns(self, caplog):
        with caplog.at_level(logging.WARNING):
            assert local_epochs(100, 48, 5, 3600) == 1
        assert "clamping" in caplog.text

    @given(st.floats(0, 1e5), st.floats(0, 100), st.floats(0, 50), st.floats(1, 5000))
    def test_floor_brackets_budget(self, t_a, isl, up, epoch):
        """Raw epochs fit inside the budget and one more epoch would not."""
        raw = raw_local_epochs(t_a, isl, up, epoch)
        budget = t_a - 2 * isl - up
        assert raw * epoch <= budget + 1e-9 * max(1.0, abs(budget))
        assert (raw + 1) * epoch > budget - 1e-9 * max(1.0, abs(budget))

    def test_bad_epoch(self):
        with pytest.raises(ValueError):
            local_epochs(100, 0, 0, 0)


class TestSelectSink:
    def test_singleton(self):
        a = SatelliteId(1, 1)
        assert select_sink({a: VisibilityPattern.from_pairs([(0, 10)], 100)}, 5) == a

    def test_longest_remaining(self):
        a, b = SatelliteId(1, 1), SatelliteId(1, 2)
        pats = {a: VisibilityPattern.from_pairs([(0, 400)], 2000), b: VisibilityPattern.from_pairs([(50, 1000)], 2000)}
        assert select_sink(pats, 100) == b

    def test_tie_lowest_slot(self):
        a, b = SatelliteId(1, 1), SatelliteId(1, 2)
        pats = {b: VisibilityPattern.from_pairs([(0, 400)], 2000), a: VisibilityPattern.from_pairs([(50, 400)], 2000)}
        assert select_sink(pats, 100) == a

    def test_covering_preference(self):
        a, b = SatelliteId(1, 1), SatelliteId(1, 2)
        pats = {a: VisibilityPattern.from_pairs([(0, 400)], 2000), b: VisibilityPattern.from_pairs([(99.99, 1000)], 2000)}
        assert select_sink(pats, 100, covering_from=99.9) == a
        assert select_sink(pats, 100) == b

    def test_none_visible(self):
        with pytest.raises(SchedulingInconsistencyError):
            select_sink({SatelliteId(1, 1): VisibilityPattern.from_pairs([(0, 10)], 100)}, 50)

    def test_preset_against_scan(self):
        """Sink at a visible instant equals the member whose 1 s visibility run lasts longest."""
        cfg = ConstellationConfig(5, 8, 2e6, 60.0)
        gs = GroundStation.preset("bremen")
        horizon = 86_400.0
        members = {s: satellite_pattern(cfg, s, gs, 10.0, horizon) for s in cfg.satellites(1)}
        cl = union_patterns(list(members.values()))
        at = math.floor(0.5 * (cl.intervals[1].rise_s + cl.intervals[1].set_s))
        grid = np.arange(at, horizon + 1)
        runs = {}
        for s, pat in members.items():
            if not pat.contains(at):
                continue
            vis = np.array([pat.contains(t) for t in grid])
            runs[s] = int(np.argmin(vis)) if not vis.all() else len(vis)
        want = max(runs, key=lambda s: (runs[s], -s.slot))
        assert select_sink_in_orbit(cfg, 1, gs, 10.0, at, horizon) == want


def test_plan_cluster_invariants(rng):
    sats = [SatelliteId(1, s) for s in range(1, 4)]
    checked = 0
    while checked < 60:
        members = {s: random_pattern(rng, horizon=40_000, max_intervals=5, subject=str(s)) for s in sats}
        cl = union_patterns(list(members.values()))
        timing = ClusterTiming(*rng.uniform(0, 20, size=3), 600.0, 600.0)
        try:
            sched = next_global_update([(cl, timing)], float(rng.uniform(0, 5000)))
        except InfeasibleError:
            continue
        row = sched.cluster(1)
        plan = plan_cluster(1, 1, cl, members, sched.global_update_s, row.rise_s, timing)
        assert plan.epochs >= 1
        assert plan.receive_s + plan.available_s <= sched.global_update_s + 1e-9
        assert cl.contains(plan.contact_s)
        assert members[plan.sink].contains(plan.contact_s)
        assert members[plan.source].contains(row.rise_s)
        assert plan.to_json()["epochs"] == plan.epochs
        checked += 1


def test_strict_mode_never_clamps(rng):
    sats = [SatelliteId(1, s) for s in range(1, 4)]
    for _ in range(100):
        members = {s: random_pattern(rng, horizon=40_000, max_intervals=5, subject=str(s)) for s in sats}
        cl = union_patterns(list(members.values()))
        timing = ClusterTiming(*rng.uniform(0, 20, size=3), 600.0, 600.0)
        try:
            sched = next_global_update([(cl, timing)], float(rng.uniform(0, 5000)), strict=True)
        except InfeasibleError:
            continue
        plan = plan_cluster(1, 1, cl, members, sched.global_update_s, sched.cluster(1).rise_s, timing)
        assert plan.raw_epochs >= 1
