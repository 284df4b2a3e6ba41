"""Discrete-event orchestration of synchronous satellite federated learning.

Each slot runs: GU schedule -> downlink to a source -> ring distribution -> local
training -> ring collection -> sink uplink -> global update. Protocol timings come
from the ring and link models; the SGD itself is real. Training time is simulated
as ``epochs * epoch_s`` on the satellite clock.
"""

from __future__ import annotations

import csv
import heapq
import io
import itertools
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .cu_scheduler import ClusterPlan, isl_round_time, plan_cluster, select_sink
from .errors import ConfigurationError, DeadlineViolation, HorizonExhaustedError
from .fl_engine import (
    Dataset,
    HyperParams,
    dirichlet_partition,
    evaluate,
    global_update,
    param_dim,
    sgd_epochs,
    split_holdout,
    synth_dataset,
    zero_model,
)
from .gu_scheduler import ClusterTiming, SlotSchedule, feasible_time, first_rise, next_global_update
from .linkmodel import LinkBudget, isl_hop_time, payload_bits, worst_case_gs_timing
from .orbital import ConstellationConfig, ConstellationVisibility, GroundStation, SatelliteId, constellation_visibility
from .ring_protocol import (
    DOWNLINK,
    GS,
    UPLINK,
    HopEvent,
    PartialAggregate,
    RingTopology,
    collect,
    distribute,
    fallback_handoff,
    next_visible,
    receive_times,
    tag_slot,
    write_events_jsonl,
)

log = logging.getLogger(__name__)

DEADLINE_TOL_S = 1e-6

# Same-instant ordering: arrivals before the update that needs them, the update
# before the next slot starts.
_PRIO_ARRIVAL, _PRIO_DEFAULT, _PRIO_UPDATE, _PRIO_SLOT = 0, 1, 2, 3


@dataclass(frozen=True)
class Mode:
    kind: str = "scheduled"
    epochs: int | None = None

    def __post_init__(self):
        if self.kind == "scheduled":
            if self.epochs is not None:
                raise ConfigurationError("scheduled mode takes no fixed epoch count")
        elif self.kind == "fixed":
            if self.epochs is None or self.epochs < 1:
                raise ConfigurationError("fixed mode needs an epoch count >= 1")
        else:
            raise ConfigurationError(f"unknown mode {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "Mode":
        text = str(text).strip().lower()
        if text == "scheduled":
            return cls()
        if text.startswith("fixed:"):
            try:
                return cls("fixed", int(text.split(":", 1)[1]))
            except ValueError:
                pass
        raise ConfigurationError(f"mode must be 'scheduled' or 'fixed:I', got {text!r}")

    @property
    def scheduled(self) -> bool:
        return self.kind == "scheduled"

    def __str__(self) -> str:
        return "scheduled" if self.scheduled else f"fixed:{self.epochs}"


@dataclass(frozen=True)
class DataSpec:
    num_classes: int = 10
    num_features: int = 20
    train_samples: int = 5000
    test_samples: int = 1000
    dirichlet_alpha: float = 0.5
    class_separation: float = 1.0
    conditioning: float = 1.0
    payload_params: int | None = None


@dataclass(frozen=True)
class Scenario:
    constellation: ConstellationConfig
    gs: GroundStation
    min_elevation_deg: float
    budget: LinkBudget
    epoch_s: float
    slots: int
    horizon_s: float
    mode: Mode = field(default_factory=Mode)
    data: DataSpec = field(default_factory=DataSpec)
    learning_rate: float = 0.1
    batch_size: int = 10
    regularization: float = 0.0
    min_learning_s: float | None = None
    seed: int = 0
    step_s: float = 10.0
    strict_gu: bool = False
    fallback: bool = False
    name: str = "scenario"

    def __post_init__(self):
        if self.slots < 1:
            raise ConfigurationError("slots must be >= 1")
        if self.horizon_s <= 0 or self.epoch_s <= 0:
            raise ConfigurationError("horizon_s and epoch_s must be positive")

    @property
    def learning_floor_s(self) -> float:
        return self.epoch_s if self.min_learning_s is None else self.min_learning_s

    def label(self) -> str:
        return f"{self.name}/{self.mode}"


@dataclass(frozen=True)
class MetricsRow:
    slot: int
    t_n_s: float
    accuracy: float
    loss: float
    epochs: tuple[int, ...]


@dataclass
class MetricsLog:
    rows: list[MetricsRow] = field(default_factory=list)
    events: list[HopEvent] = field(default_factory=list)
    schedule: list[dict] = field(default_factory=list)
    truncated: bool = False
    truncation_reason: str | None = None
    label: str = ""
    clusters: int = 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "t_n_s", "accuracy", "loss"] + [f"I_{p}" for p in range(1, self.clusters + 1)])
        for r in self.rows:
            w.writerow([r.slot, f"{r.t_n_s:.3f}", f"{r.accuracy:.6f}", f"{r.loss:.6f}", *r.epochs])
        if self.truncated:
            buf.write(f"# truncated: {self.truncation_reason}\n")
        return buf.getvalue()

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {"metrics": out / "metrics.csv", "events": out / "events.jsonl", "schedule": out / "schedule.json"}
        paths["metrics"].write_text(self.to_csv(), encoding="utf-8")
        write_events_jsonl(self.events, paths["events"])
        write_schedule_json(self.schedule, paths["schedule"], self.truncated, self.truncation_reason)
        return paths


def write_schedule_json(slots: Sequence[dict], path, truncated=False, reason=None) -> None:
    doc = {"slots": list(slots), "truncated": truncated}
    if truncated:
        doc["truncation_reason"] = reason
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


class EventQueue:
    """Monotone priority queue keyed by ``(time, priority, insertion sequence)``."""

    def __init__(self):
        self._heap: list = []
        self._seq = itertools.count()
        self.now = 0.0

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, time: float, action: Callable, *args, priority: int = _PRIO_DEFAULT) -> None:
        if time < self.now:
            raise ValueError(f"event at {time} scheduled in the past (now={self.now})")
        heapq.heappush(self._heap, (time, priority, next(self._seq), action, args))

    def clear(self) -> None:
        self._heap.clear()

    def run(self) -> None:
        while self._heap:
            time, _, _, action, args = heapq.heappop(self._heap)
            self.now = time
            action(time, *args)


@dataclass
class _ClusterRun:
    epochs: int
    source: SatelliteId
    sink: SatelliteId
    record: dict
    plan: ClusterPlan | None = None
    ready: dict = field(default_factory=dict)
    locals_: list = field(default_factory=list)
    arrival_s: float | None = None
    aggregate: PartialAggregate | None = None


def derive_timings(
    scenario: Scenario, vis: ConstellationVisibility
) -> tuple[dict[int, ClusterTiming], dict[int, float]]:
    """Per-cluster GU/CU timings and per-orbit ISL hop times from the link budget."""
    cfg = scenario.constellation
    bits = payload_bits(scenario.data.payload_params or param_dim(scenario.data.num_features, scenario.data.num_classes))
    timings, hops = {}, {}
    for p in range(1, cfg.orbit_count + 1):
        hop = isl_hop_time(cfg, p, bits, scenario.budget)
        down, up = worst_case_gs_timing(
            cfg, p, scenario.gs, scenario.min_elevation_deg, bits, scenario.budget, pattern=vis.clusters[p]
        )
        hops[p] = hop
        timings[p] = ClusterTiming(down, up, isl_round_time(cfg.sats_in(p), hop), scenario.learning_floor_s, scenario.epoch_s)
    return timings, hops


def _fixed_cluster_slot(pattern, timing: ClusterTiming, slot_start: float, epochs: int, strict: bool):
    """Unscheduled cluster: earliest delivery after training exactly ``epochs`` epochs."""
    t = replace(timing, min_learning_s=epochs * timing.epoch_s)
    rise = first_rise(pattern, slot_start)
    demand = rise + t.gs_to_cluster_s + t.isl_round_s + t.min_learning_s + t.isl_round_s
    return rise, demand, feasible_time(pattern, demand, t, strict)


class Simulation:
    """One run of a scenario. ``timings`` may override the link-derived cluster timings."""

    def __init__(
        self,
        scenario: Scenario,
        visibility: ConstellationVisibility | None = None,
        timings: dict[int, ClusterTiming] | None = None,
    ):
        self.sc = scenario
        cfg = scenario.constellation
        self.vis = visibility or constellation_visibility(
            cfg, scenario.gs, scenario.min_elevation_deg, scenario.horizon_s, scenario.step_s
        )
        derived, hops = derive_timings(scenario, self.vis)
        self.timings = timings or derived
        if timings is not None:
            hops = {p: (0.0 if cfg.sats_in(p) == 1 else timings[p].isl_round_s / -(-cfg.sats_in(p) // 2))
                    for p in timings}
        self.rings = {p: RingTopology.for_orbit(p, cfg.sats_in(p), hops[p]) for p in range(1, cfg.orbit_count + 1)}
        spec = scenario.data
        self.payload = payload_bits(spec.payload_params or param_dim(spec.num_features, spec.num_classes))

        full = synth_dataset(
            spec.num_classes, spec.num_features, spec.train_samples + spec.test_samples,
            seed=[scenario.seed, 0], separation=spec.class_separation, conditioning=spec.conditioning,
        )
        train, self.test = split_holdout(full, spec.test_samples)
        sats = cfg.satellites()
        parts = dirichlet_partition(train, len(sats), spec.dirichlet_alpha, seed=[scenario.seed, 1])
        self.data: dict[SatelliteId, Dataset] = dict(zip(sats, parts))
        self.flat_index = {s: i for i, s in enumerate(sats)}

    # -- event handlers ---------------------------------------------------

    def run(self) -> MetricsLog:
        sc = self.sc
        P = sc.constellation.orbit_count
        self.log = MetricsLog(label=sc.label(), clusters=P)
        self.w = zero_model(sc.data.num_features, sc.data.num_classes)
        self.q = EventQueue()
        self.q.push(0.0, self._start_slot, 1, priority=_PRIO_SLOT)
        try:
            self.q.run()
        except HorizonExhaustedError as exc:
            self.q.clear()
            self.log.truncated = True
            self.log.truncation_reason = str(exc)
            log.warning("run truncated: %s", exc)
        self.log.events.sort(key=lambda e: e.time_s)
        return self.log

    def _emit(self, events, slot):
        self.log.events.extend(tag_slot(events, slot))

    def _start_slot(self, t_prev: float, n: int) -> None:
        sc = self.sc
        if n > sc.slots:
            return
        P = sc.constellation.orbit_count
        self.slot = n
        self.slot_start = t_prev
        self.runs: dict[int, _ClusterRun] = {}
        self.t_n = None
        if sc.mode.scheduled:
            sched = next_global_update(
                [(self.vis.clusters[p], self.timings[p]) for p in range(1, P + 1)], t_prev, n, sc.strict_gu
            )
            self.schedule = sched
            self.t_n = sched.global_update_s
            self.q.push(self.t_n, self._global_update, n, priority=_PRIO_UPDATE)
            rises = {p: sched.cluster(p).rise_s for p in range(1, P + 1)}
        else:
            self.schedule = None
            rises = {p: first_rise(self.vis.clusters[p], t_prev) for p in range(1, P + 1)}
        for p in range(1, P + 1):
            self.q.push(rises[p], self._downlink, n, p)

    def _downlink(self, t: float, n: int, p: int) -> None:
        sc = self.sc
        timing = self.timings[p]
        members = self.vis.members(p)
        ring = self.rings[p]
        if sc.mode.scheduled:
            plan = plan_cluster(n, p, self.vis.clusters[p], members, self.t_n, t, timing)
            row = self.schedule.cluster(p)
            record = {"cluster": p, "rise_s": row.rise_s, "demand_s": row.demand_s, "feasible_s": row.feasible_s,
                      "t_x": plan.receive_s, "t_a": plan.available_s, "epochs": plan.epochs,
                      "source": str(plan.source), "sink": str(plan.sink)}
            run = _ClusterRun(plan.epochs, plan.source, plan.sink, record, plan)
        else:
            epochs = sc.mode.epochs
            rise, demand, feasible = _fixed_cluster_slot(self.vis.clusters[p], timing, t, epochs, sc.strict_gu)
            source = select_sink(members, t)
            sink = select_sink(members, feasible - timing.cluster_to_gs_s)
            record = {"cluster": p, "rise_s": rise, "demand_s": demand, "feasible_s": feasible,
                      "t_x": t + timing.gs_to_cluster_s, "t_a": None, "epochs": epochs,
                      "source": str(source), "sink": str(sink)}
            run = _ClusterRun(epochs, source, sink, record)
        self.runs[p] = run
        t_x = t + timing.gs_to_cluster_s
        self._emit([HopEvent(t, GS, run.source, DOWNLINK, self.payload, t_x)], n)
        events, _ = distribute(ring, run.source, self.payload, t_x)
        self._emit(events, n)
        for sat, t_recv in receive_times(ring, run.source, t_x).items():
            self.q.push(t_recv + run.epochs * sc.epoch_s, self._train_done, n, p, sat)

    def _train_done(self, t: float, n: int, p: int, sat: SatelliteId) -> None:
        sc = self.sc
        run = self.runs[p]
        hp = HyperParams(sc.learning_rate, sc.batch_size, run.epochs, sc.regularization,
                         seed=(sc.seed, n, self.flat_index[sat]))
        data = self.data[sat]
        w_local = sgd_epochs(self.w, data, hp, anchor=self.w)
        run.locals_.append((sat, data.size, w_local))
        run.ready[sat] = t
        ring = self.rings[p]
        if len(run.locals_) < len(ring):
            return
        events, agg, done = collect(ring, run.sink, run.locals_, run.ready, self.payload)
        self._emit(events, n)
        run.aggregate = agg
        up_s = self.timings[p].cluster_to_gs_s
        members = self.vis.members(p)
        sink_pat = members[run.sink]
        if sc.fallback and not sink_pat.contains(done):
            hops = fallback_handoff(ring, run.sink, agg, members, done, self.payload, up_s)
            self._emit(hops, n)
            u = hops[-1].time_s
        else:
            u = next_visible(sink_pat, done)
            if u is None:
                raise HorizonExhaustedError(f"slot {n}: sink {run.sink} never visible after {done:.3f} s")
            self._emit([HopEvent(u, run.sink, GS, UPLINK, self.payload, u + up_s)], n)
        self.q.push(u + up_s, self._arrival, n, p, priority=_PRIO_ARRIVAL)

    def _arrival(self, t: float, n: int, p: int) -> None:
        run = self.runs[p]
        run.arrival_s = t
        run.record["arrival_s"] = t
        if self.sc.mode.scheduled:
            if t > self.t_n + DEADLINE_TOL_S:
                raise DeadlineViolation(
                    f"slot {n}: cluster {p} aggregate arrived at {t:.3f} s, after t_n={self.t_n:.3f} s"
                )
        elif all(r.arrival_s is not None for r in self.runs.values()) and len(self.runs) == self.sc.constellation.orbit_count:
            self.q.push(t, self._global_update, n, priority=_PRIO_UPDATE)

    def _global_update(self, t: float, n: int) -> None:
        P = self.sc.constellation.orbit_count
        missing = [p for p in range(1, P + 1) if p not in self.runs or self.runs[p].arrival_s is None]
        if missing:
            raise DeadlineViolation(f"slot {n}: clusters {missing} had not delivered by t_n={t:.3f} s")
        contributions = {p: (self.runs[p].aggregate.weight, self.runs[p].aggregate.weighted_sum) for p in range(1, P + 1)}
        self.w = global_update(contributions, pre_weighted=True)
        acc, loss = evaluate(self.w, self.test)
        epochs = tuple(self.runs[p].epochs for p in range(1, P + 1))
        self.log.rows.append(MetricsRow(n, t, acc, loss, epochs))
        self.log.schedule.append(_slot_record(n, self.slot_start, t, str(self.sc.mode),
                                              [self.runs[p].record for p in range(1, P + 1)]))
        self.q.push(t, self._start_slot, n + 1, priority=_PRIO_SLOT)


def _slot_record(n, start, t_n, mode, clusters) -> dict:
    def r3(v):
        return round(v, 3) if isinstance(v, float) else v

    return {"n": n, "mode": mode, "slot_start_s": round(start, 3), "t_n_s": round(t_n, 3),
            "clusters": [{k: r3(v) for k, v in c.items()} for c in clusters]}


def run(scenario: Scenario, visibility: ConstellationVisibility | None = None) -> MetricsLog:
    return Simulation(scenario, visibility).run()


# ---------------------------------------------------------------------------
# Schedule-only planning (no training)
# ---------------------------------------------------------------------------


@dataclass
class SchedulePlan:
    slots: list[dict] = field(default_factory=list)
    schedules: list[SlotSchedule] = field(default_factory=list)
    plans: list[list[ClusterPlan]] = field(default_factory=list)
    truncated: bool = False
    truncation_reason: str | None = None

    def epoch_vectors(self) -> list[tuple[int, ...]]:
        return [tuple(c["epochs"] for c in s["clusters"]) for s in self.slots]


def plan_schedule(
    scenario: Scenario,
    slots: int | None = None,
    visibility: ConstellationVisibility | None = None,
    timings: dict[int, ClusterTiming] | None = None,
) -> SchedulePlan:
    """GU/CU schedule for consecutive slots without running any training."""
    sc = scenario
    cfg = sc.constellation
    vis = visibility or constellation_visibility(cfg, sc.gs, sc.min_elevation_deg, sc.horizon_s, sc.step_s)
    if timings is None:
        timings, _ = derive_timings(sc, vis)
    P = cfg.orbit_count
    out = SchedulePlan()
    t_prev = 0.0
    try:
        for n in range(1, (slots or sc.slots) + 1):
            clusters = []
            if sc.mode.scheduled:
                sched = next_global_update([(vis.clusters[p], timings[p]) for p in range(1, P + 1)], t_prev, n, sc.strict_gu)
                plans = [plan_cluster(n, p, vis.clusters[p], vis.members(p), sched.global_update_s,
                                      sched.cluster(p).rise_s, timings[p]) for p in range(1, P + 1)]
                for row, plan in zip(sched.per_cluster, plans):
                    clusters.append({**sched.to_json()["clusters"][row.cluster - 1], **plan.to_json()})
                t_n = sched.global_update_s
                out.schedules.append(sched)
                out.plans.append(plans)
            else:
                rows = []
                for p in range(1, P + 1):
                    rise, demand, feasible = _fixed_cluster_slot(vis.clusters[p], timings[p], t_prev, sc.mode.epochs, sc.strict_gu)
                    rows.append((p, rise, demand, feasible))
                    clusters.append({"cluster": p, "rise_s": round(rise, 3), "demand_s": round(demand, 3),
                                     "feasible_s": round(feasible, 3), "epochs": sc.mode.epochs})
                t_n = max(r[3] for r in rows)
            out.slots.append({"n": n, "mode": str(sc.mode), "slot_start_s": round(t_prev, 3),
                              "t_n_s": round(t_n, 3), "clusters": clusters})
            t_prev = t_n
    except HorizonExhaustedError as exc:
        out.truncated = True
        out.truncation_reason = str(exc)
    return out


# ---------------------------------------------------------------------------
# Scheme comparison
# ---------------------------------------------------------------------------


def time_to_target(log_: MetricsLog, target: float) -> float | None:
    for r in log_.rows:
        if r.accuracy >= target:
            return r.t_n_s
    return None


@dataclass
class ComparisonTable:
    labels: list[str]
    logs: list[MetricsLog]
    targets: list[float]
    times: dict[str, list[float | None]]

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "slot", "t_n_s", "accuracy", "loss"])
        for label, lg in zip(self.labels, self.logs):
            for r in lg.rows:
                w.writerow([label, r.slot, f"{r.t_n_s:.3f}", f"{r.accuracy:.6f}", f"{r.loss:.6f}"])
        return buf.getvalue()

    def targets_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["target", *self.labels])
        for i, tgt in enumerate(self.targets):
            w.writerow([f"{tgt:.4f}", *("" if self.times[l][i] is None else f"{self.times[l][i]:.3f}" for l in self.labels)])
        return buf.getvalue()


def compare(scenarios: Sequence[Scenario], targets: Sequence[float] | None = None, logs=None) -> ComparisonTable:
    """Run each scenario and tabulate accuracy-vs-time and time-to-target per scheme."""
    if not scenarios:
        raise ConfigurationError("nothing to compare")
    ref = scenarios[0]
    for s in scenarios[1:]:
        if s.seed != ref.seed or s.data != ref.data:
            raise ConfigurationError("compared scenarios must share the dataset seed and model spec")
    if logs is None:
        logs = [Simulation(s).run() for s in scenarios]
    labels = [s.label() for s in scenarios]
    if len(set(labels)) != len(labels):
        labels = [f"{i}:{l}" for i, l in enumerate(labels)]
    if targets is None:
        targets = [round(x, 2) for x in np.arange(0.2, 1.0, 0.05)]
    times = {l: [time_to_target(lg, t) for t in targets] for l, lg in zip(labels, logs)}
    return ComparisonTable(labels, list(logs), list(targets), times)
