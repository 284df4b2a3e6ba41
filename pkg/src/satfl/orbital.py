"""Circular two-body propagation for Walker constellations and ground-station visibility.

Frames: satellites are propagated in an Earth-centred inertial frame whose +x axis
holds the prime meridian at simulation time zero. The ground station sits on a
spherical Earth that spins uniformly at ``OMEGA_E``.

``ConstellationConfig.epoch_offset_s`` shifts the absolute start time of the
simulation: satellites advance ``n * offset`` along their orbits and their node
lines rotate by ``-OMEGA_E * offset`` relative to the Earth, so sweeping the offset
reproduces every start instant without moving the frame convention.
"""

from __future__ import annotations

import bisect
import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError

MU_EARTH = 3.986004418e14  # m^3/s^2
R_EARTH = 6.371e6  # m
OMEGA_EARTH = 7.2921159e-5  # rad/s

BOUNDARY_TOL_S = 1e-3
MAX_STEP_S = 30.0

# Sampled elevation peaks within this margin below the mask are re-examined
# with a continuous maximiser so passes shorter than one step are not lost.
_PEAK_MARGIN_RAD = math.radians(2.0)

GS_PRESETS = {
    "bremen": (53.073, 8.806),
    "saopaulo": (-23.55, -46.633),
}


@dataclass(frozen=True)
class GroundStation:
    latitude_deg: float
    longitude_deg: float
    name: str = "gs"

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ConfigurationError(f"latitude_deg out of range: {self.latitude_deg}")
        if not -180.0 < self.longitude_deg <= 180.0:
            raise ConfigurationError(f"longitude_deg out of range: {self.longitude_deg}")

    @classmethod
    def preset(cls, name: str) -> "GroundStation":
        try:
            lat, lon = GS_PRESETS[name.lower()]
        except KeyError:
            raise ConfigurationError(f"unknown ground-station preset {name!r}") from None
        return cls(lat, lon, name.lower())


@dataclass(frozen=True, order=True)
class SatelliteId:
    """One-based (orbit, slot) address of a satellite."""

    orbit: int
    slot: int

    def __str__(self) -> str:
        return f"sat-{self.orbit}-{self.slot}"


def _per_orbit(value, count: int, name: str, cast) -> tuple:
    if isinstance(value, (list, tuple)):
        if len(value) != count:
            raise ConfigurationError(f"{name} has {len(value)} entries, expected {count}")
        return tuple(cast(v) for v in value)
    return (cast(value),) * count


@dataclass(frozen=True)
class ConstellationConfig:
    """Walker constellation geometry.

    ``sats_per_orbit``, ``altitude_m`` and ``inclination_deg`` accept either a
    scalar shared by every orbit or one value per orbit.
    """

    orbit_count: int
    sats_per_orbit: int | tuple[int, ...]
    altitude_m: float | tuple[float, ...]
    inclination_deg: float | tuple[float, ...]
    pattern: str = "delta"
    phasing_factor: int = 1
    epoch_offset_s: float = 0.0

    def __post_init__(self):
        if int(self.orbit_count) < 1:
            raise ConfigurationError("orbit_count must be >= 1")
        P = int(self.orbit_count)
        object.__setattr__(self, "orbit_count", P)
        object.__setattr__(self, "sats_per_orbit", _per_orbit(self.sats_per_orbit, P, "sats_per_orbit", int))
        object.__setattr__(self, "altitude_m", _per_orbit(self.altitude_m, P, "altitude_m", float))
        object.__setattr__(self, "inclination_deg", _per_orbit(self.inclination_deg, P, "inclination_deg", float))
        if any(k < 1 for k in self.sats_per_orbit):
            raise ConfigurationError("every orbit needs at least one satellite")
        if any(h <= 0 for h in self.altitude_m):
            raise ConfigurationError("altitude_m must be positive")
        pattern = str(self.pattern).lower()
        if pattern not in ("delta", "star"):
            raise ConfigurationError(f"pattern must be 'delta' or 'star', got {self.pattern!r}")
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "phasing_factor", int(self.phasing_factor))
        object.__setattr__(self, "epoch_offset_s", float(self.epoch_offset_s))

    @property
    def total_satellites(self) -> int:
        return sum(self.sats_per_orbit)

    def sats_in(self, p: int) -> int:
        return self.sats_per_orbit[p - 1]

    def radius(self, p: int) -> float:
        return R_EARTH + self.altitude_m[p - 1]

    def mean_motion(self, p: int) -> float:
        return math.sqrt(MU_EARTH / self.radius(p) ** 3)

    def period(self, p: int = 1) -> float:
        return orbital_period(self.altitude_m[p - 1])

    def raan(self, p: int) -> float:
        spread = 2 * math.pi if self.pattern == "delta" else math.pi
        return spread * (p - 1) / self.orbit_count

    def satellites(self, p: int | None = None) -> list[SatelliteId]:
        orbits = range(1, self.orbit_count + 1) if p is None else [p]
        return [SatelliteId(q, s) for q in orbits for s in range(1, self.sats_in(q) + 1)]

    def check(self, sat: SatelliteId) -> None:
        if not 1 <= sat.orbit <= self.orbit_count or not 1 <= sat.slot <= self.sats_in(sat.orbit):
            raise ConfigurationError(f"{sat} is not part of this constellation")

    def with_offset(self, epoch_offset_s: float) -> "ConstellationConfig":
        return ConstellationConfig(
            self.orbit_count, self.sats_per_orbit, self.altitude_m, self.inclination_deg,
            self.pattern, self.phasing_factor, epoch_offset_s,
        )


@dataclass(frozen=True)
class StateVector:
    position: np.ndarray
    time_s: float


def orbital_period(altitude_m: float) -> float:
    return 2 * math.pi * math.sqrt((R_EARTH + altitude_m) ** 3 / MU_EARTH)


def satellite_positions(config: ConstellationConfig, sat: SatelliteId, times) -> np.ndarray:
    """Inertial positions, shape ``(len(times), 3)``, of one satellite."""
    config.check(sat)
    p = sat.orbit
    t = np.asarray(times, dtype=float)
    r = config.radius(p)
    inc = math.radians(config.inclination_deg[p - 1])
    K_p = config.sats_in(p)
    phase0 = 2 * math.pi * (sat.slot - 1) / K_p
    phase0 += 2 * math.pi * config.phasing_factor * (p - 1) / config.total_satellites
    u = phase0 + config.mean_motion(p) * (t + config.epoch_offset_s)
    node = config.raan(p) - OMEGA_EARTH * config.epoch_offset_s
    xp, yp = r * np.cos(u), r * np.sin(u)
    cn, sn, ci, si = math.cos(node), math.sin(node), math.cos(inc), math.sin(inc)
    return np.stack([xp * cn - yp * ci * sn, xp * sn + yp * ci * cn, yp * si], axis=-1)


def propagate(config: ConstellationConfig, sat: SatelliteId, t: float) -> StateVector:
    if t < 0:
        raise ValueError("t must be non-negative")
    return StateVector(satellite_positions(config, sat, np.array([t]))[0], float(t))


def gs_positions(gs: GroundStation, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    lat = math.radians(gs.latitude_deg)
    theta = math.radians(gs.longitude_deg) + OMEGA_EARTH * t
    return np.stack(
        [
            R_EARTH * math.cos(lat) * np.cos(theta),
            R_EARTH * math.cos(lat) * np.sin(theta),
            np.full_like(theta, R_EARTH * math.sin(lat)),
        ],
        axis=-1,
    )


def gs_position(gs: GroundStation, t: float) -> StateVector:
    return StateVector(gs_positions(gs, np.array([t]))[0], float(t))


def elevation(sat_pos: np.ndarray, gs_pos: np.ndarray) -> np.ndarray:
    """Elevation angle (rad) of ``sat_pos`` above the local horizon of ``gs_pos``."""
    d = sat_pos - gs_pos
    dn = np.linalg.norm(d, axis=-1)
    gn = np.linalg.norm(gs_pos, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.sum(d * gs_pos, axis=-1) / (dn * gn)
    return np.arcsin(np.clip(s, -1.0, 1.0))


def is_visible_gs(sat_pos: StateVector, gs_pos: StateVector, min_elevation_deg: float) -> bool:
    if np.linalg.norm(sat_pos.position - gs_pos.position) == 0.0:
        raise ValueError("satellite and ground station coincide; elevation undefined")
    return bool(elevation(sat_pos.position, gs_pos.position) >= math.radians(min_elevation_deg))


def max_slant_range(h_k: float, h_i: float) -> float:
    """Longest unobstructed line of sight between two satellites over a spherical Earth."""
    return math.sqrt(h_k**2 + 2 * R_EARTH * h_k) + math.sqrt(h_i**2 + 2 * R_EARTH * h_i)


def is_visible_isl(pos_k: StateVector, pos_i: StateVector, h_k: float, h_i: float) -> bool:
    return bool(np.linalg.norm(pos_k.position - pos_i.position) < max_slant_range(h_k, h_i))


def max_gs_distance(altitude_m: float, min_elevation_deg: float) -> float:
    """Largest satellite-to-station distance at which the elevation mask is still met."""
    r = R_EARTH + altitude_m
    e = math.radians(min_elevation_deg)
    return math.sqrt(r**2 - (R_EARTH * math.cos(e)) ** 2) - R_EARTH * math.sin(e)


# ---------------------------------------------------------------------------
# Visibility patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VisibilityInterval:
    rise_s: float
    set_s: float

    def __post_init__(self):
        if not self.rise_s < self.set_s:
            raise ValueError(f"empty interval [{self.rise_s}, {self.set_s}]")


@dataclass(frozen=True)
class VisibilityPattern:
    """Sorted, disjoint, closed visibility intervals within ``[0, horizon_s]``."""

    intervals: tuple[VisibilityInterval, ...]
    horizon_s: float
    subject: str = ""

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))
        prev_set = -math.inf
        for iv in self.intervals:
            if iv.rise_s <= prev_set:
                raise ValueError("intervals must be sorted and pairwise disjoint")
            if iv.rise_s < 0 or iv.set_s > self.horizon_s:
                raise ValueError("interval outside [0, horizon_s]")
            prev_set = iv.set_s

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]], horizon_s: float, subject: str = "") -> "VisibilityPattern":
        return cls(tuple(VisibilityInterval(float(a), float(b)) for a, b in pairs), float(horizon_s), subject)

    @cached_property
    def rises(self) -> list[float]:
        return [iv.rise_s for iv in self.intervals]

    @cached_property
    def sets(self) -> list[float]:
        return [iv.set_s for iv in self.intervals]

    def __len__(self) -> int:
        return len(self.intervals)

    def index_at(self, t: float) -> int | None:
        """Index of the closed interval containing ``t``, if any."""
        i = bisect.bisect_right(self.rises, t) - 1
        if i >= 0 and t <= self.intervals[i].set_s:
            return i
        return None

    def contains(self, t: float) -> bool:
        return self.index_at(t) is not None

    def next_rise_index(self, t: float) -> int | None:
        """Index of the earliest interval whose rise is ``>= t``."""
        i = bisect.bisect_left(self.rises, t)
        return i if i < len(self.intervals) else None

    def last_set_index(self, t: float) -> int | None:
        """Index of the latest interval whose set is ``<= t``."""
        i = bisect.bisect_right(self.sets, t) - 1
        return i if i >= 0 else None

    def pairs(self) -> list[tuple[float, float]]:
        return [(iv.rise_s, iv.set_s) for iv in self.intervals]


def union_patterns(patterns: Sequence[VisibilityPattern], subject: str = "") -> VisibilityPattern:
    """Interval union; abutting or overlapping intervals are merged."""
    if not patterns:
        raise ValueError("need at least one pattern")
    horizon = max(p.horizon_s for p in patterns)
    spans = sorted(pair for p in patterns for pair in p.pairs())
    merged: list[list[float]] = []
    for a, b in spans:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return VisibilityPattern.from_pairs(merged, horizon, subject)


def _sample_times(horizon_s: float, step_s: float) -> np.ndarray:
    n = int(math.floor(horizon_s / step_s))
    t = np.arange(n + 1, dtype=float) * step_s
    if t[-1] < horizon_s:
        t = np.append(t, horizon_s)
    return t


def satellite_pattern(
    config: ConstellationConfig,
    sat: SatelliteId,
    gs: GroundStation,
    min_elevation_deg: float,
    horizon_s: float,
    step_s: float = 10.0,
) -> VisibilityPattern:
    if horizon_s <= 0 or step_s <= 0:
        raise ValueError("horizon_s and step_s must be positive")
    if step_s > MAX_STEP_S:
        raise ValueError(f"step_s must be <= {MAX_STEP_S} s to avoid missing passes")
    mask = math.radians(min_elevation_deg)

    def elev(t):
        t = np.asarray(t, dtype=float)
        return elevation(satellite_positions(config, sat, t), gs_positions(gs, t))

    t = _sample_times(horizon_s, step_s)
    el = elev(t)

    # Rescue passes that peak above the mask between two samples.
    extra = []
    if len(t) >= 3:
        mid = el[1:-1]
        peaks = np.nonzero((mid >= el[:-2]) & (mid >= el[2:]) & (mid < mask) & (mid > mask - _PEAK_MARGIN_RAD))[0] + 1
        for i in peaks:
            res = minimize_scalar(
                lambda x: -float(elev([x])[0]),
                bounds=(t[i - 1], t[i + 1]),
                method="bounded",
                options={"xatol": BOUNDARY_TOL_S},
            )
            if -res.fun >= mask:
                extra.append(float(res.x))
    if extra:
        t = np.concatenate([t, extra])
        order = np.argsort(t, kind="stable")
        t = t[order]
        el = np.concatenate([el, np.full(len(extra), mask)])[order]
    vis = el >= mask

    flips = np.nonzero(vis[:-1] != vis[1:])[0]
    lo, hi = t[flips].copy(), t[flips + 1].copy()
    lo_vis = vis[flips]
    while len(lo) and np.max(hi - lo) > BOUNDARY_TOL_S:
        m = 0.5 * (lo + hi)
        vm = elev(m) >= mask
        same = vm == lo_vis
        lo = np.where(same, m, lo)
        hi = np.where(same, hi, m)

    pairs = []
    rise = 0.0 if vis[0] else None
    for k in range(len(flips)):
        if lo_vis[k]:
            # last visible instant before the set
            if rise is not None and lo[k] > rise:
                pairs.append((rise, float(lo[k])))
            rise = None
        else:
            rise = float(hi[k])
    if rise is not None and vis[-1] and horizon_s > rise:
        pairs.append((rise, float(horizon_s)))
    return VisibilityPattern.from_pairs(pairs, horizon_s, str(sat))


def cluster_pattern(
    config: ConstellationConfig,
    p: int,
    gs: GroundStation,
    min_elevation_deg: float,
    horizon_s: float,
    step_s: float = 10.0,
) -> VisibilityPattern:
    members = [satellite_pattern(config, s, gs, min_elevation_deg, horizon_s, step_s) for s in config.satellites(p)]
    return union_patterns(members, f"cluster-{p}")


def visibility_pattern(config, subject, gs, min_elevation_deg, horizon_s, step_s=10.0) -> VisibilityPattern:
    """Pattern of a satellite (``SatelliteId``) or of a whole orbit (``int`` index)."""
    if isinstance(subject, SatelliteId):
        return satellite_pattern(config, subject, gs, min_elevation_deg, horizon_s, step_s)
    return cluster_pattern(config, int(subject), gs, min_elevation_deg, horizon_s, step_s)


@dataclass
class ConstellationVisibility:
    """Per-satellite and per-cluster patterns over one horizon."""

    satellites: dict[SatelliteId, VisibilityPattern]
    clusters: dict[int, VisibilityPattern] = field(default_factory=dict)

    def members(self, p: int) -> dict[SatelliteId, VisibilityPattern]:
        return {s: pat for s, pat in self.satellites.items() if s.orbit == p}


def constellation_visibility(config, gs, min_elevation_deg, horizon_s, step_s=10.0) -> ConstellationVisibility:
    sats = {s: satellite_pattern(config, s, gs, min_elevation_deg, horizon_s, step_s) for s in config.satellites()}
    clusters = {
        p: union_patterns([sats[s] for s in config.satellites(p)], f"cluster-{p}")
        for p in range(1, config.orbit_count + 1)
    }
    return ConstellationVisibility(sats, clusters)


def write_patterns_csv(patterns: Iterable[VisibilityPattern], path: str | Path | None = None) -> str:
    """Write ``subject,rise_s,set_s`` rows; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["subject", "rise_s", "set_s"])
    for pat in patterns:
        for iv in pat.intervals:
            w.writerow([pat.subject, f"{iv.rise_s:.3f}", f"{iv.set_s:.3f}"])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def read_patterns_csv(path: str | Path, horizon_s: float) -> dict[str, VisibilityPattern]:
    rows: dict[str, list[tuple[float, float]]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(row["subject"], []).append((float(row["rise_s"]), float(row["set_s"])))
    return {k: VisibilityPattern.from_pairs(v, horizon_s, k) for k, v in rows.items()}

