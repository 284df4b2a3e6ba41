"""YAML scenario files: parsing, validation, serialization and built-in presets."""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigurationError
from .linkmodel import LinkBudget, linear_to_db, watts_to_dbm
from .orbital import ConstellationConfig, GroundStation
from .sim import DataSpec, Mode, Scenario

# section -> {key: (type, required)}
_SCHEMA: dict[str, dict[str, tuple[type, bool]]] = {
    "constellation": {
        "orbit_count": (int, True),
        "sats_per_orbit": (object, True),
        "altitude_m": (object, True),
        "inclination_deg": (object, True),
        "pattern": (str, False),
        "phasing_factor": (int, False),
        "epoch_offset_s": (float, False),
    },
    "ground_station": {
        "name": (str, False),
        "latitude_deg": (float, True),
        "longitude_deg": (float, True),
        "min_elevation_deg": (float, True),
    },
    "link": {
        "tx_power_dbm": (float, True),
        "antenna_gain_dbi": (float, True),
        "bandwidth_hz": (float, True),
        "carrier_hz": (float, True),
        "system_temp_k": (float, True),
    },
    "learning": {
        "learning_rate": (float, True),
        "batch_size": (int, True),
        "regularization": (float, False),
        "epoch_s": (float, True),
        "min_learning_s": (float, False),
        "num_classes": (int, False),
        "num_features": (int, False),
        "train_samples": (int, False),
        "test_samples": (int, False),
        "dirichlet_alpha": (float, False),
        "class_separation": (float, False),
        "conditioning": (float, False),
        "payload_params": (int, False),
    },
    "simulation": {
        "slots": (int, True),
        "horizon_s": (float, True),
        "step_s": (float, False),
        "mode": (str, False),
        "seed": (int, False),
        "strict_gu": (bool, False),
        "fallback": (bool, False),
    },
}

_TOP_LEVEL = {"name"}


def _coerce(section: str, key: str, value: Any, kind: type):
    where = f"{section}.{key}"
    if kind is object:
        if isinstance(value, list):
            return tuple(value)
        return value
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where} must be true or false")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{where} must be an integer, got {value!r}")
        return value
    if kind is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms such as 5e8 as strings
            try:
                return float(value)
            except ValueError:
                pass
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where} must be a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigurationError(f"{where} must be a string, got {value!r}")
    return value


def _validated(doc: Any) -> dict[str, dict[str, Any]]:
    if not isinstance(doc, dict):
        raise ConfigurationError("scenario file must be a mapping of sections")
    unknown = sorted(set(doc) - set(_SCHEMA) - _TOP_LEVEL)
    if unknown:
        raise ConfigurationError(f"unknown section(s): {', '.join(map(str, unknown))}")
    out = {}
    for section, schema in _SCHEMA.items():
        body = doc.get(section)
        if body is None:
            raise ConfigurationError(f"missing section: {section}")
        if not isinstance(body, dict):
            raise ConfigurationError(f"section {section} must be a mapping")
        extra = sorted(set(body) - set(schema))
        if extra:
            raise ConfigurationError(f"unknown key(s) in {section}: {', '.join(map(str, extra))}")
        missing = [k for k, (_, req) in schema.items() if req and k not in body]
        if missing:
            raise ConfigurationError(f"missing key(s) in {section}: {', '.join(missing)}")
        out[section] = {k: _coerce(section, k, v, schema[k][0]) for k, v in body.items()}
    return out


def scenario_from_dict(doc: Any) -> Scenario:
    """Build a :class:`Scenario` from a parsed scenario document, validating every key."""
    d = _validated(doc)
    c, g, link, lrn, s = d["constellation"], d["ground_station"], d["link"], d["learning"], d["simulation"]
    try:
        constellation = ConstellationConfig(**c)
        gs = GroundStation(g["latitude_deg"], g["longitude_deg"], g.get("name", "gs"))
        budget = LinkBudget.from_db(
            link["tx_power_dbm"], link["antenna_gain_dbi"], link["bandwidth_hz"], link["carrier_hz"], link["system_temp_k"]
        )
        data_keys = {f.name for f in fields(DataSpec)}
        data = DataSpec(**{k: v for k, v in lrn.items() if k in data_keys})
        return Scenario(
            constellation=constellation,
            gs=gs,
            min_elevation_deg=g["min_elevation_deg"],
            budget=budget,
            epoch_s=lrn["epoch_s"],
            slots=s["slots"],
            horizon_s=s["horizon_s"],
            mode=Mode.parse(s.get("mode", "scheduled")),
            data=data,
            learning_rate=lrn["learning_rate"],
            batch_size=lrn["batch_size"],
            regularization=lrn.get("regularization", 0.0),
            min_learning_s=lrn.get("min_learning_s"),
            seed=s.get("seed", 0),
            step_s=s.get("step_s", 10.0),
            strict_gu=s.get("strict_gu", False),
            fallback=s.get("fallback", False),
            name=str(doc.get("name", "scenario")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def _scalar_or_list(values: tuple):
    return values[0] if len(set(values)) == 1 else list(values)


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    c, b = sc.constellation, sc.budget
    learning = {
        "learning_rate": sc.learning_rate,
        "batch_size": sc.batch_size,
        "regularization": sc.regularization,
        "epoch_s": sc.epoch_s,
    }
    if sc.min_learning_s is not None:
        learning["min_learning_s"] = sc.min_learning_s
    for f in fields(DataSpec):
        v = getattr(sc.data, f.name)
        if v is not None:
            learning[f.name] = v
    return {
        "name": sc.name,
        "constellation": {
            "orbit_count": c.orbit_count,
            "sats_per_orbit": _scalar_or_list(c.sats_per_orbit),
            "altitude_m": _scalar_or_list(c.altitude_m),
            "inclination_deg": _scalar_or_list(c.inclination_deg),
            "pattern": c.pattern,
            "phasing_factor": c.phasing_factor,
            "epoch_offset_s": c.epoch_offset_s,
        },
        "ground_station": {
            "name": sc.gs.name,
            "latitude_deg": sc.gs.latitude_deg,
            "longitude_deg": sc.gs.longitude_deg,
            "min_elevation_deg": sc.min_elevation_deg,
        },
        "link": {
            # dB values survive the linear round trip only up to float noise
            "tx_power_dbm": round(watts_to_dbm(b.tx_power_W), 10),
            "antenna_gain_dbi": round(linear_to_db(b.antenna_gain_linear), 10),
            "bandwidth_hz": b.bandwidth_Hz,
            "carrier_hz": b.carrier_Hz,
            "system_temp_k": b.system_temp_K,
        },
        "learning": learning,
        "simulation": {
            "slots": sc.slots,
            "horizon_s": sc.horizon_s,
            "step_s": sc.step_s,
            "mode": str(sc.mode),
            "seed": sc.seed,
            "strict_gu": sc.strict_gu,
            "fallback": sc.fallback,
        },
    }


def load_scenario(path: str | Path) -> Scenario:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from exc
    return scenario_from_dict(doc)


def dump_scenario(sc: Scenario, path: str | Path | None = None) -> str:
    text = yaml.safe_dump(scenario_to_dict(sc), sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

PRESET_PAYLOAD_PARAMS = 122_570
PRESET_HORIZON_S = 30 * 86_400.0


def preset_scenario(name: str) -> Scenario:
    """Five orbits of eight satellites at 2000 km seen from Bremen or Sao Paulo."""
    layouts = {
        "bremen_delta": ("bremen", 60.0, "delta"),
        "saopaulo_delta": ("saopaulo", 60.0, "delta"),
        "bremen_star": ("bremen", 85.0, "star"),
    }
    if name not in layouts:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {', '.join(layouts)}")
    station, incl, pattern = layouts[name]
    return Scenario(
        constellation=ConstellationConfig(5, 8, 2_000_000.0, incl, pattern=pattern, phasing_factor=1),
        gs=GroundStation.preset(station),
        min_elevation_deg=10.0,
        budget=LinkBudget.from_db(40.0, 32.13, 500e6, 20e9, 354.0),
        epoch_s=3600.0,
        slots=10,
        horizon_s=PRESET_HORIZON_S,
        data=DataSpec(
            num_classes=10,
            num_features=20,
            train_samples=5000,
            test_samples=1000,
            dirichlet_alpha=0.5,
            class_separation=1.0,
            conditioning=30.0,
            payload_params=PRESET_PAYLOAD_PARAMS,
        ),
        learning_rate=0.1,
        batch_size=10,
        regularization=0.0,
        seed=42,
        name=name,
    )


PRESET_NAMES = ("bremen_delta", "saopaulo_delta", "bremen_star")


def write_presets(out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in PRESET_NAMES:
        path = out / f"{name}.yaml"
        dump_scenario(preset_scenario(name), path)
        paths.append(path)
    return paths


def resolve_scenario(ref: str | Path) -> Scenario:
    """Load ``ref`` as a file path, ``<ref>.yaml``, or a built-in preset name."""
    p = Path(ref)
    if p.is_file():
        return load_scenario(p)
    if p.with_suffix(".yaml").is_file():
        return load_scenario(p.with_suffix(".yaml"))
    if str(ref) in PRESET_NAMES:
        return preset_scenario(str(ref))
    raise ConfigurationError(f"no scenario file or preset named {ref!r}")

