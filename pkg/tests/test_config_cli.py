import csv
import json

import pytest
import yaml

from satfl.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, run_command
from satfl.config import (
    PRESET_NAMES,
    dump_scenario,
    load_scenario,
    preset_scenario,
    resolve_scenario,
    scenario_from_dict,
    scenario_to_dict,
    write_presets,
)
from satfl.errors import ConfigurationError
from satfl.sim import Mode


@pytest.fixture
def preset_dir(tmp_path):
    write_presets(tmp_path)
    return tmp_path


def test_presets_values():
    sc = preset_scenario("bremen_delta")
    c = sc.constellation
    assert (c.orbit_count, c.sats_per_orbit[0], c.altitude_m[0], c.inclination_deg[0]) == (5, 8, 2e6, 60.0)
    assert sc.min_elevation_deg == 10.0 and sc.epoch_s == 3600.0
    assert (sc.batch_size, sc.learning_rate, sc.regularization) == (10, 0.1, 0.0)
    assert preset_scenario("bremen_star").constellation.inclination_deg[0] == 85.0
    assert preset_scenario("bremen_star").constellation.pattern == "star"
    assert preset_scenario("saopaulo_delta").gs.name == "saopaulo"
    with pytest.raises(ConfigurationError):
        preset_scenario("mars")


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_round_trip(name, tmp_path):
    sc = preset_scenario(name)
    path = tmp_path / "s.yaml"
    dump_scenario(sc, path)
    once = load_scenario(path)
    assert once == sc
    assert scenario_from_dict(yaml.safe_load(dump_scenario(once))) == once


def _doc():
    return scenario_to_dict(preset_scenario("bremen_delta"))


def test_missing_key_named():
    doc = _doc()
    del doc["constellation"]["altitude_m"]
    with pytest.raises(ConfigurationError, match="altitude_m"):
        scenario_from_dict(doc)


def test_unknown_key_rejected():
    doc = _doc()
    doc["link"]["tx_power_w"] = 10
    with pytest.raises(ConfigurationError, match="tx_power_w"):
        scenario_from_dict(doc)
    doc = _doc()
    doc["extras"] = {}
    with pytest.raises(ConfigurationError, match="extras"):
        scenario_from_dict(doc)


def test_types_validated():
    doc = _doc()
    doc["simulation"]["slots"] = "ten"
    with pytest.raises(ConfigurationError, match="simulation.slots"):
        scenario_from_dict(doc)
    doc = _doc()
    doc["link"]["bandwidth_hz"] = "5e8"  # YAML 1.1 leaves this as a string
    assert scenario_from_dict(doc).budget.bandwidth_Hz == 5e8


def test_mode_and_per_orbit_lists():
    doc = _doc()
    doc["simulation"]["mode"] = "fixed:4"
    doc["constellation"]["sats_per_orbit"] = [8, 8, 8, 8, 10]
    sc = scenario_from_dict(doc)
    assert sc.mode == Mode("fixed", 4) and sc.constellation.sats_in(5) == 10


def test_resolve(preset_dir):
    assert resolve_scenario(preset_dir / "bremen_delta").name == "bremen_delta"
    assert resolve_scenario("saopaulo_delta").name == "saopaulo_delta"
    with pytest.raises(ConfigurationError):
        resolve_scenario(preset_dir / "nope")


class TestCli:
    def test_presets_command(self, tmp_path, capsys):
        assert run_command(["presets", "--out-dir", str(tmp_path)]) == EXIT_OK
        assert sorted(p.name for p in tmp_path.iterdir()) == sorted(f"{n}.yaml" for n in PRESET_NAMES)

    def test_simulate_happy_path(self, preset_dir, tmp_path):
        out = tmp_path / "run"
        code = run_command(
            ["simulate", str(preset_dir / "bremen_delta.yaml"), "--slots", "2", "--horizon-s", "259200", "--out-dir", str(out)]
        )
        assert code == EXIT_OK
        rows = list(csv.reader((out / "metrics.csv").open()))
        assert rows[0][:4] == ["slot", "t_n_s", "accuracy", "loss"] and len(rows) == 3
        assert (out / "events.jsonl").stat().st_size > 0
        assert len(json.loads((out / "schedule.json").read_text())["slots"]) == 2

    def test_missing_key_exit_code(self, tmp_path, capsys):
        doc = _doc()
        del doc["constellation"]["altitude_m"]
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(doc))
        out = tmp_path / "out"
        assert run_command(["simulate", str(path), "--out-dir", str(out)]) == EXIT_CONFIG
        assert "altitude_m" in capsys.readouterr().err
        assert not out.exists()

    def test_infeasible_exit_code(self, tmp_path, capsys):
        doc = _doc()
        doc["constellation"]["inclination_deg"] = 0.0
        doc["ground_station"]["latitude_deg"] = 80.0
        path = tmp_path / "polar.yaml"
        path.write_text(yaml.safe_dump(doc))
        assert run_command(["schedule", str(path), "--horizon-s", "86400", "--out-dir", str(tmp_path / "o")]) == EXIT_INFEASIBLE

    def test_schedule_command(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert run_command(["schedule", "bremen_delta", "--slots", "2", "--horizon-s", "259200", "--out-dir", str(out)]) == EXIT_OK
        doc = json.loads(capsys.readouterr().out)
        assert [s["n"] for s in doc["slots"]] == [1, 2]
        assert all(len(s["clusters"]) == 5 for s in doc["slots"])
        assert json.loads((out / "schedule.json").read_text()) == doc

    def test_visibility_command(self, tmp_path):
        out = tmp_path / "v"
        assert run_command(["visibility", "bremen_delta", "--horizon-s", "86400", "--out-dir", str(out)]) == EXIT_OK
        subjects = {r["subject"] for r in csv.DictReader((out / "visibility.csv").open())}
        assert {"cluster-1", "cluster-5"} <= subjects

    def test_compare_command(self, tmp_path, capsys):
        out = tmp_path / "c"
        code = run_command(
            ["compare", "bremen_delta", "--slots", "1", "--horizon-s", "259200", "--modes", "scheduled", "fixed:2",
             "--targets", "0.1", "0.99", "--out-dir", str(out)]
        )
        assert code == EXIT_OK
        header = (out / "time_to_target.csv").read_text().splitlines()[0]
        assert header == "target,bremen_delta/scheduled,bremen_delta/fixed:2"
        assert (out / "comparison_series.csv").exists()

    def test_bad_mode(self, tmp_path):
        assert run_command(["schedule", "bremen_delta", "--mode", "fixed:0", "--out-dir", str(tmp_path)]) == EXIT_CONFIG
