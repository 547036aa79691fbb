import json

import pytest

from fsm.cli import main
from fsm.fusion import load_snapshot
from fsm.simgen import build_scenario, run_scenario, write_fixture_fleet


@pytest.fixture()
def fleet(tmp_path):
    root = tmp_path / "data"
    write_fixture_fleet(root)
    return root


def scenario(tmp_path, scenario_id, seed=42):
    out = tmp_path / scenario_id.lower()
    run_scenario(build_scenario(scenario_id, seed), out)
    return out


def test_load_replays_scenario(fleet, tmp_path, capsys):
    rc = main(["load", str(scenario(tmp_path, "S1")), "--data-dir", str(fleet)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "accepted 4 events (4 total), 1 incidents" in out
    (incident,) = load_snapshot(fleet / "incidents" / "current.jsonl")
    assert incident.primary_code == "E102"
    assert incident.status == "RESOLVED"


def test_load_is_seed_reproducible(fleet, tmp_path):
    src = scenario(tmp_path, "S1")
    main(["load", str(src), "--data-dir", str(fleet), "--seed", "42"])
    (first,) = load_snapshot(fleet / "incidents" / "current.jsonl")

    other = tmp_path / "data2"
    write_fixture_fleet(other)
    main(["load", str(src), "--data-dir", str(other), "--seed", "42"])
    (second,) = load_snapshot(other / "incidents" / "current.jsonl")
    assert first.to_json_dict() == second.to_json_dict()


def test_load_reports_rejected_lines(fleet, tmp_path, capsys):
    src = scenario(tmp_path, "S1")
    logs = src / "logs.log"
    logs.write_text(
        logs.read_text() + "2025-01-17T11:00:00Z | GHOST-9 | WARN | E102 | ghost\n"
    )
    rc = main(["load", str(src), "--data-dir", str(fleet)])
    assert rc == 1
    captured = capsys.readouterr()
    assert "accepted 4 events" in captured.out
    assert "rejected logs.log:4" in captured.err


def test_load_without_manifest_is_a_config_error(tmp_path, capsys):
    src = scenario(tmp_path, "S1")
    rc = main(["load", str(src), "--data-dir", str(tmp_path / "empty")])
    assert rc == 2
    assert "registry manifest" in capsys.readouterr().err


def test_load_accepts_table_and_frame_sources(fleet, tmp_path, capsys):
    main(["load", str(scenario(tmp_path, "S2")), "--data-dir", str(fleet)])
    assert "accepted 4 events (4 total), 2 incidents" in capsys.readouterr().out
    incidents = load_snapshot(fleet / "incidents" / "current.jsonl")
    assert sorted(i.primary_code for i in incidents) == ["E101", "E201"]


def test_load_twice_extends_the_store(fleet, tmp_path, capsys):
    src = scenario(tmp_path, "S1")
    main(["load", str(src), "--data-dir", str(fleet), "--seed", "1"])
    rc = main(["load", str(src), "--data-dir", str(fleet), "--seed", "2"])
    assert rc == 0
    assert "(8 total)" in capsys.readouterr().out


def test_serve_forwards_overrides(monkeypatch, fleet, tmp_path):
    seen = {}

    def fake_serve(config):
        seen["config"] = config

    monkeypatch.setattr("fsm.service.serve", fake_serve)
    toml = tmp_path / "fsm.toml"
    toml.write_text(f'data_dir = "{fleet}"\nport = 9999\n')
    rc = main(["serve", "--config", str(toml), "--port", "8123",
               "--host", "127.0.0.9"])
    assert rc == 0
    assert seen["config"].port == 8123
    assert seen["config"].host == "127.0.0.9"
    assert seen["config"].data_dir == str(fleet)


def test_bad_config_path_exits_2(tmp_path, capsys):
    rc = main(["serve", "--config", str(tmp_path / "missing.toml")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_load_seed_defaults_from_environment(fleet, tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FSM_EVENT_ID_SEED", "42")
    src = scenario(tmp_path, "S1")
    main(["load", str(src), "--data-dir", str(fleet)])
    (from_env,) = load_snapshot(fleet / "incidents" / "current.jsonl")

    other = tmp_path / "data2"
    write_fixture_fleet(other)
    main(["load", str(src), "--data-dir", str(other), "--seed", "42"])
    (explicit,) = load_snapshot(other / "incidents" / "current.jsonl")
    assert from_env.incident_id == explicit.incident_id
