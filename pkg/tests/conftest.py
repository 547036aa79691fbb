import json
from pathlib import Path

import pytest

from fsm.events import EventIdFactory
from fsm.knowledge import KnowledgeIndex, parse_manual
from fsm.llm_gateway import StubGateway
from fsm.registry import Registry
from fsm.simgen import (
    FIXTURE_MANUALS,
    build_fixture_registry,
    build_scenario,
    run_scenario,
    write_fixture_fleet,
)


@pytest.fixture()
def registry() -> Registry:
    return build_fixture_registry()


@pytest.fixture(scope="session")
def fixture_entries():
    entries = []
    for manual_id, (kind, text) in FIXTURE_MANUALS.items():
        entries.extend(parse_manual(text, manual_id, kind))
    return entries


@pytest.fixture()
def knowledge_index(fixture_entries) -> KnowledgeIndex:
    return KnowledgeIndex(fixture_entries)


@pytest.fixture()
def stub_gateway() -> StubGateway:
    return StubGateway()


@pytest.fixture()
def ids() -> EventIdFactory:
    return EventIdFactory(seed=42)


@pytest.fixture()
def data_dir(tmp_path) -> Path:
    d = tmp_path / "data"
    write_fixture_fleet(d)
    return d


@pytest.fixture()
def scenario_dir(tmp_path):
    def _make(scenario_id: str, seed: int = 42) -> Path:
        out = tmp_path / f"scenario-{scenario_id}-{seed}"
        run_scenario(build_scenario(scenario_id, seed), out)
        return out

    return _make


def replay_events(scenario: Path, registry: Registry, ids: EventIdFactory):
    """Parse a scenario directory into events, in the canonical replay order."""
    import re

    from fsm.ingest import (
        VisionObservation,
        ingest_vision,
        parse_log_line,
        parse_status_row,
    )
    from fsm.llm_gateway import load_sidecar

    cam_re = re.compile(r"^([A-Za-z]+-\d{2})-")
    events = []
    log_path = scenario / "logs.log"
    if log_path.is_file():
        for line in log_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                events.append(parse_log_line(line, registry, ids))
    rows_path = scenario / "rows.json"
    if rows_path.is_file():
        for i, row in enumerate(json.loads(rows_path.read_text(encoding="utf-8"))):
            events.append(parse_status_row(row, registry, ids, index=i))
    frames = scenario / "frames"
    if frames.is_dir():
        for sidecar in sorted(frames.glob("*.meta.json")):
            result = load_sidecar(sidecar)
            camera = cam_re.match(sidecar.name).group(1)
            events.append(
                ingest_vision(
                    VisionObservation(
                        camera_id=camera,
                        captured_at_text=result.overlay_timestamp_text,
                        caption=result.caption,
                        anomaly=result.anomaly,
                    ),
                    registry,
                    ids,
                )
            )
    events.sort(key=lambda e: (e.ts, e.event_id))
    return events
