import json

import pytest
from fastapi.testclient import TestClient

from fsm.config import ServiceConfig
from fsm.errors import BadConfig
from fsm.service import create_app
from fsm.simgen import build_scenario, run_scenario

S1_LOGS = (
    "2025-01-17T09:32:10Z | SSBRM-01 | WARN | E102 | card reader slow to respond\n"
    "2025-01-17T09:33:10Z | SSBRM-01 | ERROR | E102 | card reader timeout\n"
)

S1_OBSERVATION = {
    "camera_id": "CAM-01",
    "captured_at_text": "2025-01-17 09:33:40",
    "caption": "screen shows an error dialog",
    "anomaly": True,
}


@pytest.fixture()
def client(data_dir):
    app = create_app(ServiceConfig(data_dir=str(data_dir), event_id_seed=42))
    with TestClient(app) as c:
        yield c


def ingest_s1(client):
    r = client.post(
        "/v1/logs", content=S1_LOGS, headers={"content-type": "text/plain"}
    )
    assert r.status_code == 200 and r.json()["accepted"] == 2
    r = client.post("/v1/vision/observations", json=[S1_OBSERVATION])
    assert r.status_code == 200 and r.json()["accepted"] == 1


def test_health(client):
    assert client.get("/v1/health").json() == {"status": "ok"}


def test_missing_manifest_fails_fast(tmp_path):
    with pytest.raises(BadConfig) as err:
        create_app(ServiceConfig(data_dir=str(tmp_path / "nope")))
    assert "registry.json" in str(err.value)


def test_devices_listing_and_filters(client):
    body = client.get("/v1/devices").json()
    assert len(body["devices"]) == 10
    row = body["devices"][0]
    assert set(row) == {
        "device_id",
        "kind",
        "zone_id",
        "label",
        "manual_id",
        "observes",
        "status",
        "open_incident_ids",
        "role",
    }
    corridor = client.get("/v1/devices", params={"zone": "corridor"}).json()
    assert [d["device_id"] for d in corridor["devices"]] == [
        "SSBRM-01",
        "SSBRM-02",
        "CAM-01",
        "CAM-02",
    ]
    cams = client.get(
        "/v1/devices", params={"kind": "SURVEILLANCE_CAMERA"}
    ).json()
    assert all(d["role"] == "monitoring" for d in cams["devices"])


def test_devices_bad_filters_are_flat_errors(client):
    r = client.get("/v1/devices", params={"zone": "attic"})
    assert r.status_code == 400
    assert r.json() == {
        "http_status": 400,
        "code": "UNKNOWN_ZONE",
        "message": r.json()["message"],
    }
    r = client.get("/v1/devices", params={"kind": "TOASTER"})
    assert r.status_code == 400
    assert r.json()["code"] == "MALFORMED_PAYLOAD"


def test_logs_ingest_reports_rejects_with_line_numbers(client):
    mixed = (
        "2025-01-17T09:32:10Z | SSBRM-01 | WARN | E102 | ok line\n"
        "\n"
        "2025-01-17T09:32:20Z | SSBRM-01 | LOUD | E102 | bad severity\n"
        "2025-01-17T09:32:30Z | GHOST-01 | WARN | E102 | unknown device\n"
    )
    body = client.post(
        "/v1/logs", content=mixed, headers={"content-type": "text/plain"}
    ).json()
    assert body["accepted"] == 1
    assert [r["line"] for r in body["rejected"]] == [3, 4]
    assert "column 3" in body["rejected"][0]["reason"]


def test_read_your_writes_incident_visible_immediately(client):
    ingest_s1(client)
    body = client.get("/v1/incidents").json()
    (incident,) = body["incidents"]
    assert incident["status"] == "OPEN"
    assert incident["primary_code"] == "E102"
    assert incident["sources_seen"] == ["LOG", "VISION"]
    assert incident["zone_id"] == "corridor"
    assert len(incident["event_ids"]) == 3


def test_incident_filters_and_detail(client):
    ingest_s1(client)
    assert client.get("/v1/incidents", params={"zone": "lobby"}).json() == {
        "incidents": []
    }
    assert (
        client.get("/v1/incidents", params={"status": "resolved"}).json()["incidents"]
        == []
    )
    by_dev = client.get("/v1/incidents", params={"device_id": "SSBRM-01"}).json()
    incident_id = by_dev["incidents"][0]["incident_id"]
    detail = client.get(f"/v1/incidents/{incident_id}").json()
    assert [e["event_id"] for e in detail["events"]] == detail["event_ids"]
    assert detail["events"][0]["message"] == "card reader slow to respond"
    missing = client.get("/v1/incidents/INC-NOPE")
    assert missing.status_code == 404
    assert missing.json()["code"] == "UNKNOWN_INCIDENT"


def test_ok_log_resolves_incident(client):
    ingest_s1(client)
    client.post(
        "/v1/logs",
        content="2025-01-17T10:32:10Z | SSBRM-01 | INFO | OK | self-check passed\n",
        headers={"content-type": "text/plain"},
    )
    (incident,) = client.get("/v1/incidents").json()["incidents"]
    assert incident["status"] == "RESOLVED"
    devices = client.get("/v1/devices", params={"zone": "corridor"}).json()["devices"]
    assert all(d["status"] == "AVAILABLE" for d in devices)


def test_events_endpoint_accepts_status_rows(client):
    rows = [
        {"device_id": "SSBRM-01", "ts": "2025-01-18T08:00:00Z", "status": "E101"},
        {"device_id": "SSBRM-01", "ts": "bad-ts", "status": "E101"},
    ]
    body = client.post("/v1/events", json=rows).json()
    assert body["accepted"] == 1
    assert body["rejected"][0]["line"] == 2
    (incident,) = client.get("/v1/incidents").json()["incidents"]
    assert incident["primary_code"] == "E101"


def test_malformed_json_bodies_are_400(client):
    r = client.post(
        "/v1/events",
        content="{not json",
        headers={"content-type": "application/json"},
    )
    assert r.status_code == 400
    assert r.json()["code"] == "MALFORMED_PAYLOAD"
    r = client.post("/v1/events", json={"not": "a list"})
    assert r.status_code == 400
    r = client.post("/v1/query", json=["not", "an", "object"])
    assert r.status_code == 400


def test_vision_frame_ref_uses_gateway_captioning(client, tmp_path):
    scen = tmp_path / "scen"
    run_scenario(build_scenario("S1_OPEN", 7), scen)
    sidecar = next((scen / "frames").glob("*.meta.json"))
    frame_ref = str(sidecar)[: -len(".meta.json")]
    body = client.post(
        "/v1/vision/observations",
        json=[{"frame_ref": frame_ref, "camera_id": "CAM-01"}],
    ).json()
    assert body == {"accepted": 1, "rejected": []}
    (incident,) = client.get("/v1/incidents").json()["incidents"]
    assert incident["sources_seen"] == ["VISION"]


def test_vision_rejections_are_reported_per_item(client):
    items = [
        {"camera_id": "CAM-02", "captured_at_text": "2025-01-17 09:33:40",
         "caption": "x", "anomaly": True},  # ambiguous subject
        {"frame_ref": "frames/CAM-01-0001.jpg"},  # no camera_id
        "not an object",
    ]
    body = client.post("/v1/vision/observations", json=items).json()
    assert body["accepted"] == 0
    assert [r["line"] for r in body["rejected"]] == [1, 2, 3]


def test_manual_upload_and_entry_lookup(client):
    text = (
        "SAFETY PRECAUTIONS\n- Cleaning: wipe the kiosk weekly.\n\n"
        "TROUBLESHOOTING\nSymptom: error K101 on boot. Remedy: reseat the cable.\n"
    )
    body = client.post(
        "/v1/manuals",
        json={"manual_id": "kiosk-manual", "device_kind": "SELF_SERVICE_MACHINE",
              "text": text},
    ).json()
    assert body == {"manual_id": "kiosk-manual", "entries": 2}
    entry = client.get("/v1/manual-entries/kiosk-manual-T01").json()
    assert entry["codes"] == ["K101"]
    missing = client.get("/v1/manual-entries/ghost-manual-T01")
    assert missing.status_code == 404


def test_manual_upload_validation(client):
    r = client.post("/v1/manuals", json={"manual_id": "Bad Id", "device_kind":
                                         "SILENT_BOOTH", "text": "x"})
    assert r.status_code == 400
    r = client.post(
        "/v1/manuals",
        json={"manual_id": "m", "device_kind": "SILENT_BOOTH", "text": "no sections"},
    )
    assert r.status_code == 400
    assert r.json()["code"] == "NO_RECOGNIZED_SECTIONS"


def test_query_requires_utterance(client):
    r = client.post("/v1/query", json={})
    assert r.status_code == 400
    assert r.json()["code"] == "EMPTY_UTTERANCE"
    r = client.post("/v1/query", json={"utterance": "   "})
    assert r.status_code == 400


def test_query_returns_bundle_shape(client):
    ingest_s1(client)
    body = client.post(
        "/v1/query", json={"utterance": "Which devices are deployed in the corridor?"}
    ).json()
    assert set(body) == {"intent", "facts", "citations", "rendered_text", "backend"}
    assert body["backend"] == "STUB"
    assert body["intent"]["path"] == "PATH1_AVAILABILITY"
    assert body["intent"]["zone"] == "corridor"


def test_query_zone_hint_fills_missing_slot(client):
    ingest_s1(client)
    body = client.post(
        "/v1/query",
        json={"utterance": "Which devices are deployed?", "zone": "lobby"},
    ).json()
    assert body["intent"]["zone"] == "lobby"


def test_query_unknown_device_is_flat_error(client):
    r = client.post("/v1/query", json={"utterance": "Show faults for GHOST-77."})
    assert r.status_code == 400
    assert r.json()["code"] == "UNKNOWN_DEVICE"


def test_report_endpoint_matches_query_facts(client):
    ingest_s1(client)
    report = client.get("/v1/reports/comprehensive").json()
    via_query = client.post(
        "/v1/query", json={"utterance": "Give me a comprehensive report."}
    ).json()["facts"]
    assert report == via_query
    corridor = next(z for z in report["zones"] if z["zone"] == "corridor")
    assert corridor["counts"] == {"devices": 4, "open_incidents": 1, "events": 3}


def test_snapshot_file_tracks_ingest(client, data_dir):
    ingest_s1(client)
    lines = (
        (data_dir / "incidents" / "current.jsonl").read_text(encoding="utf-8")
        .strip()
        .splitlines()
    )
    assert len(lines) == 1
    snap = json.loads(lines[0])
    assert snap["status"] == "OPEN"
    assert snap["primary_code"] == "E102"
