from datetime import datetime, timezone

import pytest

from fsm.errors import (
    AmbiguousSubject,
    MalformedLine,
    MalformedRow,
    NotACamera,
    UnknownDevice,
    UnparsableTimestamp,
)
from fsm.events import EventSource, Severity
from fsm.ingest import (
    VisionObservation,
    ingest_vision,
    parse_log_line,
    parse_overlay_timestamp,
    parse_status_row,
    parse_status_table,
    render_log_line,
)

GOOD_LINE = "2025-01-17T09:32:10Z | SSBRM-01 | WARN | E102 | card reader slow to respond"


def test_parse_good_line(registry, ids):
    event = parse_log_line(GOOD_LINE, registry, ids)
    assert event.device_id == "SSBRM-01"
    assert event.source is EventSource.LOG
    assert event.severity is Severity.WARN
    assert event.code == "E102"
    assert event.message == "card reader slow to respond"
    assert event.ts == datetime(2025, 1, 17, 9, 32, 10, tzinfo=timezone.utc)


def test_render_is_parse_inverse(registry, ids):
    event = parse_log_line(GOOD_LINE, registry, ids)
    assert render_log_line(event) == GOOD_LINE


@pytest.mark.parametrize(
    "line,column",
    [
        ("2025-01-17T09:32:10Z | SSBRM-01 | WARN | E102", 1),  # missing field
        ("nope | SSBRM-01 | WARN | E102 | msg", 1),  # bad timestamp
        ("2025-01-17T09:32:10Z |  | WARN | E102 | msg", 2),  # empty device
        ("2025-01-17T09:32:10Z | SSBRM-01 | LOUD | E102 | msg", 3),
        ("2025-01-17T09:32:10Z | SSBRM-01 | WARN | 9XYZ | msg", 4),
        ("2025-01-17T09:32:10Z | SSBRM-01 | WARN | E12 | msg", 4),
    ],
)
def test_malformed_lines_report_first_bad_column(registry, ids, line, column):
    with pytest.raises(MalformedLine) as err:
        parse_log_line(line, registry, ids)
    assert err.value.column == column


def test_unknown_device_is_not_a_column_error(registry, ids):
    with pytest.raises(UnknownDevice):
        parse_log_line(
            "2025-01-17T09:32:10Z | GHOST-01 | WARN | E102 | msg", registry, ids
        )


def test_embedded_newline_rejected(registry, ids):
    with pytest.raises(MalformedLine) as err:
        parse_log_line(GOOD_LINE.replace(" | WARN", "\n | WARN"), registry, ids)
    assert err.value.column == 1


def test_overlay_timestamp_formats():
    overlay = parse_overlay_timestamp("2025-01-17 09:33:40")
    assert overlay == datetime(2025, 1, 17, 9, 33, 40, tzinfo=timezone.utc)
    iso = parse_overlay_timestamp("2025-01-17T09:33:40+01:00")
    assert iso == datetime(2025, 1, 17, 8, 33, 40, tzinfo=timezone.utc)
    with pytest.raises(UnparsableTimestamp):
        parse_overlay_timestamp("last tuesday")
    with pytest.raises(UnparsableTimestamp):
        parse_overlay_timestamp("2025-02-30 10:00:00")


def test_status_row_maps_taxonomy_severity(registry, ids):
    row = {"device_id": "SSBRM-01", "ts": "2025-01-18T08:00:00Z", "status": "E101"}
    event = parse_status_row(row, registry, ids)
    assert event.source is EventSource.TABLE
    assert event.code == "E101"
    assert event.severity is Severity.ERROR  # taxonomy default for E101
    row["status"] = "E201"
    assert parse_status_row(row, registry, ids).severity is Severity.WARN


def test_status_row_ok_and_extras(registry, ids):
    row = {
        "device_id": "SSBRM-01",
        "ts": "2025-01-18T08:00:00Z",
        "status": "ok",
        "battery": 97,
    }
    event = parse_status_row(row, registry, ids)
    assert event.code == "OK"
    assert event.severity is Severity.INFO
    assert event.attributes == {"battery": "97"}


@pytest.mark.parametrize(
    "row",
    [
        {"ts": "2025-01-18T08:00:00Z", "status": "E101"},
        {"device_id": "SSBRM-01", "status": "E101"},
        {"device_id": "SSBRM-01", "ts": "2025-01-18T08:00:00Z"},
        {"device_id": "SSBRM-01", "ts": "bad", "status": "E101"},
        {"device_id": "SSBRM-01", "ts": "2025-01-18T08:00:00Z", "status": "broken"},
    ],
)
def test_bad_status_rows_rejected(registry, ids, row):
    with pytest.raises(MalformedRow):
        parse_status_row(row, registry, ids, index=3)


def test_status_table_reports_failing_index(registry, ids):
    rows = [
        {"device_id": "SSBRM-01", "ts": "2025-01-18T08:00:00Z", "status": "E101"},
        {"device_id": "SSBRM-01", "ts": "nope", "status": "E101"},
    ]
    with pytest.raises(MalformedRow) as err:
        parse_status_table(rows, registry, ids)
    assert err.value.index == 1


def test_vision_anomaly_lands_on_observed_subject(registry, ids):
    obs = VisionObservation(
        camera_id="CAM-01",
        captured_at_text="2025-01-17 09:33:40",
        caption="screen shows an error dialog",
        anomaly=True,
    )
    event = ingest_vision(obs, registry, ids)
    assert event.device_id == "SSBRM-01"  # CAM-01 observes exactly one device
    assert event.source is EventSource.VISION
    assert event.severity is Severity.ERROR
    assert event.code == "V001"
    assert event.attributes["camera_id"] == "CAM-01"


def test_vision_normal_frame_is_informational(registry, ids):
    obs = VisionObservation(
        camera_id="CAM-01",
        captured_at_text="2025-01-17 09:33:40",
        caption="machine idle, no patrons",
    )
    event = ingest_vision(obs, registry, ids)
    assert event.severity is Severity.INFO
    assert event.code == "OK"


def test_vision_multi_target_camera_needs_subject(registry, ids):
    obs = VisionObservation(
        camera_id="CAM-02",  # observes two machines
        captured_at_text="2025-01-17 09:33:40",
        caption="anomaly",
        anomaly=True,
    )
    with pytest.raises(AmbiguousSubject):
        ingest_vision(obs, registry, ids)
    fixed = VisionObservation(
        camera_id="CAM-02",
        captured_at_text="2025-01-17 09:33:40",
        caption="anomaly",
        subject_device_id="SSBRM-02",
        anomaly=True,
    )
    assert ingest_vision(fixed, registry, ids).device_id == "SSBRM-02"


def test_vision_rejects_non_camera_source(registry, ids):
    obs = VisionObservation(
        camera_id="SSBRM-01",
        captured_at_text="2025-01-17 09:33:40",
        caption="x",
    )
    with pytest.raises(NotACamera):
        ingest_vision(obs, registry, ids)
