"""Parsers for the three heterogeneous telemetry sources.

Log lines are pipe-delimited with exactly five fields::

    <ISO-8601 UTC> | <device_id> | <severity> | <code> | <message>

Table rows are column-mapped records carrying at least device_id, ts and a
status column; vision observations arrive as caption + overlay timestamp
(read from the frame or its sidecar). Everything is normalized into
DeviceEvents.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import (
    AmbiguousSubject,
    MalformedLine,
    MalformedRow,
    NotACamera,
    UnknownDevice,
    UnparsableTimestamp,
)
from .events import CODE_RE, OK_CODE, DeviceEvent, EventIdFactory, EventSource, Severity, format_ts
from .registry import DeviceKind, Registry
from .taxonomy import FAULT_TAXONOMY, VISUAL_ANOMALY_CODE

_OVERLAY_RE = re.compile(r"^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}$")

# MalformedLine column attribution: 1 = structure or timestamp, 2 = device
# field, 3 = severity, 4 = code. Structural failures (field count != 5)
# always report column 1 because no later field can be trusted.
COL_TIMESTAMP = 1
COL_DEVICE = 2
COL_SEVERITY = 3
COL_CODE = 4


def parse_overlay_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 or camera-overlay ``YYYY-MM-DD HH:MM:SS`` timestamp.

    Overlay and naive timestamps are assumed UTC; the result is truncated to
    second precision.
    """
    value = text.strip()
    if _OVERLAY_RE.match(value):
        try:
            parsed = datetime.strptime(value, "%Y-%m-%d %H:%M:%S")
        except ValueError:
            raise UnparsableTimestamp(f"cannot parse timestamp {text!r}") from None
        return parsed.replace(tzinfo=timezone.utc)
    try:
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError:
        raise UnparsableTimestamp(f"cannot parse timestamp {text!r}") from None
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc).replace(microsecond=0)


def parse_log_line(line: str, registry: Registry, ids: EventIdFactory) -> DeviceEvent:
    """Parse one raw log line into a DeviceEvent (source=LOG)."""
    if "\n" in line.strip("\n"):
        raise MalformedLine(COL_TIMESTAMP, "embedded newline")
    parts = [p.strip() for p in line.strip().split("|")]
    if len(parts) != 5:
        raise MalformedLine(
            COL_TIMESTAMP, f"expected 5 pipe-delimited fields, got {len(parts)}"
        )
    ts_text, device_id, severity_text, code, message = parts
    try:
        ts = parse_overlay_timestamp(ts_text)
    except UnparsableTimestamp:
        raise MalformedLine(COL_TIMESTAMP, f"bad timestamp {ts_text!r}") from None
    if not device_id:
        raise MalformedLine(COL_DEVICE, "empty device field")
    if not registry.has_device(device_id):
        raise UnknownDevice(f"unknown device {device_id!r}")
    try:
        severity = Severity[severity_text.upper()]
    except KeyError:
        raise MalformedLine(COL_SEVERITY, f"bad severity {severity_text!r}") from None
    if code != OK_CODE and not CODE_RE.match(code):
        raise MalformedLine(COL_CODE, f"bad code {code!r}")
    return DeviceEvent(
        event_id=ids.new_id(ts),
        device_id=device_id,
        ts=ts,
        source=EventSource.LOG,
        severity=severity,
        code=code,
        message=message,
        attributes={},
    )


def render_log_line(event: DeviceEvent) -> str:
    """Canonical textual form of a LOG event (inverse of parse_log_line)."""
    if "|" in event.message:
        raise ValueError("log messages must not contain '|'")
    return (
        f"{format_ts(event.ts)} | {event.device_id} | {event.severity.name}"
        f" | {event.code} | {event.message}"
    )


def parse_status_row(
    row: dict, registry: Registry, ids: EventIdFactory, index: int = 0
) -> DeviceEvent:
    """Map one structured table record to a DeviceEvent (source=TABLE).

    The status column becomes severity/code via the fault taxonomy; any
    extra columns are preserved as string attributes.
    """
    if not isinstance(row, dict):
        raise MalformedRow(index, "record is not an object")
    if "device_id" not in row or not row["device_id"]:
        raise MalformedRow(index, "missing device_id")
    if "ts" not in row or row["ts"] in (None, ""):
        raise MalformedRow(index, "missing ts")
    if "status" not in row or row["status"] in (None, ""):
        raise MalformedRow(index, "missing status")
    device_id = str(row["device_id"])
    if not registry.has_device(device_id):
        raise UnknownDevice(f"unknown device {device_id!r}")
    raw_ts = row["ts"]
    if isinstance(raw_ts, datetime):
        ts = raw_ts.astimezone(timezone.utc).replace(microsecond=0)
    else:
        try:
            ts = parse_overlay_timestamp(str(raw_ts))
        except UnparsableTimestamp:
            raise MalformedRow(index, f"bad ts {raw_ts!r}") from None

    status = str(row["status"]).strip().upper()
    if status == OK_CODE:
        severity, code = Severity.INFO, OK_CODE
    elif CODE_RE.match(status):
        known = FAULT_TAXONOMY.get(status)
        # codes outside the taxonomy are accepted but treated as errors
        severity = Severity[known.default_severity] if known else Severity.ERROR
        code = status
    else:
        raise MalformedRow(index, f"unrecognized status {row['status']!r}")

    attributes = {
        str(k): str(v) for k, v in row.items() if k not in ("device_id", "ts", "status")
    }
    summary = FAULT_TAXONOMY[code].summary if code in FAULT_TAXONOMY else "status report"
    message = "status OK" if code == OK_CODE else summary
    return DeviceEvent(
        event_id=ids.new_id(ts),
        device_id=device_id,
        ts=ts,
        source=EventSource.TABLE,
        severity=severity,
        code=code,
        message=message,
        attributes=attributes,
    )


def parse_status_table(
    rows: list[dict], registry: Registry, ids: EventIdFactory
) -> list[DeviceEvent]:
    """Parse a batch of table records; raises on the first bad row."""
    return [parse_status_row(row, registry, ids, index=i) for i, row in enumerate(rows)]


@dataclass(frozen=True)
class VisionObservation:
    camera_id: str
    captured_at_text: str
    caption: str
    subject_device_id: str | None = None
    anomaly: bool = False

    @classmethod
    def from_json_dict(cls, data: dict) -> "VisionObservation":
        return cls(
            camera_id=data["camera_id"],
            captured_at_text=data["captured_at_text"],
            caption=data.get("caption", ""),
            subject_device_id=data.get("subject_device_id"),
            anomaly=bool(data.get("anomaly", False)),
        )

    def to_json_dict(self) -> dict:
        return {
            "camera_id": self.camera_id,
            "captured_at_text": self.captured_at_text,
            "caption": self.caption,
            "subject_device_id": self.subject_device_id,
            "anomaly": self.anomaly,
        }


def ingest_vision(
    obs: VisionObservation, registry: Registry, ids: EventIdFactory
) -> DeviceEvent:
    """Turn a camera (or screenshot agent) observation into a DeviceEvent.

    The event lands on the observed subject device: the explicit subject if
    given, else the single device in the camera's observes list.
    """
    if obs.anomaly and not obs.caption:
        raise MalformedRow(0, "anomalous observation requires a caption")
    camera = registry.get_device(obs.camera_id)
    if camera.kind is not DeviceKind.SURVEILLANCE_CAMERA:
        raise NotACamera(f"{obs.camera_id} is {camera.kind.name}, not a camera")
    if obs.subject_device_id is not None:
        if not registry.has_device(obs.subject_device_id):
            raise UnknownDevice(f"unknown subject device {obs.subject_device_id!r}")
        subject = obs.subject_device_id
    elif len(camera.observes) == 1:
        subject = camera.observes[0]
    else:
        # no subject and no unique observed device: cannot attribute
        raise AmbiguousSubject(
            f"{obs.camera_id} observes {len(camera.observes)} devices; "
            "observation needs subject_device_id"
        )
    ts = parse_overlay_timestamp(obs.captured_at_text)
    return DeviceEvent(
        event_id=ids.new_id(ts),
        device_id=subject,
        ts=ts,
        source=EventSource.VISION,
        severity=Severity.ERROR if obs.anomaly else Severity.INFO,
        code=VISUAL_ANOMALY_CODE if obs.anomaly else OK_CODE,
        message=obs.caption,
        attributes={"camera_id": obs.camera_id, "caption": obs.caption},
    )
