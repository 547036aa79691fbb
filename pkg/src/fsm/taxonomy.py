"""Fault-code taxonomy shared by ingestion, retrieval fixtures, and simgen.

Codes follow the pattern letter + three digits. The default severity is
applied when a source (structured table rows) carries a bare status code
without its own severity level.
"""
from __future__ import annotations

from dataclasses import dataclass

from .registry import DeviceKind


@dataclass(frozen=True)
class FaultCode:
    code: str
    device_kind: DeviceKind
    summary: str
    default_severity: str  # Severity name; events.Severity resolves it


FAULT_TAXONOMY: dict[str, FaultCode] = {
    fc.code: fc
    for fc in (
        FaultCode("E101", DeviceKind.SELF_SERVICE_MACHINE, "card reader jam", "ERROR"),
        FaultCode("E102", DeviceKind.SELF_SERVICE_MACHINE, "card reader timeout", "WARN"),
        FaultCode("E201", DeviceKind.SELF_SERVICE_MACHINE, "receipt printer out of paper", "WARN"),
        FaultCode("E301", DeviceKind.SELF_SERVICE_MACHINE, "RFID antenna fault", "ERROR"),
        FaultCode("B101", DeviceKind.SILENT_BOOTH, "door sensor fault", "ERROR"),
        FaultCode("B201", DeviceKind.SILENT_BOOTH, "ventilation failure", "ERROR"),
        FaultCode("S101", DeviceKind.SMART_BOOKSHELF, "tag scan mismatch", "WARN"),
        FaultCode("S201", DeviceKind.SMART_BOOKSHELF, "shelf load sensor drift", "WARN"),
        FaultCode("V001", DeviceKind.SURVEILLANCE_CAMERA, "visual anomaly", "ERROR"),
    )
}

VISUAL_ANOMALY_CODE = "V001"
