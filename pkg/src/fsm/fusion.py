"""Time-window correlation of canonical events into per-device incidents.

A single deterministic pass groups WARN-or-worse events on one device:

* LOG/TABLE events join the device's latest OPEN incident when they fall
  within ``merge_gap_secs`` of its newest LOG/TABLE member (the window end
  for camera-only incidents), else they open a new incident.
* VISION events join an OPEN incident on the device when they fall within
  ``correlation_window_secs`` of any member, else they open their own.
* An OK LOG/TABLE event resolves every OPEN incident on its device (when
  ``resolve_on_ok``) without joining.

INFO events and OK events never become incident members, so every incident
has max severity >= WARN.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import UnknownIncident, UnsortedInput
from .events import OK_CODE, DeviceEvent, EventSource, Severity, format_ts
from .registry import DeviceKind, Registry

STATUS_OPEN = "OPEN"
STATUS_RESOLVED = "RESOLVED"

_SOURCE_ORDER = {source: i for i, source in enumerate(EventSource)}


@dataclass(frozen=True)
class FusionConfig:
    correlation_window_secs: int = 120
    merge_gap_secs: int = 300
    resolve_on_ok: bool = True

    def __post_init__(self):
        if self.correlation_window_secs <= 0 or self.merge_gap_secs <= 0:
            raise ValueError("fusion windows must be positive")


@dataclass(frozen=True)
class CorrelatedIncident:
    incident_id: str
    device_id: str
    window_start: datetime
    window_end: datetime
    event_ids: tuple[str, ...]
    primary_code: str
    max_severity: Severity
    status: str
    sources_seen: frozenset[EventSource]

    def to_json_dict(self) -> dict:
        return {
            "incident_id": self.incident_id,
            "device_id": self.device_id,
            "window_start": format_ts(self.window_start),
            "window_end": format_ts(self.window_end),
            "event_ids": list(self.event_ids),
            "primary_code": self.primary_code,
            "max_severity": self.max_severity.name,
            "status": self.status,
            "sources_seen": sorted(
                (s.name for s in self.sources_seen),
                key=lambda name: _SOURCE_ORDER[EventSource[name]],
            ),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "CorrelatedIncident":
        parse = lambda s: datetime.strptime(s, "%Y-%m-%dT%H:%M:%SZ").replace(
            tzinfo=timezone.utc
        )
        return cls(
            incident_id=data["incident_id"],
            device_id=data["device_id"],
            window_start=parse(data["window_start"]),
            window_end=parse(data["window_end"]),
            event_ids=tuple(data["event_ids"]),
            primary_code=data["primary_code"],
            max_severity=Severity[data["max_severity"]],
            status=data["status"],
            sources_seen=frozenset(EventSource[s] for s in data["sources_seen"]),
        )


class _Draft:
    """Mutable incident under construction during the correlation pass."""

    __slots__ = (
        "device_id",
        "events",
        "status",
        "best_severity",
        "best_ts",
        "best_code",
    )

    def __init__(self, device_id: str, first: DeviceEvent):
        self.device_id = device_id
        self.events: list[DeviceEvent] = [first]
        self.status = STATUS_OPEN
        self.best_severity = first.severity
        self.best_ts = first.ts
        self.best_code = first.code

    def add(self, event: DeviceEvent) -> None:
        self.events.append(event)
        # primary code: highest severity, earliest ts on ties
        if event.severity > self.best_severity or (
            event.severity == self.best_severity and event.ts < self.best_ts
        ):
            self.best_severity = event.severity
            self.best_ts = event.ts
            self.best_code = event.code

    @property
    def window_end(self) -> datetime:
        return self.events[-1].ts

    def last_tabular_ts(self) -> datetime:
        """Newest LOG/TABLE member ts; window end when members are all VISION."""
        for event in reversed(self.events):
            if event.source is not EventSource.VISION:
                return event.ts
        return self.window_end

    def freeze(self) -> CorrelatedIncident:
        return CorrelatedIncident(
            incident_id=f"INC-{self.events[0].event_id}",
            device_id=self.device_id,
            window_start=self.events[0].ts,
            window_end=self.events[-1].ts,
            event_ids=tuple(e.event_id for e in self.events),
            primary_code=self.best_code,
            max_severity=self.best_severity,
            status=self.status,
            sources_seen=frozenset(e.source for e in self.events),
        )


def correlate(
    events: Sequence[DeviceEvent], cfg: FusionConfig | None = None
) -> list[CorrelatedIncident]:
    """Group time-ordered events into incidents. Pure and deterministic."""
    cfg = cfg or FusionConfig()
    previous: DeviceEvent | None = None
    for event in events:
        if previous is not None and (event.ts, event.event_id) < (
            previous.ts,
            previous.event_id,
        ):
            raise UnsortedInput(
                f"event {event.event_id} out of order after {previous.event_id}"
            )
        previous = event

    drafts: list[_Draft] = []
    open_by_device: dict[str, list[_Draft]] = {}

    def open_draft(event: DeviceEvent) -> None:
        draft = _Draft(event.device_id, event)
        drafts.append(draft)
        open_by_device.setdefault(event.device_id, []).append(draft)

    for event in events:
        device_open = open_by_device.get(event.device_id, [])
        if event.code == OK_CODE:
            if (
                cfg.resolve_on_ok
                and event.source in (EventSource.LOG, EventSource.TABLE)
                and device_open
            ):
                for draft in device_open:
                    draft.status = STATUS_RESOLVED
                device_open.clear()
            continue
        if event.severity < Severity.WARN:
            continue

        if event.source is EventSource.VISION:
            window = cfg.correlation_window_secs
            target = None
            for draft in reversed(device_open):
                if any(
                    abs((event.ts - member.ts).total_seconds()) <= window
                    for member in draft.events
                ):
                    target = draft
                    break
            if target is not None:
                target.add(event)
            else:
                open_draft(event)
        else:
            target = None
            if device_open:
                latest = device_open[-1]
                gap = (event.ts - latest.last_tabular_ts()).total_seconds()
                if gap <= cfg.merge_gap_secs:
                    target = latest
            if target is not None:
                target.add(event)
            else:
                open_draft(event)

    incidents = [draft.freeze() for draft in drafts]
    incidents.sort(key=lambda i: (i.window_start, i.incident_id))
    return incidents


def open_incidents(
    incidents: Iterable[CorrelatedIncident],
    as_of: datetime,
    registry: Registry | None = None,
    zone_id: str | None = None,
) -> list[CorrelatedIncident]:
    """OPEN incidents started by ``as_of``, optionally filtered to one zone.

    Sorted by max severity (worst first), then window start.
    """
    if zone_id is not None:
        if registry is None:
            raise ValueError("zone filtering requires a registry")
        registry.get_zone(zone_id)  # raises UnknownZone
    selected = []
    for incident in incidents:
        if incident.status != STATUS_OPEN or incident.window_start > as_of:
            continue
        if zone_id is not None:
            device = registry.get_device(incident.device_id)
            if device.zone_id != zone_id:
                continue
        selected.append(incident)
    selected.sort(key=lambda i: (-int(i.max_severity), i.window_start, i.incident_id))
    return selected


class IncidentIndex:
    """Immutable snapshot of correlated incidents; rebuilt and swapped whole."""

    def __init__(self, incidents: Sequence[CorrelatedIncident] = ()):
        self._incidents = list(incidents)
        self._by_id = {i.incident_id: i for i in self._incidents}

    def all(self) -> list[CorrelatedIncident]:
        return list(self._incidents)

    def get(self, incident_id: str) -> CorrelatedIncident:
        try:
            return self._by_id[incident_id]
        except KeyError:
            raise UnknownIncident(f"unknown incident {incident_id!r}") from None

    def for_device(self, device_id: str) -> list[CorrelatedIncident]:
        return [i for i in self._incidents if i.device_id == device_id]

    def __len__(self) -> int:
        return len(self._incidents)


def incident_timeline(
    incident_id: str, index: IncidentIndex, store
) -> list[DeviceEvent]:
    """Member events of one incident in (ts, event_id) order."""
    incident = index.get(incident_id)
    events = [store.get(eid) for eid in incident.event_ids]
    events.sort(key=lambda e: (e.ts, e.event_id))
    return events


# --- snapshot io -------------------------------------------------------------


def write_snapshot(incidents: Sequence[CorrelatedIncident], path: str | Path) -> None:
    """Atomically regenerate the incident snapshot JSONL file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for incident in incidents:
            fh.write(json.dumps(incident.to_json_dict(), ensure_ascii=False))
            fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    tmp.replace(path)


def load_snapshot(path: str | Path) -> list[CorrelatedIncident]:
    path = Path(path)
    if not path.exists():
        return []
    incidents = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                incidents.append(CorrelatedIncident.from_json_dict(json.loads(line)))
    return incidents
