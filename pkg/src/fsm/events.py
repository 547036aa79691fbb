"""Canonical device events, sortable event ids, and the JSONL event store.

Every heterogeneous telemetry record (log line, table row, camera
observation) is normalized into a DeviceEvent. The store is append-only,
day-partitioned JSONL (``events/YYYY-MM-DD.jsonl``), idempotent per
event_id.
"""
from __future__ import annotations

import json
import os
import random
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum, IntEnum
from pathlib import Path
from typing import Iterable, Mapping

from .errors import StorageFailure

CODE_RE = re.compile(r"^[A-Z][0-9]{3}$")
OK_CODE = "OK"


class Severity(IntEnum):
    INFO = 1
    WARN = 2
    ERROR = 3
    CRITICAL = 4


class EventSource(Enum):
    LOG = "LOG"
    TABLE = "TABLE"
    VISION = "VISION"


def format_ts(ts: datetime) -> str:
    """Canonical second-precision UTC form, e.g. 2025-01-17T09:32:10Z."""
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class DeviceEvent:
    event_id: str
    device_id: str
    ts: datetime
    source: EventSource
    severity: Severity
    code: str
    message: str
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.ts.tzinfo is None or self.ts.utcoffset().total_seconds() != 0:
            raise ValueError("ts must be an aware UTC instant")
        if self.ts.microsecond != 0:
            raise ValueError("ts must be second-precision")
        if self.code != OK_CODE and not CODE_RE.match(self.code):
            raise ValueError(f"code must match [A-Z][0-9]{{3}} or be OK, got {self.code!r}")
        if not self.event_id or not self.device_id:
            raise ValueError("event_id and device_id must be non-empty")

    def to_json_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "device_id": self.device_id,
            "ts": format_ts(self.ts),
            "source": self.source.name,
            "severity": self.severity.name,
            "code": self.code,
            "message": self.message,
            "attributes": dict(self.attributes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DeviceEvent":
        ts = datetime.strptime(data["ts"], "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
        return cls(
            event_id=data["event_id"],
            device_id=data["device_id"],
            ts=ts,
            source=EventSource[data["source"]],
            severity=Severity[data["severity"]],
            code=data["code"],
            message=data.get("message", ""),
            attributes=dict(data.get("attributes") or {}),
        )


# --- event ids ---------------------------------------------------------------

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def _b32(value: int, length: int) -> str:
    chars = []
    for _ in range(length):
        chars.append(_CROCKFORD[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


class EventIdFactory:
    """ULID-style id generator: 10-char time part + 16-char random part.

    The time part comes from the event's own timestamp, so a seeded factory
    replaying the same input stream reproduces identical ids. Monotonic under
    concurrency: ids are strictly increasing in assignment order even when
    timestamps repeat or regress.
    """

    def __init__(self, seed: int | None = None):
        self._rng = random.Random(seed) if seed is not None else random.SystemRandom()
        self._lock = threading.Lock()
        self._last_ms = -1
        self._last_rand = 0

    def new_id(self, ts: datetime) -> str:
        ms = int(ts.timestamp() * 1000)
        with self._lock:
            if ms <= self._last_ms:
                # clock did not advance: keep the time part, bump randomness
                self._last_rand += 1
                if self._last_rand >= 1 << 80:
                    self._last_ms += 1
                    self._last_rand = self._rng.getrandbits(80)
            else:
                self._last_ms = ms
                self._last_rand = self._rng.getrandbits(80)
            return _b32(self._last_ms, 10) + _b32(self._last_rand, 16)


# --- event store -------------------------------------------------------------


class EventStore:
    """Append-only, day-partitioned JSONL event store.

    Appends are serialized and idempotent per event_id; the in-memory view
    mirrors the files, which keeps lookups cheap at desk scale.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._events: dict[str, DeviceEvent] = {}
        self._order: list[str] = []
        self._load()

    def _load(self) -> None:
        if not self.root.exists():
            return
        try:
            for path in sorted(self.root.glob("*.jsonl")):
                with path.open("r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if not line:
                            continue
                        event = DeviceEvent.from_json_dict(json.loads(line))
                        if event.event_id not in self._events:
                            self._events[event.event_id] = event
                            self._order.append(event.event_id)
        except OSError as exc:
            raise StorageFailure(f"failed to load event store: {exc}") from exc
        # store ordering is event_id ordering
        self._order.sort()

    def append(self, events: Iterable[DeviceEvent]) -> int:
        """Durably append events, skipping ids already stored. Returns count."""
        fresh = []
        with self._lock:
            batch_seen: set[str] = set()
            for event in events:
                if event.event_id in self._events or event.event_id in batch_seen:
                    continue
                batch_seen.add(event.event_id)
                fresh.append(event)
            if not fresh:
                return 0
            by_day: dict[str, list[DeviceEvent]] = {}
            for event in fresh:
                day = event.ts.astimezone(timezone.utc).strftime("%Y-%m-%d")
                by_day.setdefault(day, []).append(event)
            try:
                self.root.mkdir(parents=True, exist_ok=True)
                for day, batch in sorted(by_day.items()):
                    path = self.root / f"{day}.jsonl"
                    with path.open("a", encoding="utf-8") as fh:
                        for event in batch:
                            fh.write(json.dumps(event.to_json_dict(), ensure_ascii=False))
                            fh.write("\n")
                        fh.flush()
                        os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageFailure(f"failed to append events: {exc}") from exc
            for event in fresh:
                self._events[event.event_id] = event
                self._order.append(event.event_id)
        return len(fresh)

    def has(self, event_id: str) -> bool:
        with self._lock:
            return event_id in self._events

    def get(self, event_id: str) -> DeviceEvent:
        with self._lock:
            return self._events[event_id]

    def all_events(self) -> list[DeviceEvent]:
        """Events in store order (== event_id order for in-process appends)."""
        with self._lock:
            return [self._events[eid] for eid in self._order]

    def events_by_ts(self) -> list[DeviceEvent]:
        """Events sorted by (ts, event_id) — the fusion input order."""
        events = self.all_events()
        events.sort(key=lambda e: (e.ts, e.event_id))
        return events

    def latest_ts(self) -> datetime | None:
        events = self.all_events()
        if not events:
            return None
        return max(e.ts for e in events)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)
