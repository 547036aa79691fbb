"""Facility topology: zones, device kinds, registered devices, availability.

The registry is loaded once from a declarative ``registry.json`` manifest and
is immutable afterwards except for ``register_device``, which is serialized.
"""
from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from .errors import DuplicateId, ObservesOnNonCamera, UnknownDevice, UnknownZone

if TYPE_CHECKING:
    from .fusion import CorrelatedIncident


class DeviceKind(Enum):
    SELF_SERVICE_MACHINE = "SELF_SERVICE_MACHINE"
    SILENT_BOOTH = "SILENT_BOOTH"
    SMART_BOOKSHELF = "SMART_BOOKSHELF"
    SURVEILLANCE_CAMERA = "SURVEILLANCE_CAMERA"


# Listing order: service devices first, monitoring cameras last.
_KIND_ORDER = {kind: i for i, kind in enumerate(DeviceKind)}

DEVICE_ID_RE = re.compile(r"^[A-Z]+-\d{2}$")
ZONE_ID_RE = re.compile(r"^[a-z][a-z0-9_]*$")

ROLE_SERVICE = "service"
ROLE_MONITORING = "monitoring"

AVAILABLE = "AVAILABLE"
UNAVAILABLE = "UNAVAILABLE"


@dataclass(frozen=True)
class Zone:
    id: str
    display_name: str

    def __post_init__(self):
        if not ZONE_ID_RE.match(self.id):
            raise ValueError(f"zone id must be non-empty lowercase, got {self.id!r}")


@dataclass(frozen=True)
class DeviceDescriptor:
    device_id: str
    kind: DeviceKind
    zone_id: str
    label: str
    manual_id: str | None = None
    observes: tuple[str, ...] = ()

    def __post_init__(self):
        if not DEVICE_ID_RE.match(self.device_id):
            raise ValueError(
                f"device_id must match PREFIX-NN, got {self.device_id!r}"
            )

    @property
    def role(self) -> str:
        if self.kind is DeviceKind.SURVEILLANCE_CAMERA:
            return ROLE_MONITORING
        return ROLE_SERVICE

    def to_json_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "kind": self.kind.name,
            "zone_id": self.zone_id,
            "label": self.label,
            "manual_id": self.manual_id,
            "observes": list(self.observes),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "DeviceDescriptor":
        return cls(
            device_id=data["device_id"],
            kind=DeviceKind[data["kind"]],
            zone_id=data["zone_id"],
            label=data.get("label", data["device_id"]),
            manual_id=data.get("manual_id"),
            observes=tuple(data.get("observes") or ()),
        )


@dataclass(frozen=True)
class AvailabilityEntry:
    device_id: str
    kind: DeviceKind
    label: str
    role: str
    status: str
    open_incident_ids: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "device_id": self.device_id,
            "kind": self.kind.name,
            "label": self.label,
            "role": self.role,
            "status": self.status,
            "open_incident_ids": list(self.open_incident_ids),
        }


class Registry:
    """In-memory facility registry.

    Reads take a consistent snapshot under the same lock that serializes
    ``register_device``; after the startup load the structure only grows.
    """

    def __init__(self):
        self._zones: dict[str, Zone] = {}
        self._devices: dict[str, DeviceDescriptor] = {}
        self._lock = threading.RLock()

    # --- topology -------------------------------------------------------

    def add_zone(self, zone: Zone) -> None:
        with self._lock:
            if zone.id in self._zones:
                raise DuplicateId(f"zone {zone.id!r} already registered")
            self._zones[zone.id] = zone

    def zones(self) -> list[Zone]:
        """Zones in manifest declaration order."""
        with self._lock:
            return list(self._zones.values())

    def get_zone(self, zone_id: str) -> Zone:
        with self._lock:
            try:
                return self._zones[zone_id]
            except KeyError:
                raise UnknownZone(f"unknown zone {zone_id!r}") from None

    def has_zone(self, zone_id: str) -> bool:
        with self._lock:
            return zone_id in self._zones

    # --- devices --------------------------------------------------------

    def register_device(self, descriptor: DeviceDescriptor) -> str:
        with self._lock:
            if descriptor.zone_id not in self._zones:
                raise UnknownZone(f"unknown zone {descriptor.zone_id!r}")
            if descriptor.device_id in self._devices:
                raise DuplicateId(f"device {descriptor.device_id!r} already registered")
            if descriptor.observes and descriptor.kind is not DeviceKind.SURVEILLANCE_CAMERA:
                raise ObservesOnNonCamera(
                    f"{descriptor.device_id} is {descriptor.kind.name}, only cameras observe"
                )
            for target in descriptor.observes:
                if target not in self._devices:
                    raise UnknownDevice(
                        f"{descriptor.device_id} observes unregistered device {target!r}"
                    )
            self._devices[descriptor.device_id] = descriptor
            return descriptor.device_id

    def get_device(self, device_id: str) -> DeviceDescriptor:
        with self._lock:
            try:
                return self._devices[device_id]
            except KeyError:
                raise UnknownDevice(f"unknown device {device_id!r}") from None

    def has_device(self, device_id: str) -> bool:
        with self._lock:
            return device_id in self._devices

    def list_devices(
        self, zone_id: str | None = None, kind: DeviceKind | None = None
    ) -> list[DeviceDescriptor]:
        """Matching devices, service kinds first, id-ordered within kind."""
        with self._lock:
            if zone_id is not None and zone_id not in self._zones:
                raise UnknownZone(f"unknown zone {zone_id!r}")
            matched = [
                d
                for d in self._devices.values()
                if (zone_id is None or d.zone_id == zone_id)
                and (kind is None or d.kind is kind)
            ]
        matched.sort(key=lambda d: (_KIND_ORDER[d.kind], d.device_id))
        return matched

    # --- availability ---------------------------------------------------

    def availability(
        self, zone_id: str | None, open_incidents: Iterable["CorrelatedIncident"]
    ) -> list[AvailabilityEntry]:
        """Per-device availability for a zone (all zones when zone_id is None).

        A device is UNAVAILABLE iff it has an OPEN incident of severity
        ERROR or worse; cameras are always reported with role=monitoring.
        """
        from .events import Severity  # local import avoids a module cycle

        devices = self.list_devices(zone_id)
        blocking: dict[str, list[str]] = {}
        for incident in open_incidents:
            if not self.has_device(incident.device_id):
                raise UnknownDevice(
                    f"incident {incident.incident_id} names unknown device "
                    f"{incident.device_id!r}"
                )
            if incident.status != "OPEN":
                continue
            if incident.max_severity < Severity.ERROR:
                continue
            blocking.setdefault(incident.device_id, []).append(incident.incident_id)

        entries = []
        for d in devices:
            incident_ids = tuple(sorted(blocking.get(d.device_id, ())))
            entries.append(
                AvailabilityEntry(
                    device_id=d.device_id,
                    kind=d.kind,
                    label=d.label,
                    role=d.role,
                    status=UNAVAILABLE if incident_ids else AVAILABLE,
                    open_incident_ids=incident_ids,
                )
            )
        return entries


# --- manifest io -------------------------------------------------------------


def registry_to_manifest(registry: Registry) -> dict:
    return {
        "zones": [{"id": z.id, "display_name": z.display_name} for z in registry.zones()],
        "devices": [d.to_json_dict() for d in registry.list_devices()],
    }


def load_manifest(path: str | Path) -> Registry:
    """Build a registry from a ``registry.json`` manifest file."""
    raw = Path(path).read_text(encoding="utf-8")
    data = json.loads(raw)
    registry = Registry()
    for zone in data.get("zones", []):
        registry.add_zone(Zone(id=zone["id"], display_name=zone["display_name"]))
    for device in data.get("devices", []):
        registry.register_device(DeviceDescriptor.from_json_dict(device))
    return registry
