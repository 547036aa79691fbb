"""Operator query routing across the four answer paths.

Classification is a fixed rule cascade (report > cause > fault > availability)
with zone, device-kind, and device-id slots filled from synonym tables and
the registry. When no rule fires the gateway is asked to classify; the stub
backend cannot, so it yields a clarification instead of a guess.

Execution composes registry, fusion, knowledge, and gateway into an
AnswerBundle whose citations are exactly the provenance labels of the
context blocks sent to the model, so every citation resolves to a stored
event, a manual entry, or a correlated incident.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable

from .errors import EmptyUtterance
from .events import DeviceEvent, format_ts
from .fusion import (
    STATUS_OPEN,
    CorrelatedIncident,
    IncidentIndex,
    incident_timeline,
    open_incidents,
)
from .knowledge import KnowledgeIndex, Section
from .llm_gateway import (
    Backend,
    CompletionRequest,
    ContextBlock,
    FREEFORM_SYSTEM_PROMPT,
    TemplateId,
    render_prompt,
)
from .registry import DeviceDescriptor, DeviceKind, Registry


class QueryPath(Enum):
    PATH1_AVAILABILITY = "PATH1_AVAILABILITY"
    PATH2_FAULT_STATUS = "PATH2_FAULT_STATUS"
    PATH3_CAUSE = "PATH3_CAUSE"
    PATH4_REPORT = "PATH4_REPORT"


@dataclass(frozen=True)
class QueryIntent:
    path: QueryPath
    zone: str | None = None
    device_kind: DeviceKind | None = None
    device_id: str | None = None
    time_range: tuple | None = None  # reserved; no routing rule fills it yet

    def to_json_dict(self) -> dict:
        return {
            "path": self.path.name,
            "zone": self.zone,
            "device_kind": self.device_kind.name if self.device_kind else None,
            "device_id": self.device_id,
            "time_range": list(self.time_range) if self.time_range else None,
        }


@dataclass(frozen=True)
class Clarification:
    question: str


@dataclass(frozen=True)
class AnswerBundle:
    intent: QueryIntent | None
    facts: dict
    citations: tuple[str, ...]
    rendered_text: str
    backend: Backend

    def to_json_dict(self) -> dict:
        return {
            "intent": self.intent.to_json_dict() if self.intent else None,
            "facts": self.facts,
            "citations": list(self.citations),
            "rendered_text": self.rendered_text,
            "backend": self.backend.value,
        }


# rule cascade, evaluated in this order
_PATH4_RE = re.compile(r"\b(report|comprehensive|risk assessment|overall)\b")
_PATH3_RE = re.compile(r"\b(why|cause\w*|reason\w*)\b")
_PATH2_RE = re.compile(r"\b(fault\w*|anomal\w*|broken|malfunction\w*|issue\w*|error\w*)\b")
_PATH1_RE = re.compile(r"\b(availab\w*|deployed|statistics|(?:which|what)\s+devices?)\b")

_DEVICE_TOKEN_RE = re.compile(r"\b([A-Za-z]+-\d{2})\b")

# longest phrases first so "smart bookshelf" wins over "shelf"
KIND_SYNONYMS: tuple[tuple[str, DeviceKind], ...] = (
    ("self-service", DeviceKind.SELF_SERVICE_MACHINE),
    ("self service", DeviceKind.SELF_SERVICE_MACHINE),
    ("borrowing", DeviceKind.SELF_SERVICE_MACHINE),
    ("returning machine", DeviceKind.SELF_SERVICE_MACHINE),
    ("ssbrm", DeviceKind.SELF_SERVICE_MACHINE),
    ("silent booth", DeviceKind.SILENT_BOOTH),
    ("booth", DeviceKind.SILENT_BOOTH),
    ("smart bookshelf", DeviceKind.SMART_BOOKSHELF),
    ("bookshelf", DeviceKind.SMART_BOOKSHELF),
    ("bookshelves", DeviceKind.SMART_BOOKSHELF),
    ("book shelf", DeviceKind.SMART_BOOKSHELF),
    ("shelf", DeviceKind.SMART_BOOKSHELF),
    ("shelves", DeviceKind.SMART_BOOKSHELF),
    ("surveillance camera", DeviceKind.SURVEILLANCE_CAMERA),
    ("camera", DeviceKind.SURVEILLANCE_CAMERA),
    ("surveillance", DeviceKind.SURVEILLANCE_CAMERA),
)

KIND_PHRASES = {
    DeviceKind.SELF_SERVICE_MACHINE: "self-service borrowing and returning machine",
    DeviceKind.SILENT_BOOTH: "silent booth",
    DeviceKind.SMART_BOOKSHELF: "smart bookshelf",
    DeviceKind.SURVEILLANCE_CAMERA: "surveillance camera",
}

CLARIFICATION_QUESTION = (
    "I could not match that to an operation I support. Please name a zone or "
    "device and ask about availability, current faults, the cause of a "
    "malfunction, or a comprehensive report."
)

CLASSIFY_SYSTEM_PROMPT = (
    "Classify the operator request into exactly one of: PATH1 (device "
    "availability), PATH2 (current faults and anomalies), PATH3 (cause of a "
    "malfunction), PATH4 (comprehensive report). Reply with the path token "
    "only, or UNKNOWN."
)

_CITATION_PREFIXES = ("incident:", "event:", "entry:")


def extract_citations(blocks: Iterable[ContextBlock]) -> tuple[str, ...]:
    """Provenance labels worth citing, in block order, deduplicated."""
    seen: dict[str, None] = {}
    for block in blocks:
        if block.label.startswith(_CITATION_PREFIXES):
            seen.setdefault(block.label)
    return tuple(seen)


def prevention_query(kind: DeviceKind) -> str:
    return f"{KIND_PHRASES[kind]} safety precautions prevention"


def _match_kind(lowered: str) -> DeviceKind | None:
    for phrase, kind in KIND_SYNONYMS:
        if phrase in lowered:
            return kind
    return None


class Router:
    """Stateless per request; reads snapshots supplied by the callables."""

    def __init__(
        self,
        registry: Registry,
        store,
        incident_index: Callable[[], IncidentIndex],
        knowledge_index: Callable[[], KnowledgeIndex],
        gateway,
    ):
        self._registry = registry
        self._store = store
        self._incidents = incident_index
        self._knowledge = knowledge_index
        self._gateway = gateway

    # --- classification ---------------------------------------------------

    def classify(self, utterance: str) -> QueryIntent | Clarification:
        if not utterance or not utterance.strip():
            raise EmptyUtterance("query utterance is empty")
        lowered = " ".join(utterance.lower().split())
        zone = self._match_zone(lowered)
        # device ids are masked first so "SSBRM-02" cannot read as a kind word
        kind = _match_kind(_DEVICE_TOKEN_RE.sub(" ", lowered))
        device_id = self._match_device(utterance)

        if _PATH4_RE.search(lowered):
            path = QueryPath.PATH4_REPORT
        elif _PATH3_RE.search(lowered):
            path = QueryPath.PATH3_CAUSE
        elif _PATH2_RE.search(lowered):
            path = QueryPath.PATH2_FAULT_STATUS
        elif _PATH1_RE.search(lowered):
            path = QueryPath.PATH1_AVAILABILITY
        else:
            return self._fallback_classify(utterance, zone, kind, device_id)
        return QueryIntent(path=path, zone=zone, device_kind=kind, device_id=device_id)

    def _match_zone(self, lowered: str) -> str | None:
        for zone in self._registry.zones():
            names = (zone.display_name.lower(), zone.id.replace("_", " "), zone.id)
            if any(name in lowered for name in names):
                return zone.id
        return None

    def _match_device(self, utterance: str) -> str | None:
        for token in _DEVICE_TOKEN_RE.findall(utterance):
            candidate = token.upper()
            if self._registry.has_device(candidate):
                return candidate
        # keep an unregistered id so execution can report UnknownDevice
        match = _DEVICE_TOKEN_RE.search(utterance)
        return match.group(1).upper() if match else None

    def _fallback_classify(
        self,
        utterance: str,
        zone: str | None,
        kind: DeviceKind | None,
        device_id: str | None,
    ) -> QueryIntent | Clarification:
        if self._gateway.backend is Backend.STUB:
            return Clarification(CLARIFICATION_QUESTION)
        req = CompletionRequest(
            system_prompt=CLASSIFY_SYSTEM_PROMPT,
            user_prompt=utterance,
            max_tokens=8,
        )
        reply = self._gateway.complete(req).text.upper()
        for token, path in (
            ("PATH4", QueryPath.PATH4_REPORT),
            ("PATH3", QueryPath.PATH3_CAUSE),
            ("PATH2", QueryPath.PATH2_FAULT_STATUS),
            ("PATH1", QueryPath.PATH1_AVAILABILITY),
        ):
            if token in reply:
                return QueryIntent(
                    path=path, zone=zone, device_kind=kind, device_id=device_id
                )
        return Clarification(CLARIFICATION_QUESTION)

    # --- orchestration ------------------------------------------------------

    def answer(self, utterance: str, zone_hint: str | None = None) -> AnswerBundle:
        outcome = self.classify(utterance)
        if isinstance(outcome, Clarification):
            return self._clarification_bundle(outcome.question, utterance)
        if (
            zone_hint
            and outcome.zone is None
            and self._registry.has_zone(zone_hint)
        ):
            outcome = replace(outcome, zone=zone_hint)
        return self.execute(outcome)

    def execute(self, intent: QueryIntent) -> AnswerBundle:
        handler = {
            QueryPath.PATH1_AVAILABILITY: self.execute_path1,
            QueryPath.PATH2_FAULT_STATUS: self.execute_path2,
            QueryPath.PATH3_CAUSE: self.execute_path3,
            QueryPath.PATH4_REPORT: self.execute_path4,
        }[intent.path]
        return handler(intent)

    def _clarification_bundle(self, question: str, user_prompt: str) -> AnswerBundle:
        req = CompletionRequest(
            system_prompt=FREEFORM_SYSTEM_PROMPT,
            user_prompt=user_prompt,
            context_blocks=(ContextBlock("fact:clarification", question),),
        )
        resp = self._gateway.complete(req)
        return AnswerBundle(
            intent=None,
            facts={"clarification": question},
            citations=(),
            rendered_text=resp.text,
            backend=resp.backend,
        )

    def _open_incidents(self) -> list[CorrelatedIncident]:
        as_of = self._store.latest_ts()
        if as_of is None:
            return []
        return open_incidents(self._incidents().all(), as_of)

    def _timeline(self, incident: CorrelatedIncident) -> list[DeviceEvent]:
        return incident_timeline(incident.incident_id, self._incidents(), self._store)

    def _incident_item(self, incident: CorrelatedIncident) -> dict:
        return {
            "incident": incident,
            "device": self._registry.get_device(incident.device_id),
            "timeline": self._timeline(incident),
        }

    @staticmethod
    def _incident_fact(item: dict) -> dict:
        fact = item["incident"].to_json_dict()
        fact["events"] = [e.to_json_dict() for e in item["timeline"]]
        return fact

    # --- path 1: availability ----------------------------------------------

    def execute_path1(self, intent: QueryIntent) -> AnswerBundle:
        zone_id = intent.zone
        if zone_id is not None:
            display = self._registry.get_zone(zone_id).display_name
        else:
            display = "all zones"
        open_inc = self._open_incidents()
        entries = self._registry.availability(zone_id, open_inc)
        by_id = {i.incident_id: i for i in open_inc}
        blocking = []
        for entry in entries:
            for iid in entry.open_incident_ids:
                incident = by_id[iid]
                blocking.append(
                    {
                        "incident": incident,
                        "device": self._registry.get_device(incident.device_id),
                    }
                )
        req = render_prompt(
            TemplateId.AVAILABILITY,
            {"zone": display, "devices": entries, "incidents": blocking},
        )
        resp = self._gateway.complete(req)
        facts = {
            "zone": zone_id,
            "zone_display": display,
            "devices": [e.to_json_dict() for e in entries],
        }
        return AnswerBundle(
            intent=intent,
            facts=facts,
            citations=extract_citations(req.context_blocks),
            rendered_text=resp.text,
            backend=resp.backend,
        )

    # --- path 2: current faults ----------------------------------------------

    def execute_path2(self, intent: QueryIntent) -> AnswerBundle:
        open_inc = self._open_incidents()
        scope = "the facility"
        if intent.zone is not None:
            zone = self._registry.get_zone(intent.zone)
            open_inc = [
                i
                for i in open_inc
                if self._registry.get_device(i.device_id).zone_id == zone.id
            ]
            scope = zone.display_name
        if intent.device_kind is not None:
            open_inc = [
                i
                for i in open_inc
                if self._registry.get_device(i.device_id).kind is intent.device_kind
            ]
            phrase = KIND_PHRASES[intent.device_kind]
            scope = f"{phrase}s in {scope}" if intent.zone else f"{phrase}s"
        if intent.device_id is not None:
            device = self._registry.get_device(intent.device_id)
            open_inc = [i for i in open_inc if i.device_id == device.device_id]
            scope = f"{device.label} ({device.device_id})"
        items = [self._incident_item(i) for i in open_inc]
        req = render_prompt(
            TemplateId.FAULT_STATUS, {"scope": scope, "incidents": items}
        )
        resp = self._gateway.complete(req)
        facts = {
            "scope": scope,
            "zone": intent.zone,
            "incidents": [self._incident_fact(item) for item in items],
        }
        if not items:
            facts["note"] = f"No open incidents in {scope}."
        return AnswerBundle(
            intent=intent,
            facts=facts,
            citations=extract_citations(req.context_blocks),
            rendered_text=resp.text,
            backend=resp.backend,
        )

    # --- path 3: cause analysis ----------------------------------------------

    def execute_path3(self, intent: QueryIntent) -> AnswerBundle:
        index = self._incidents()
        if intent.device_id is not None:
            candidates = [self._registry.get_device(intent.device_id)]
        elif intent.zone is not None or intent.device_kind is not None:
            candidates = self._registry.list_devices(
                zone_id=intent.zone, kind=intent.device_kind
            )
        else:
            return self._clarification_bundle(
                "Which device do you mean? Name a device id, or a zone and "
                "device kind.",
                "Identify the malfunctioning device.",
            )
        if not candidates:
            return self._no_incident_bundle(intent, None)

        with_open = [
            d
            for d in candidates
            if any(i.status == STATUS_OPEN for i in index.for_device(d.device_id))
        ]
        pool = with_open or [d for d in candidates if index.for_device(d.device_id)]
        if not pool:
            target = candidates[0] if len(candidates) == 1 else None
            return self._no_incident_bundle(intent, target)
        if len(pool) > 1:
            ids = ", ".join(sorted(d.device_id for d in pool))
            return self._clarification_bundle(
                f"Multiple devices match: {ids}. Which one do you mean?",
                "Identify the malfunctioning device.",
            )

        device = pool[0]
        incidents = index.for_device(device.device_id)
        open_first = [i for i in incidents if i.status == STATUS_OPEN]
        incident = max(
            open_first or incidents, key=lambda i: (i.window_start, i.incident_id)
        )
        timeline = self._timeline(incident)
        kindex = self._knowledge()
        cause_query = incident.primary_code + " " + " ".join(
            e.message for e in timeline
        )
        causes = kindex.retrieve(
            cause_query, kind=device.kind, k=3, sections=(Section.TROUBLESHOOTING,)
        )
        prevention = kindex.retrieve(
            prevention_query(device.kind),
            kind=device.kind,
            k=3,
            sections=(Section.SAFETY,),
        )

        cause_req = render_prompt(
            TemplateId.CAUSE_ANALYSIS,
            {
                "device": device,
                "incident": incident,
                "timeline": timeline,
                "hits": causes,
            },
        )
        prevention_req = render_prompt(
            TemplateId.PREVENTION_ADVICE,
            {"topic": device.label, "hits": prevention},
        )
        cause_resp = self._gateway.complete(cause_req)
        prevention_resp = self._gateway.complete(prevention_req)
        facts = {
            "device": device.to_json_dict(),
            "incident": incident.to_json_dict(),
            "timeline": [e.to_json_dict() for e in timeline],
            "causes": [h.to_json_dict() for h in causes],
            "prevention": [h.to_json_dict() for h in prevention],
        }
        citations = extract_citations(
            list(cause_req.context_blocks) + list(prevention_req.context_blocks)
        )
        return AnswerBundle(
            intent=intent,
            facts=facts,
            citations=citations,
            rendered_text=cause_resp.text + "\n\n" + prevention_resp.text,
            backend=cause_resp.backend,
        )

    def _no_incident_bundle(
        self, intent: QueryIntent, device: DeviceDescriptor | None
    ) -> AnswerBundle:
        if device is not None:
            target = f"{device.label} ({device.device_id})"
        elif intent.device_kind is not None:
            target = KIND_PHRASES[intent.device_kind]
        elif intent.zone is not None:
            target = self._registry.get_zone(intent.zone).display_name
        else:
            target = "the requested device"
        note = f"No malfunction has been recorded for {target}."
        req = CompletionRequest(
            system_prompt=FREEFORM_SYSTEM_PROMPT,
            user_prompt=f"Why is {target} not functioning properly?",
            context_blocks=(ContextBlock("fact:no-known-malfunction", note),),
        )
        resp = self._gateway.complete(req)
        facts = {
            "device": device.to_json_dict() if device else None,
            "incident": None,
            "timeline": [],
            "causes": [],
            "prevention": [],
            "note": note,
        }
        return AnswerBundle(
            intent=intent,
            facts=facts,
            citations=(),
            rendered_text=resp.text,
            backend=resp.backend,
        )

    # --- path 4: comprehensive report ---------------------------------------

    def execute_path4(self, intent: QueryIntent) -> AnswerBundle:
        as_of = self._store.latest_ts()
        as_of_text = format_ts(as_of) if as_of else "no recorded events"
        open_inc = self._open_incidents()
        kindex = self._knowledge()

        events_per_zone: dict[str, int] = {}
        for event in self._store.all_events():
            zone_id = self._registry.get_device(event.device_id).zone_id
            events_per_zone[zone_id] = events_per_zone.get(zone_id, 0) + 1

        sections = []
        fact_zones = []
        for zone in self._registry.zones():
            entries = self._registry.availability(zone.id, open_inc)
            zone_inc = [
                i
                for i in open_inc
                if self._registry.get_device(i.device_id).zone_id == zone.id
            ]
            items = [self._incident_item(i) for i in zone_inc]
            causes = {}
            for item in items:
                incident = item["incident"]
                query = incident.primary_code + " " + " ".join(
                    e.message for e in item["timeline"]
                )
                top = kindex.retrieve(
                    query,
                    kind=item["device"].kind,
                    k=1,
                    sections=(Section.TROUBLESHOOTING,),
                )
                causes[incident.incident_id] = top[0] if top else None
            sections.append(
                {
                    "zone": zone,
                    "availability": entries,
                    "incidents": items,
                    "causes": causes,
                }
            )
            fact_zones.append(
                {
                    "zone": zone.id,
                    "zone_display": zone.display_name,
                    "devices": [e.to_json_dict() for e in entries],
                    "incidents": [self._incident_fact(item) for item in items],
                    "causes": [
                        {
                            "incident_id": iid,
                            "entry_id": hit.entry_ref.entry_id if hit else None,
                        }
                        for iid, hit in causes.items()
                    ],
                    "counts": {
                        "devices": len(entries),
                        "open_incidents": len(items),
                        "events": events_per_zone.get(zone.id, 0),
                    },
                }
            )

        prevention = []
        fact_prevention = []
        for kind in DeviceKind:
            if not self._registry.list_devices(kind=kind):
                continue
            hits = kindex.retrieve(
                prevention_query(kind), kind=kind, k=1, sections=(Section.SAFETY,)
            )
            prevention.append((kind, hits))
            fact_prevention.append(
                {
                    "kind": kind.name,
                    "entries": [h.entry_ref.entry_id for h in hits],
                }
            )

        req = render_prompt(
            TemplateId.COMPREHENSIVE_REPORT,
            {"as_of": as_of_text, "zones": sections, "prevention": prevention},
        )
        resp = self._gateway.complete(req)
        facts = {
            "as_of": format_ts(as_of) if as_of else None,
            "zones": fact_zones,
            "prevention": fact_prevention,
            "totals": {
                "devices": len(self._registry.list_devices()),
                "open_incidents": len(open_inc),
                "events": len(self._store),
            },
        }
        return AnswerBundle(
            intent=intent,
            facts=facts,
            citations=extract_citations(req.context_blocks),
            rendered_text=resp.text,
            backend=resp.backend,
        )
