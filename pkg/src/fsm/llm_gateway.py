"""Model access behind one interface: chat completion plus image captioning.

Two backends:

* REMOTE posts chat-completion requests (JSON, ``/v1/chat/completions``) to
  any local model server speaking the common schema.
* STUB renders a fixed template from the request alone. It exists so the
  whole system runs and tests deterministically with no model installed.

Prompt construction lives here too: ``render_prompt`` assembles every fact
into labeled context blocks so answers can cite their provenance. Manual
excerpts (``entry:`` blocks) are redacted from REMOTE payloads unless the
operator explicitly allows egress.
"""
from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

import httpx

from .errors import (
    BackendUnavailable,
    GatewayTimeout,
    InvalidRequest,
    MalformedBackendReply,
    MissingSlot,
    NoSidecar,
    UnparsableReply,
)
from .events import DeviceEvent, EventSource, format_ts
from .fusion import CorrelatedIncident
from .ingest import parse_overlay_timestamp
from .knowledge import KnowledgeHit
from .registry import AvailabilityEntry, DeviceDescriptor

DEFAULT_TIMEOUT_SECS = 30.0
DEFAULT_MAX_INFLIGHT = 4
REDACTED_MANUAL_TEXT = "(manual excerpt withheld: local-only policy)"
STUB_CLOSING_LINE = "-- end of stub answer --"

_SOURCE_ORDER = {source: i for i, source in enumerate(EventSource)}


class Backend(Enum):
    REMOTE = "REMOTE"
    STUB = "STUB"


class TemplateId(Enum):
    AVAILABILITY = "availability"
    FAULT_STATUS = "fault_status"
    CAUSE_ANALYSIS = "cause_analysis"
    COMPREHENSIVE_REPORT = "comprehensive_report"
    PREVENTION_ADVICE = "prevention_advice"


@dataclass(frozen=True)
class ContextBlock:
    """One labeled fact; labels carry provenance (event:, entry:, fact:...)."""

    label: str
    text: str

    def __post_init__(self):
        if not self.label.strip():
            raise InvalidRequest("context block label must be non-empty")
        if not self.text.strip():
            raise InvalidRequest(f"context block {self.label!r} has no text")


@dataclass(frozen=True)
class CompletionRequest:
    system_prompt: str
    user_prompt: str
    context_blocks: tuple[ContextBlock, ...] = ()
    max_tokens: int = 512
    temperature: float = 0.0
    # which template produced this request; None for freeform prompts
    template_id: TemplateId | None = None

    def __post_init__(self):
        if not self.system_prompt.strip():
            raise InvalidRequest("system_prompt must be non-empty")
        if not self.user_prompt.strip():
            raise InvalidRequest("user_prompt must be non-empty")
        if self.max_tokens < 1:
            raise InvalidRequest("max_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 1.0:
            raise InvalidRequest("temperature must be within [0, 1]")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend: Backend
    latency_ms: int


@dataclass(frozen=True)
class CaptionResult:
    caption: str
    overlay_timestamp_text: str | None
    anomaly: bool

    def __post_init__(self):
        if self.overlay_timestamp_text is not None:
            parse_overlay_timestamp(self.overlay_timestamp_text)


# --- prompt templates --------------------------------------------------------

_CITE_RULE = (
    "Answer using only the labeled context blocks and cite the labels of the "
    "blocks you rely on in square brackets."
)

_SYSTEM_PROMPTS = {
    TemplateId.AVAILABILITY: (
        "You are the operations assistant for a public facility's smart "
        "device fleet. Summarize which devices are deployed and whether each "
        "is currently available. " + _CITE_RULE
    ),
    TemplateId.FAULT_STATUS: (
        "You are the operations assistant for a public facility's smart "
        "device fleet. Report current faults and anomalies, worst first. "
        + _CITE_RULE
    ),
    TemplateId.CAUSE_ANALYSIS: (
        "You are the operations assistant for a public facility's smart "
        "device fleet. Explain the likely cause of the malfunction from the "
        "event timeline and the manual excerpts, then give the remedy. "
        + _CITE_RULE
    ),
    TemplateId.COMPREHENSIVE_REPORT: (
        "You are the operations assistant for a public facility's smart "
        "device fleet. Produce a comprehensive risk report: availability per "
        "zone, open incidents, likely causes, and prevention advice. "
        + _CITE_RULE
    ),
    TemplateId.PREVENTION_ADVICE: (
        "You are the operations assistant for a public facility's smart "
        "device fleet. Give concrete failure-prevention advice from the "
        "manual excerpts. " + _CITE_RULE
    ),
}

FREEFORM_SYSTEM_PROMPT = (
    "You are the operations assistant for a public facility's smart device "
    "fleet. If the request does not match an operation you support, ask one "
    "clarifying question."
)


def format_event_line(event: DeviceEvent) -> str:
    return (
        f"{format_ts(event.ts)} [{event.source.name}] "
        f"{event.severity.name} {event.code}: {event.message}"
    )


def format_incident_line(
    incident: CorrelatedIncident, device: DeviceDescriptor
) -> str:
    sources = "+".join(
        s.name
        for s in sorted(incident.sources_seen, key=lambda s: _SOURCE_ORDER[s])
    )
    return (
        f"{device.label} ({incident.device_id}): code {incident.primary_code}, "
        f"severity {incident.max_severity.name}, status {incident.status}, "
        f"window {format_ts(incident.window_start)} to "
        f"{format_ts(incident.window_end)}, sources {sources}."
    )


def format_availability_line(entry: AvailabilityEntry) -> str:
    text = (
        f"{entry.label}, kind {entry.kind.name}, role {entry.role}, "
        f"status {entry.status}."
    )
    if entry.open_incident_ids:
        text += " Open incidents: " + ", ".join(entry.open_incident_ids) + "."
    return text


def format_hit_line(hit: KnowledgeHit) -> str:
    entry = hit.entry_ref
    return f"({entry.section.name}) {entry.title}: {entry.body}"


def _need(slots: Mapping, name: str):
    if name not in slots:
        raise MissingSlot(name)
    return slots[name]


def _availability_blocks(slots: Mapping) -> tuple[str, list[ContextBlock]]:
    zone = _need(slots, "zone")
    devices: Sequence[AvailabilityEntry] = _need(slots, "devices")
    blocks = [
        ContextBlock("fact:device-count", f"{len(devices)} devices registered in {zone}.")
    ]
    for entry in devices:
        blocks.append(
            ContextBlock(f"device:{entry.device_id}", format_availability_line(entry))
        )
    # incidents blocking availability, so the unavailable verdicts are citable
    for item in slots.get("incidents", ()):
        incident: CorrelatedIncident = item["incident"]
        blocks.append(
            ContextBlock(
                f"incident:{incident.incident_id}",
                format_incident_line(incident, item["device"]),
            )
        )
    prompt = f"Which devices are deployed in {zone} and are they available right now?"
    return prompt, blocks


def _fault_status_blocks(slots: Mapping) -> tuple[str, list[ContextBlock]]:
    scope = _need(slots, "scope")
    incidents = _need(slots, "incidents")
    blocks: list[ContextBlock] = []
    if not incidents:
        blocks.append(
            ContextBlock("fact:no-open-incidents", f"No open incidents in {scope}.")
        )
    for item in incidents:
        incident: CorrelatedIncident = item["incident"]
        blocks.append(
            ContextBlock(
                f"incident:{incident.incident_id}",
                format_incident_line(incident, item["device"]),
            )
        )
        for event in item["timeline"]:
            blocks.append(
                ContextBlock(f"event:{event.event_id}", format_event_line(event))
            )
    prompt = f"Report current faults and anomalies in {scope}."
    return prompt, blocks


def _cause_blocks(slots: Mapping) -> tuple[str, list[ContextBlock]]:
    device: DeviceDescriptor = _need(slots, "device")
    incident: CorrelatedIncident = _need(slots, "incident")
    timeline: Sequence[DeviceEvent] = _need(slots, "timeline")
    hits: Sequence[KnowledgeHit] = _need(slots, "hits")
    blocks = [
        ContextBlock(
            f"incident:{incident.incident_id}", format_incident_line(incident, device)
        )
    ]
    for event in timeline:
        blocks.append(ContextBlock(f"event:{event.event_id}", format_event_line(event)))
    if hits:
        for hit in hits:
            blocks.append(
                ContextBlock(f"entry:{hit.entry_ref.entry_id}", format_hit_line(hit))
            )
    else:
        blocks.append(
            ContextBlock(
                "fact:no-manual-guidance",
                f"No manual guidance found for fault code {incident.primary_code}.",
            )
        )
    prompt = f"Why is the {device.label} ({device.device_id}) not functioning properly?"
    return prompt, blocks


def _prevention_blocks(slots: Mapping) -> tuple[str, list[ContextBlock]]:
    topic = _need(slots, "topic")
    hits: Sequence[KnowledgeHit] = _need(slots, "hits")
    blocks: list[ContextBlock] = []
    if hits:
        for hit in hits:
            blocks.append(
                ContextBlock(f"entry:{hit.entry_ref.entry_id}", format_hit_line(hit))
            )
    else:
        blocks.append(
            ContextBlock(
                "fact:no-manual-guidance", f"No manual guidance found for {topic}."
            )
        )
    prompt = f"How can {topic} failures be prevented?"
    return prompt, blocks


def _report_blocks(slots: Mapping) -> tuple[str, list[ContextBlock]]:
    as_of = _need(slots, "as_of")
    zones = _need(slots, "zones")
    prevention = _need(slots, "prevention")
    blocks: list[ContextBlock] = []
    for section in zones:
        zone = section["zone"]
        incidents = section["incidents"]
        blocks.append(
            ContextBlock(
                f"zone:{zone.id}",
                f"{zone.display_name}: {len(section['availability'])} devices, "
                f"{len(incidents)} open incidents.",
            )
        )
        for entry in section["availability"]:
            blocks.append(
                ContextBlock(
                    f"device:{entry.device_id}", format_availability_line(entry)
                )
            )
        for item in incidents:
            incident = item["incident"]
            blocks.append(
                ContextBlock(
                    f"incident:{incident.incident_id}",
                    format_incident_line(incident, item["device"]),
                )
            )
            for event in item["timeline"]:
                blocks.append(
                    ContextBlock(f"event:{event.event_id}", format_event_line(event))
                )
            hit = section["causes"].get(incident.incident_id)
            if hit is not None:
                blocks.append(
                    ContextBlock(
                        f"entry:{hit.entry_ref.entry_id}", format_hit_line(hit)
                    )
                )
    for _kind, hits in prevention:
        for hit in hits:
            blocks.append(
                ContextBlock(f"entry:{hit.entry_ref.entry_id}", format_hit_line(hit))
            )
    prompt = (
        f"Produce a comprehensive risk assessment and cause analysis for the "
        f"whole facility as of {as_of}."
    )
    return prompt, blocks


_BUILDERS = {
    TemplateId.AVAILABILITY: _availability_blocks,
    TemplateId.FAULT_STATUS: _fault_status_blocks,
    TemplateId.CAUSE_ANALYSIS: _cause_blocks,
    TemplateId.COMPREHENSIVE_REPORT: _report_blocks,
    TemplateId.PREVENTION_ADVICE: _prevention_blocks,
}

_MAX_TOKENS = {TemplateId.COMPREHENSIVE_REPORT: 1024}


def render_prompt(template_id: TemplateId, slots: Mapping) -> CompletionRequest:
    """Deterministically assemble the prompt and context for one template."""
    builder = _BUILDERS.get(template_id)
    if builder is None:
        raise InvalidRequest(f"unknown template {template_id!r}")
    user_prompt, blocks = builder(slots)
    return CompletionRequest(
        system_prompt=_SYSTEM_PROMPTS[template_id],
        user_prompt=user_prompt,
        context_blocks=tuple(blocks),
        max_tokens=_MAX_TOKENS.get(template_id, 512),
        temperature=0.0,
        template_id=template_id,
    )


# --- backends ----------------------------------------------------------------


def _sidecar_path(image_ref: str | Path) -> Path:
    path = Path(image_ref)
    if path.name.endswith(".meta.json"):
        return path
    return path.with_name(path.name + ".meta.json")


def load_sidecar(image_ref: str | Path) -> CaptionResult:
    """Read the `.meta.json` caption sidecar next to a frame file."""
    sidecar = _sidecar_path(image_ref)
    if not sidecar.is_file():
        raise NoSidecar(f"no caption sidecar at {sidecar}")
    try:
        data = json.loads(sidecar.read_text(encoding="utf-8"))
        return CaptionResult(
            caption=data["caption"],
            overlay_timestamp_text=data.get("ts"),
            anomaly=bool(data.get("anomaly", False)),
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise UnparsableReply(f"bad caption sidecar {sidecar}: {exc}") from None


class StubGateway:
    """Purely deterministic backend: templates in, canned text out."""

    backend = Backend.STUB

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        name = req.template_id.value if req.template_id else "freeform"
        first_line = req.user_prompt.strip().splitlines()[0]
        lines = [f"[stub:{name}] {first_line}"]
        for block in req.context_blocks:
            lines.append(f"- [{block.label}] {block.text}")
        lines.append(STUB_CLOSING_LINE)
        return CompletionResponse(
            text="\n".join(lines), backend=Backend.STUB, latency_ms=0
        )

    def caption_image(self, image_ref: str | Path) -> CaptionResult:
        return load_sidecar(image_ref)


class RemoteGateway:
    """HTTP chat-completion client with retry, timeout, and inflight bound."""

    backend = Backend.REMOTE

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str = "",
        allow_manual_egress: bool = False,
        timeout_secs: float = DEFAULT_TIMEOUT_SECS,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        transport: httpx.BaseTransport | None = None,
    ):
        self._base_url = base_url.rstrip("/")
        self._model = model
        self._api_key = api_key
        self._allow_manual_egress = allow_manual_egress
        self._client = httpx.Client(timeout=timeout_secs, transport=transport)
        self._inflight = threading.BoundedSemaphore(max_inflight)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        return headers

    def _user_content(self, req: CompletionRequest) -> str:
        parts = [req.user_prompt]
        if req.context_blocks:
            parts.append("")
            parts.append("Context:")
            for block in req.context_blocks:
                text = block.text
                if block.label.startswith("entry:") and not self._allow_manual_egress:
                    text = REDACTED_MANUAL_TEXT
                parts.append(f"[{block.label}]")
                parts.append(text)
        return "\n".join(parts)

    def _post(self, payload: dict) -> dict:
        url = f"{self._base_url}/v1/chat/completions"
        last_exc: Exception | None = None
        for attempt in range(2):  # one retry on transport error
            try:
                with self._inflight:
                    response = self._client.post(
                        url, json=payload, headers=self._headers()
                    )
                break
            except httpx.TimeoutException as exc:
                last_exc = GatewayTimeout(f"backend timed out: {url}")
                last_exc.__cause__ = exc
            except httpx.TransportError as exc:
                last_exc = BackendUnavailable(f"backend unreachable: {url}")
                last_exc.__cause__ = exc
        else:
            raise last_exc
        if response.status_code != 200:
            raise BackendUnavailable(
                f"backend returned HTTP {response.status_code}"
            )
        try:
            return response.json()
        except ValueError as exc:
            raise MalformedBackendReply(f"non-JSON backend reply: {exc}") from None

    @staticmethod
    def _first_choice_text(data: dict) -> str:
        try:
            text = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise MalformedBackendReply(
                "reply missing choices[0].message.content"
            ) from None
        if not isinstance(text, str) or not text.strip():
            raise MalformedBackendReply("backend returned empty completion text")
        return text

    def complete(self, req: CompletionRequest) -> CompletionResponse:
        payload = {
            "model": self._model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": self._user_content(req)},
            ],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        }
        started = time.perf_counter()
        data = self._post(payload)
        text = self._first_choice_text(data)
        latency = int((time.perf_counter() - started) * 1000)
        return CompletionResponse(text=text, backend=Backend.REMOTE, latency_ms=latency)

    def caption_image(self, image_ref: str | Path | bytes) -> CaptionResult:
        if isinstance(image_ref, bytes):
            raw = image_ref
        else:
            path = Path(image_ref)
            if not path.is_file():
                raise InvalidRequest(f"no such image file: {path}")
            raw = path.read_bytes()
        if not raw:
            raise InvalidRequest("empty image input")
        encoded = base64.b64encode(raw).decode("ascii")
        payload = {
            "model": self._model,
            "messages": [
                {
                    "role": "user",
                    "content": [
                        {
                            "type": "text",
                            "text": (
                                "Describe this surveillance frame as JSON with "
                                'keys "caption", "overlay_timestamp_text" (the '
                                "timestamp overlay text, or null), and "
                                '"anomaly" (boolean).'
                            ),
                        },
                        {
                            "type": "image_url",
                            "image_url": {"url": f"data:image/jpeg;base64,{encoded}"},
                        },
                    ],
                }
            ],
            "max_tokens": 256,
            "temperature": 0.0,
        }
        data = self._post(payload)
        text = self._first_choice_text(data)
        try:
            parsed = json.loads(text)
            return CaptionResult(
                caption=parsed["caption"],
                overlay_timestamp_text=parsed.get("overlay_timestamp_text"),
                anomaly=bool(parsed.get("anomaly", False)),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise UnparsableReply(f"vision reply was not the expected JSON: {exc}") from None


def make_gateway(
    backend: str,
    base_url: str = "",
    model: str = "",
    api_key: str = "",
    allow_manual_egress: bool = False,
    transport: httpx.BaseTransport | None = None,
):
    """Build the configured gateway; ``backend`` is ``remote`` or ``stub``."""
    normalized = backend.strip().lower()
    if normalized == "stub":
        return StubGateway()
    if normalized == "remote":
        if not base_url:
            raise InvalidRequest("remote backend requires a base URL")
        return RemoteGateway(
            base_url=base_url,
            model=model or "local-model",
            api_key=api_key,
            allow_manual_egress=allow_manual_egress,
            transport=transport,
        )
    raise InvalidRequest(f"unknown backend {backend!r}")
