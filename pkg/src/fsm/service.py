"""REST surface: ingestion, chat queries, incidents, reports, manuals.

One AppState instance owns all shared structures. Ingest batches are
serialized by a lock and re-run fusion synchronously before responding, so
an accepted event is always visible to the next query (read-your-writes).
Queries run against immutable snapshots and never block ingestion.
"""
from __future__ import annotations

import json
import re
import socket
import threading
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .config import ServiceConfig, load_config
from .errors import (
    EmptyUtterance,
    FsmError,
    MalformedPayload,
    BadConfig,
    PortInUse,
)
from .events import DeviceEvent, EventIdFactory, EventStore
from .fusion import (
    FusionConfig,
    IncidentIndex,
    correlate,
    incident_timeline,
    open_incidents,
    write_snapshot,
)
from .ingest import (
    VisionObservation,
    ingest_vision,
    parse_log_line,
    parse_status_row,
)
from .knowledge import KnowledgeIndex, load_all_entries, parse_manual, save_manual
from .llm_gateway import make_gateway
from .registry import DeviceKind, load_manifest
from .router import QueryIntent, QueryPath, Router

MANUAL_ID_RE = re.compile(r"^[a-z][a-z0-9-]*$")


class AppState:
    """Everything the endpoints share; built once per process."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.data_dir = Path(config.data_dir)
        manifest = self.data_dir / "registry.json"
        if not manifest.is_file():
            raise BadConfig(f"missing registry manifest: {manifest}")
        self.registry = load_manifest(manifest)
        self.store = EventStore(self.data_dir / "events")
        self.ids = EventIdFactory(seed=config.event_id_seed)
        self.fusion_cfg = FusionConfig(
            correlation_window_secs=config.correlation_window_secs,
            merge_gap_secs=config.merge_gap_secs,
            resolve_on_ok=config.resolve_on_ok,
        )
        self.gateway = make_gateway(
            config.llm_backend,
            base_url=config.llm_base_url,
            model=config.llm_model,
            api_key=config.llm_api_key,
            allow_manual_egress=config.allow_manual_egress,
        )
        self.knowledge_index = KnowledgeIndex(load_all_entries(self.data_dir))
        self.incident_index = IncidentIndex()
        self._ingest_lock = threading.Lock()
        self._knowledge_lock = threading.Lock()
        self.router = Router(
            self.registry,
            self.store,
            lambda: self.incident_index,
            lambda: self.knowledge_index,
            self.gateway,
        )
        self.refuse()  # fold any preexisting events into incidents

    # --- mutation ---------------------------------------------------------

    def refuse(self) -> None:
        """Re-correlate the whole store and swap in the fresh snapshot."""
        with self._ingest_lock:
            self._refuse_locked()

    def _refuse_locked(self) -> None:
        incidents = correlate(self.store.events_by_ts(), self.fusion_cfg)
        self.incident_index = IncidentIndex(incidents)
        write_snapshot(incidents, self.data_dir / "incidents" / "current.jsonl")

    def ingest(self, events: list[DeviceEvent]) -> int:
        with self._ingest_lock:
            accepted = self.store.append(events)
            if accepted:
                self._refuse_locked()
            return accepted

    def add_manual(self, manual_id: str, kind: DeviceKind, text: str) -> int:
        entries = parse_manual(text, manual_id, kind)
        with self._knowledge_lock:
            save_manual(self.data_dir, manual_id, text, entries)
            self.knowledge_index = KnowledgeIndex(load_all_entries(self.data_dir))
        return len(entries)

    def close(self) -> None:
        close = getattr(self.gateway, "close", None)
        if close:
            close()

    # --- read models --------------------------------------------------------

    def device_rows(self, zone_id: str | None, kind: DeviceKind | None) -> list[dict]:
        """Descriptor + availability merged into one row per device."""
        as_of = self.store.latest_ts()
        open_inc = (
            open_incidents(self.incident_index.all(), as_of) if as_of else []
        )
        status_by_id = {
            e.device_id: e for e in self.registry.availability(None, open_inc)
        }
        rows = []
        for device in self.registry.list_devices(zone_id=zone_id, kind=kind):
            row = device.to_json_dict()
            entry = status_by_id[device.device_id]
            row["status"] = entry.status
            row["open_incident_ids"] = list(entry.open_incident_ids)
            row["role"] = entry.role
            rows.append(row)
        return rows


class _RefusionLoop(threading.Thread):
    """Optional periodic re-correlation (off by default)."""

    def __init__(self, state: AppState, interval_secs: int):
        super().__init__(name="fsm-refusion", daemon=True)
        self._state = state
        self._interval = interval_secs
        self._stop = threading.Event()

    def run(self) -> None:
        while not self._stop.wait(self._interval):
            self._state.refuse()

    def stop(self) -> None:
        self._stop.set()


def _error_body(exc: FsmError) -> dict:
    return {
        "http_status": exc.http_status,
        "code": exc.code,
        "message": str(exc),
    }


async def _json_body(request: Request):
    try:
        return json.loads(await request.body() or b"null")
    except ValueError:
        raise MalformedPayload("request body is not valid JSON") from None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or load_config()
    state = AppState(config)
    loop = None
    if config.refusion_interval_secs > 0:
        loop = _RefusionLoop(state, config.refusion_interval_secs)

    @asynccontextmanager
    async def _lifespan(_app: FastAPI):
        if loop is not None:
            loop.start()
        try:
            yield
        finally:
            if loop is not None:
                loop.stop()
            state.close()

    app = FastAPI(
        title="facility failure management",
        version=__version__,
        lifespan=_lifespan,
    )
    # the ops console is served from its own origin; the service itself only
    # binds localhost by default, so network exposure stays an explicit choice
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.fsm = state

    @app.exception_handler(FsmError)
    async def _fsm_error(_request: Request, exc: FsmError):
        return JSONResponse(status_code=exc.http_status, content=_error_body(exc))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_request: Request, exc: RequestValidationError):
        err = MalformedPayload(str(exc))
        return JSONResponse(status_code=400, content=_error_body(err))

    # --- health and topology -------------------------------------------

    @app.get("/v1/health")
    async def health():
        return {"status": "ok"}

    @app.get("/v1/devices")
    async def devices(zone: str | None = None, kind: str | None = None):
        kind_filter = None
        if kind is not None:
            try:
                kind_filter = DeviceKind[kind]
            except KeyError:
                raise MalformedPayload(f"unknown device kind {kind!r}") from None
        rows = await run_in_threadpool(state.device_rows, zone, kind_filter)
        return {"devices": rows}

    # --- ingestion -------------------------------------------------------

    @app.post("/v1/logs")
    async def post_logs(request: Request):
        raw = (await request.body()).decode("utf-8", errors="replace")
        events: list[DeviceEvent] = []
        rejected: list[dict] = []

        def parse_all() -> None:
            for lineno, line in enumerate(raw.splitlines(), start=1):
                if not line.strip():
                    continue
                try:
                    events.append(parse_log_line(line, state.registry, state.ids))
                except FsmError as exc:
                    rejected.append({"line": lineno, "reason": str(exc)})

        await run_in_threadpool(parse_all)
        accepted = await run_in_threadpool(state.ingest, events)
        return {"accepted": accepted, "rejected": rejected}

    @app.post("/v1/events")
    async def post_events(request: Request):
        body = await _json_body(request)
        if body is None:
            body = []
        if not isinstance(body, list):
            raise MalformedPayload("expected a JSON array of status rows")
        events: list[DeviceEvent] = []
        rejected: list[dict] = []

        def parse_all() -> None:
            for i, row in enumerate(body, start=1):
                try:
                    events.append(
                        parse_status_row(row, state.registry, state.ids, index=i)
                    )
                except FsmError as exc:
                    rejected.append({"line": i, "reason": str(exc)})

        await run_in_threadpool(parse_all)
        accepted = await run_in_threadpool(state.ingest, events)
        return {"accepted": accepted, "rejected": rejected}

    @app.post("/v1/vision/observations")
    async def post_observations(request: Request):
        body = await _json_body(request)
        if body is None:
            body = []
        if not isinstance(body, list):
            raise MalformedPayload("expected a JSON array of observations")
        events: list[DeviceEvent] = []
        rejected: list[dict] = []

        def parse_all() -> None:
            for i, item in enumerate(body, start=1):
                try:
                    if not isinstance(item, dict):
                        raise MalformedPayload("observation must be an object")
                    obs = _observation_from_item(item, state)
                    events.append(ingest_vision(obs, state.registry, state.ids))
                except FsmError as exc:
                    rejected.append({"line": i, "reason": str(exc)})

        await run_in_threadpool(parse_all)
        accepted = await run_in_threadpool(state.ingest, events)
        return {"accepted": accepted, "rejected": rejected}

    @app.post("/v1/manuals")
    async def post_manual(request: Request):
        body = await _json_body(request)
        if not isinstance(body, dict):
            raise MalformedPayload("expected a JSON object")
        manual_id = body.get("manual_id", "")
        if not MANUAL_ID_RE.match(manual_id or ""):
            raise MalformedPayload(f"bad manual_id {manual_id!r}")
        try:
            kind = DeviceKind[body.get("device_kind", "")]
        except KeyError:
            raise MalformedPayload(
                f"unknown device kind {body.get('device_kind')!r}"
            ) from None
        text = body.get("text", "")
        if not isinstance(text, str) or not text.strip():
            raise MalformedPayload("manual text must be a non-empty string")
        count = await run_in_threadpool(state.add_manual, manual_id, kind, text)
        return {"manual_id": manual_id, "entries": count}

    # --- incidents and reports ------------------------------------------

    @app.get("/v1/incidents")
    async def incidents(
        zone: str | None = None,
        device_id: str | None = None,
        status: str | None = None,
    ):
        if zone is not None:
            state.registry.get_zone(zone)
        result = []
        for incident in state.incident_index.all():
            device = state.registry.get_device(incident.device_id)
            if zone is not None and device.zone_id != zone:
                continue
            if device_id is not None and incident.device_id != device_id:
                continue
            if status is not None and incident.status != status.upper():
                continue
            row = incident.to_json_dict()
            row["zone_id"] = device.zone_id
            result.append(row)
        return {"incidents": result}

    @app.get("/v1/incidents/{incident_id}")
    async def incident_detail(incident_id: str):
        index = state.incident_index
        incident = index.get(incident_id)
        timeline = incident_timeline(incident_id, index, state.store)
        row = incident.to_json_dict()
        row["zone_id"] = state.registry.get_device(incident.device_id).zone_id
        row["events"] = [e.to_json_dict() for e in timeline]
        return row

    @app.get("/v1/manual-entries/{entry_id}")
    async def manual_entry(entry_id: str):
        return state.knowledge_index.get_entry(entry_id).to_json_dict()

    @app.get("/v1/reports/comprehensive")
    async def comprehensive_report():
        intent = QueryIntent(path=QueryPath.PATH4_REPORT)
        bundle = await run_in_threadpool(state.router.execute_path4, intent)
        return bundle.facts

    # --- chat -------------------------------------------------------------

    @app.post("/v1/query")
    async def query(request: Request):
        body = await _json_body(request)
        if not isinstance(body, dict):
            raise MalformedPayload("expected a JSON object")
        utterance = body.get("utterance")
        if not isinstance(utterance, str) or not utterance.strip():
            raise EmptyUtterance("utterance is required and must be non-empty")
        zone_hint = body.get("zone")
        bundle = await run_in_threadpool(state.router.answer, utterance, zone_hint)
        return bundle.to_json_dict()

    return app


def serve(config: ServiceConfig | None = None):
    """Blocking entrypoint: build the app and run it under uvicorn."""
    import uvicorn

    config = config or load_config()
    app = create_app(config)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((config.host, config.port))
    except OSError as exc:
        raise PortInUse(f"cannot bind {config.host}:{config.port}: {exc}") from None
    finally:
        probe.close()
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def _observation_from_item(item: dict, state: AppState) -> VisionObservation:
    """Build an observation from a direct payload or a frame reference."""
    if "frame_ref" in item:
        camera_id = item.get("camera_id")
        if not camera_id:
            raise MalformedPayload("frame_ref observations require camera_id")
        result = state.gateway.caption_image(item["frame_ref"])
        if not result.overlay_timestamp_text:
            raise MalformedPayload(
                f"frame {item['frame_ref']!r} carries no overlay timestamp"
            )
        return VisionObservation(
            camera_id=camera_id,
            captured_at_text=result.overlay_timestamp_text,
            caption=result.caption,
            subject_device_id=item.get("subject_device_id"),
            anomaly=result.anomaly,
        )
    try:
        return VisionObservation.from_json_dict(item)
    except KeyError as exc:
        raise MalformedPayload(f"observation missing key {exc}") from None
