"""Local-first failure management for library device fleets.

Fuses device telemetry (logs, status tables, camera observations) into
semantic incidents, retrieves guidance from device manuals, and answers
operator questions over a small HTTP API backed by a pluggable language
model gateway (a deterministic stub by default).
"""

__version__ = "0.1.0"

from .config import ServiceConfig, load_config
from .errors import FsmError
from .events import DeviceEvent, EventSource, EventStore, Severity
from .fusion import CorrelatedIncident, FusionConfig, correlate
from .knowledge import KnowledgeIndex, ManualEntry, parse_manual, render_manual
from .llm_gateway import Backend, CompletionRequest, make_gateway, render_prompt
from .registry import DeviceDescriptor, DeviceKind, Registry, Zone, load_manifest
from .router import AnswerBundle, QueryIntent, QueryPath, Router

__all__ = [
    "__version__",
    "AnswerBundle",
    "Backend",
    "CompletionRequest",
    "CorrelatedIncident",
    "DeviceDescriptor",
    "DeviceEvent",
    "DeviceKind",
    "EventSource",
    "EventStore",
    "FsmError",
    "FusionConfig",
    "KnowledgeIndex",
    "ManualEntry",
    "QueryIntent",
    "QueryPath",
    "Registry",
    "Router",
    "ServiceConfig",
    "Severity",
    "Zone",
    "correlate",
    "load_config",
    "load_manifest",
    "make_gateway",
    "parse_manual",
    "render_manual",
    "render_prompt",
]
