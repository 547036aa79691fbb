"""Exception types shared across the service.

Every error carries a machine-readable ``code`` used by the REST layer to
build ApiError bodies; the set of codes is closed and documented in
docs/api.md.
"""
from __future__ import annotations


class FsmError(Exception):
    """Base class for all service errors."""

    code = "INTERNAL"
    http_status = 500


# --- registry ---------------------------------------------------------------

class DuplicateId(FsmError):
    code = "DUPLICATE_ID"
    http_status = 409


class UnknownZone(FsmError):
    code = "UNKNOWN_ZONE"
    http_status = 400


class UnknownDevice(FsmError):
    code = "UNKNOWN_DEVICE"
    http_status = 400


class ObservesOnNonCamera(FsmError):
    code = "OBSERVES_ON_NON_CAMERA"
    http_status = 400


# --- ingest -----------------------------------------------------------------

class MalformedLine(FsmError):
    """A raw log line failed validation.

    ``column`` is the 1-based index of the first offending field; structural
    failures (wrong field count) and bad timestamps report column 1.
    """

    code = "MALFORMED_LINE"
    http_status = 400

    def __init__(self, column: int, reason: str):
        super().__init__(f"column {column}: {reason}")
        self.column = column
        self.reason = reason


class MalformedRow(FsmError):
    code = "MALFORMED_ROW"
    http_status = 400

    def __init__(self, index: int, reason: str):
        super().__init__(f"row {index}: {reason}")
        self.index = index
        self.reason = reason


class UnparsableTimestamp(FsmError):
    code = "UNPARSABLE_TIMESTAMP"
    http_status = 400


class AmbiguousSubject(FsmError):
    code = "AMBIGUOUS_SUBJECT"
    http_status = 400


class NotACamera(FsmError):
    code = "NOT_A_CAMERA"
    http_status = 400


class StorageFailure(FsmError):
    code = "STORAGE_FAILURE"
    http_status = 500


# --- fusion -----------------------------------------------------------------

class UnsortedInput(FsmError):
    code = "UNSORTED_INPUT"
    http_status = 400


class UnknownIncident(FsmError):
    code = "UNKNOWN_INCIDENT"
    http_status = 404


# --- knowledge --------------------------------------------------------------

class NoRecognizedSections(FsmError):
    code = "NO_RECOGNIZED_SECTIONS"
    http_status = 400


class UnknownEntry(FsmError):
    code = "UNKNOWN_ENTRY"
    http_status = 404


# --- llm gateway ------------------------------------------------------------

class GatewayError(FsmError):
    code = "GATEWAY_ERROR"
    http_status = 502


class InvalidRequest(GatewayError):
    code = "INVALID_REQUEST"
    http_status = 400


class BackendUnavailable(GatewayError):
    code = "BACKEND_UNAVAILABLE"
    http_status = 503


class GatewayTimeout(GatewayError):
    code = "GATEWAY_TIMEOUT"
    http_status = 504


class MalformedBackendReply(GatewayError):
    code = "MALFORMED_BACKEND_REPLY"
    http_status = 502


class MissingSlot(GatewayError):
    code = "MISSING_SLOT"
    http_status = 400

    def __init__(self, name: str):
        super().__init__(f"missing template slot: {name}")
        self.name = name


class NoSidecar(GatewayError):
    code = "NO_SIDECAR"
    http_status = 400


class UnparsableReply(GatewayError):
    code = "UNPARSABLE_REPLY"
    http_status = 502


# --- router -----------------------------------------------------------------

class EmptyUtterance(FsmError):
    code = "EMPTY_UTTERANCE"
    http_status = 400


# --- service ----------------------------------------------------------------

class MalformedPayload(FsmError):
    code = "MALFORMED_PAYLOAD"
    http_status = 400


class PortInUse(FsmError):
    code = "PORT_IN_USE"
    http_status = 500


class BadConfig(FsmError):
    code = "BAD_CONFIG"
    http_status = 500
