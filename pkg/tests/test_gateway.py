import json
from datetime import datetime, timezone

import httpx
import pytest

from fsm.errors import (
    BackendUnavailable,
    GatewayTimeout,
    InvalidRequest,
    MalformedBackendReply,
    MissingSlot,
    NoSidecar,
    UnparsableReply,
    UnparsableTimestamp,
)
from fsm.events import DeviceEvent, EventSource, Severity
from fsm.llm_gateway import (
    Backend,
    CompletionRequest,
    ContextBlock,
    REDACTED_MANUAL_TEXT,
    RemoteGateway,
    STUB_CLOSING_LINE,
    StubGateway,
    TemplateId,
    format_event_line,
    load_sidecar,
    make_gateway,
    render_prompt,
)

T0 = datetime(2025, 1, 17, 9, 32, 10, tzinfo=timezone.utc)


def reply(text="All devices are available [fact:device-count]."):
    return {"choices": [{"message": {"content": text}}]}


def remote(handler, **kwargs):
    return RemoteGateway(
        base_url="http://model.local",
        model="test-model",
        transport=httpx.MockTransport(handler),
        **kwargs,
    )


# --- stub ---------------------------------------------------------------------


def test_stub_renders_template_header_blocks_and_closing():
    req = CompletionRequest(
        system_prompt="sys",
        user_prompt="Which devices are deployed in the Corridor?\nsecond line",
        context_blocks=(
            ContextBlock("fact:device-count", "4 devices registered."),
            ContextBlock("device:SSBRM-01", "Machine 1, status AVAILABLE."),
        ),
        template_id=TemplateId.AVAILABILITY,
    )
    res = StubGateway().complete(req)
    assert res.text.splitlines() == [
        "[stub:availability] Which devices are deployed in the Corridor?",
        "- [fact:device-count] 4 devices registered.",
        "- [device:SSBRM-01] Machine 1, status AVAILABLE.",
        STUB_CLOSING_LINE,
    ]
    assert res.backend is Backend.STUB
    assert res.latency_ms == 0


def test_stub_freeform_header():
    req = CompletionRequest(system_prompt="s", user_prompt="hello")
    assert StubGateway().complete(req).text.startswith("[stub:freeform] hello")


def test_stub_is_deterministic():
    req = CompletionRequest(
        system_prompt="s",
        user_prompt="p",
        context_blocks=(ContextBlock("fact:x", "y"),),
    )
    stub = StubGateway()
    assert stub.complete(req) == stub.complete(req)


# --- request validation ---------------------------------------------------------


def test_completion_request_validation():
    with pytest.raises(InvalidRequest):
        CompletionRequest(system_prompt=" ", user_prompt="p")
    with pytest.raises(InvalidRequest):
        CompletionRequest(system_prompt="s", user_prompt="")
    with pytest.raises(InvalidRequest):
        CompletionRequest(system_prompt="s", user_prompt="p", max_tokens=0)
    with pytest.raises(InvalidRequest):
        CompletionRequest(system_prompt="s", user_prompt="p", temperature=1.5)
    with pytest.raises(InvalidRequest):
        ContextBlock("", "text")
    with pytest.raises(InvalidRequest):
        ContextBlock("fact:x", "  ")


# --- prompt templates -------------------------------------------------------------


def test_render_prompt_availability_allows_empty_zone():
    req = render_prompt(TemplateId.AVAILABILITY, {"zone": "the Lobby", "devices": []})
    assert req.template_id is TemplateId.AVAILABILITY
    assert req.user_prompt == (
        "Which devices are deployed in the Lobby and are they available right now?"
    )
    assert [b.label for b in req.context_blocks] == ["fact:device-count"]
    assert req.temperature == 0.0


def test_render_prompt_missing_slot_names_the_slot():
    with pytest.raises(MissingSlot) as err:
        render_prompt(TemplateId.AVAILABILITY, {"devices": []})
    assert "zone" in str(err.value)


def test_render_prompt_fault_status_empty_scope_gets_fact_block():
    req = render_prompt(
        TemplateId.FAULT_STATUS, {"scope": "the Corridor", "incidents": []}
    )
    assert [b.label for b in req.context_blocks] == ["fact:no-open-incidents"]


def test_render_prompt_report_gets_bigger_budget():
    req = render_prompt(
        TemplateId.COMPREHENSIVE_REPORT,
        {"as_of": "2025-01-17T09:33:40Z", "zones": [], "prevention": []},
    )
    assert req.max_tokens == 1024


def test_format_event_line_golden(ids):
    event = DeviceEvent(
        event_id=ids.new_id(T0),
        device_id="SSBRM-01",
        ts=T0,
        source=EventSource.LOG,
        severity=Severity.WARN,
        code="E102",
        message="card reader slow to respond",
    )
    assert format_event_line(event) == (
        "2025-01-17T09:32:10Z [LOG] WARN E102: card reader slow to respond"
    )


# --- remote backend -----------------------------------------------------------------


def test_remote_complete_posts_chat_payload():
    captured = {}

    def handler(request):
        captured["url"] = str(request.url)
        captured["body"] = json.loads(request.content)
        captured["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=reply("fine"))

    gateway = remote(handler)
    req = CompletionRequest(
        system_prompt="sys",
        user_prompt="user",
        context_blocks=(ContextBlock("fact:x", "y"),),
        max_tokens=64,
        temperature=0.0,
    )
    res = gateway.complete(req)
    assert res.text == "fine"
    assert res.backend is Backend.REMOTE
    assert captured["url"] == "http://model.local/v1/chat/completions"
    assert captured["auth"] is None
    body = captured["body"]
    assert body["model"] == "test-model"
    assert body["max_tokens"] == 64
    assert [m["role"] for m in body["messages"]] == ["system", "user"]
    assert "Context:" in body["messages"][1]["content"]
    assert "[fact:x]" in body["messages"][1]["content"]
    gateway.close()


def test_remote_sends_bearer_token_when_configured():
    captured = {}

    def handler(request):
        captured["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json=reply())

    gateway = remote(handler, api_key="sekrit")
    gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    assert captured["auth"] == "Bearer sekrit"
    gateway.close()


def test_remote_redacts_manual_excerpts_by_default():
    captured = {}

    def handler(request):
        captured["content"] = json.loads(request.content)["messages"][1]["content"]
        return httpx.Response(200, json=reply())

    gateway = remote(handler)
    req = CompletionRequest(
        system_prompt="s",
        user_prompt="p",
        context_blocks=(
            ContextBlock("entry:ssbrm-manual-T01", "open the front panel"),
            ContextBlock("event:abc", "an event line"),
        ),
    )
    gateway.complete(req)
    assert "open the front panel" not in captured["content"]
    assert REDACTED_MANUAL_TEXT in captured["content"]
    assert "an event line" in captured["content"]  # only entry: blocks redact
    gateway.close()


def test_remote_manual_egress_opt_in():
    captured = {}

    def handler(request):
        captured["content"] = json.loads(request.content)["messages"][1]["content"]
        return httpx.Response(200, json=reply())

    gateway = remote(handler, allow_manual_egress=True)
    req = CompletionRequest(
        system_prompt="s",
        user_prompt="p",
        context_blocks=(ContextBlock("entry:x-T01", "open the front panel"),),
    )
    gateway.complete(req)
    assert "open the front panel" in captured["content"]
    gateway.close()


def test_remote_retries_once_on_transport_error():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        if calls["n"] == 1:
            raise httpx.ConnectError("down")
        return httpx.Response(200, json=reply("after retry"))

    gateway = remote(handler)
    res = gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    assert res.text == "after retry"
    assert calls["n"] == 2
    gateway.close()


def test_remote_gives_up_after_second_transport_error():
    calls = {"n": 0}

    def handler(request):
        calls["n"] += 1
        raise httpx.ConnectError("down")

    gateway = remote(handler)
    with pytest.raises(BackendUnavailable):
        gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    assert calls["n"] == 2
    gateway.close()


def test_remote_timeout_maps_to_gateway_timeout():
    def handler(request):
        raise httpx.ReadTimeout("slow")

    gateway = remote(handler)
    with pytest.raises(GatewayTimeout):
        gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    gateway.close()


def test_remote_http_error_maps_to_backend_unavailable():
    gateway = remote(lambda request: httpx.Response(503, text="busy"))
    with pytest.raises(BackendUnavailable):
        gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    gateway.close()


@pytest.mark.parametrize(
    "payload",
    [
        {"nope": True},
        {"choices": []},
        {"choices": [{"message": {}}]},
        {"choices": [{"message": {"content": "  "}}]},
    ],
)
def test_remote_malformed_reply_rejected(payload):
    gateway = remote(lambda request: httpx.Response(200, json=payload))
    with pytest.raises(MalformedBackendReply):
        gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    gateway.close()


def test_remote_non_json_reply_rejected():
    gateway = remote(lambda request: httpx.Response(200, text="<html>"))
    with pytest.raises(MalformedBackendReply):
        gateway.complete(CompletionRequest(system_prompt="s", user_prompt="p"))
    gateway.close()


def test_remote_caption_image_round_trip(tmp_path):
    def handler(request):
        body = json.loads(request.content)
        content = body["messages"][0]["content"]
        assert content[1]["image_url"]["url"].startswith("data:image/jpeg;base64,")
        return httpx.Response(
            200,
            json=reply(
                json.dumps(
                    {
                        "caption": "screen shows an error dialog",
                        "overlay_timestamp_text": "2025-01-17 09:33:40",
                        "anomaly": True,
                    }
                )
            ),
        )

    frame = tmp_path / "CAM-01-0001.jpg"
    frame.write_bytes(b"\xff\xd8fakejpeg")
    gateway = remote(handler)
    result = gateway.caption_image(frame)
    assert result.caption == "screen shows an error dialog"
    assert result.anomaly is True
    assert gateway.caption_image(b"\xff\xd8fakejpeg") == result
    gateway.close()


def test_remote_caption_non_json_reply_is_unparsable(tmp_path):
    gateway = remote(lambda request: httpx.Response(200, json=reply("prose")))
    with pytest.raises(UnparsableReply):
        gateway.caption_image(b"\xff\xd8fakejpeg")
    gateway.close()


def test_remote_caption_missing_file_rejected():
    gateway = remote(lambda request: httpx.Response(200, json=reply()))
    with pytest.raises(InvalidRequest):
        gateway.caption_image("/nonexistent/frame.jpg")
    gateway.close()


# --- sidecars ------------------------------------------------------------------------


def sidecar(tmp_path, data, name="CAM-01-0001.jpg.meta.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_load_sidecar_from_frame_or_direct_path(tmp_path):
    path = sidecar(
        tmp_path,
        {"caption": "idle", "ts": "2025-01-17 09:33:40", "anomaly": False},
    )
    direct = load_sidecar(path)
    via_frame = load_sidecar(tmp_path / "CAM-01-0001.jpg")
    assert direct == via_frame
    assert direct.caption == "idle"
    assert direct.overlay_timestamp_text == "2025-01-17 09:33:40"
    assert direct.anomaly is False


def test_load_sidecar_missing_raises(tmp_path):
    with pytest.raises(NoSidecar):
        load_sidecar(tmp_path / "CAM-01-0002.jpg")


def test_load_sidecar_bad_json(tmp_path):
    path = tmp_path / "CAM-01-0001.jpg.meta.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(UnparsableReply):
        load_sidecar(path)


def test_load_sidecar_missing_caption_key(tmp_path):
    path = sidecar(tmp_path, {"ts": "2025-01-17 09:33:40", "anomaly": True})
    with pytest.raises(UnparsableReply):
        load_sidecar(path)


def test_load_sidecar_bad_timestamp_propagates(tmp_path):
    path = sidecar(tmp_path, {"caption": "x", "ts": "yesterday", "anomaly": False})
    with pytest.raises(UnparsableTimestamp):
        load_sidecar(path)


# --- factory --------------------------------------------------------------------------


def test_make_gateway_variants():
    assert isinstance(make_gateway("stub"), StubGateway)
    assert isinstance(
        make_gateway("remote", base_url="http://model.local"), RemoteGateway
    )
    with pytest.raises(InvalidRequest):
        make_gateway("remote")
    with pytest.raises(InvalidRequest):
        make_gateway("quantum")
