from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, strategies as st

from fsm.events import (
    DeviceEvent,
    EventIdFactory,
    EventSource,
    EventStore,
    Severity,
    format_ts,
)

UTC = timezone.utc
T0 = datetime(2025, 1, 17, 9, 32, 10, tzinfo=UTC)


def make_event(ids, offset=0, device="SSBRM-01", severity=Severity.WARN,
               code="E102", source=EventSource.LOG, message="card reader slow"):
    ts = T0 + timedelta(seconds=offset)
    return DeviceEvent(
        event_id=ids.new_id(ts),
        device_id=device,
        ts=ts,
        source=source,
        severity=severity,
        code=code,
        message=message,
    )


def test_format_ts_is_utc_second_resolution():
    assert format_ts(T0) == "2025-01-17T09:32:10Z"


def test_event_round_trips_through_json(ids):
    event = make_event(ids)
    again = DeviceEvent.from_json_dict(event.to_json_dict())
    assert again == event


def test_event_rejects_bad_code(ids):
    with pytest.raises(ValueError):
        DeviceEvent(
            event_id=ids.new_id(T0),
            device_id="SSBRM-01",
            ts=T0,
            source=EventSource.LOG,
            severity=Severity.WARN,
            code="e102",  # must be uppercase letter + 3 digits, or OK
            message="x",
        )


def test_id_factory_is_deterministic_given_seed():
    a = EventIdFactory(seed=42)
    b = EventIdFactory(seed=42)
    stamps = [T0 + timedelta(seconds=i) for i in range(5)]
    assert [a.new_id(t) for t in stamps] == [b.new_id(t) for t in stamps]


def test_id_factory_monotonic_on_repeated_timestamp():
    ids = EventIdFactory(seed=1)
    got = [ids.new_id(T0) for _ in range(100)]
    assert got == sorted(got)
    assert len(set(got)) == 100


def test_id_factory_monotonic_on_time_regression():
    ids = EventIdFactory(seed=1)
    first = ids.new_id(T0)
    second = ids.new_id(T0 - timedelta(hours=1))
    assert second > first


@given(st.lists(st.integers(min_value=0, max_value=10_000), min_size=1, max_size=50))
def test_id_factory_monotonic_under_arbitrary_timestamps(offsets):
    ids = EventIdFactory(seed=7)
    got = [ids.new_id(T0 + timedelta(seconds=o)) for o in offsets]
    assert got == sorted(got)
    assert len(set(got)) == len(got)


def test_store_append_get_and_order(tmp_path, ids):
    store = EventStore(tmp_path)
    events = [make_event(ids, offset=o) for o in (5, 0, 10)]
    assert store.append(events) == 3
    assert len(store) == 3
    assert store.get(events[0].event_id) == events[0]
    assert [e.ts for e in store.events_by_ts()] == sorted(e.ts for e in events)
    assert store.latest_ts() == T0 + timedelta(seconds=10)


def test_store_append_is_idempotent(tmp_path, ids):
    store = EventStore(tmp_path)
    events = [make_event(ids, offset=o) for o in (0, 1)]
    assert store.append(events) == 2
    assert store.append(events) == 0
    assert len(store) == 2


def test_store_survives_reload(tmp_path, ids):
    events = [make_event(ids, offset=o) for o in (0, 90_000)]  # two day files
    EventStore(tmp_path).append(events)
    reloaded = EventStore(tmp_path)
    assert len(reloaded) == 2
    assert reloaded.events_by_ts() == sorted(events, key=lambda e: (e.ts, e.event_id))


def test_store_empty_latest_ts_is_none(tmp_path):
    assert EventStore(tmp_path).latest_ts() is None
