"""Command line entry points: run the service, or preload scenario data.

    fsm serve [--config fsm.toml] [--host H] [--port P] [--data-dir DIR]
    fsm load --data-dir DIR SCENARIO_DIR [--seed N]

``fsm load`` ingests a scenario directory (logs.log, rows.json, frames/)
straight into the event store and writes the incident snapshot, so a service
started afterwards on the same data dir sees the scenario replayed.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import re
import sys
from pathlib import Path

from .config import load_config
from .errors import BadConfig, FsmError
from .events import DeviceEvent, EventIdFactory, EventStore
from .fusion import FusionConfig, correlate, write_snapshot
from .ingest import VisionObservation, ingest_vision, parse_log_line, parse_status_row
from .llm_gateway import load_sidecar
from .registry import load_manifest

# frame sidecars are named {camera}-{seq}.jpg.meta.json
_FRAME_CAMERA_RE = re.compile(r"^([A-Za-z]+-\d{2})-")


def _load_scenario(data_dir: Path, scenario_dir: Path, seed: int | None) -> dict:
    manifest = data_dir / "registry.json"
    if not manifest.is_file():
        raise BadConfig(f"missing registry manifest: {manifest}")
    registry = load_manifest(manifest)
    store = EventStore(data_dir / "events")
    ids = EventIdFactory(seed=seed)

    events: list[DeviceEvent] = []
    rejected: list[str] = []

    log_path = scenario_dir / "logs.log"
    if log_path.is_file():
        for lineno, line in enumerate(log_path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                events.append(parse_log_line(line, registry, ids))
            except FsmError as exc:
                rejected.append(f"logs.log:{lineno}: {exc}")

    rows_path = scenario_dir / "rows.json"
    if rows_path.is_file():
        rows = json.loads(rows_path.read_text(encoding="utf-8"))
        for i, row in enumerate(rows):
            try:
                events.append(parse_status_row(row, registry, ids, index=i))
            except FsmError as exc:
                rejected.append(f"rows.json[{i}]: {exc}")

    frames_dir = scenario_dir / "frames"
    if frames_dir.is_dir():
        for sidecar in sorted(frames_dir.glob("*.meta.json")):
            match = _FRAME_CAMERA_RE.match(sidecar.name)
            if match is None:
                rejected.append(f"{sidecar.name}: cannot derive camera id from name")
                continue
            try:
                result = load_sidecar(sidecar)
                obs = VisionObservation(
                    camera_id=match.group(1).upper(),
                    captured_at_text=result.overlay_timestamp_text,
                    caption=result.caption,
                    anomaly=result.anomaly,
                )
                events.append(ingest_vision(obs, registry, ids))
            except FsmError as exc:
                rejected.append(f"{sidecar.name}: {exc}")

    # sort before appending so replay order never trips the fusion pass
    events.sort(key=lambda e: (e.ts, e.event_id))
    accepted = store.append(events)
    incidents = correlate(store.events_by_ts(), FusionConfig())
    write_snapshot(incidents, data_dir / "incidents" / "current.jsonl")
    return {
        "accepted": accepted,
        "rejected": rejected,
        "events_total": len(store),
        "incidents": len(incidents),
    }


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fsm", description="Facility failure management service."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--config", help="path to an fsm.toml config file")
    p_serve.add_argument("--host")
    p_serve.add_argument("--port", type=int)
    p_serve.add_argument("--data-dir")

    p_load = sub.add_parser("load", help="ingest a scenario directory")
    p_load.add_argument("scenario_dir", help="directory with logs.log/rows.json/frames")
    p_load.add_argument("--data-dir", required=True)
    p_load.add_argument(
        "--seed", type=int, default=None, help="event id seed (default: from config)"
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "serve":
            config = load_config(args.config)
            overrides = {
                name: value
                for name, value in (
                    ("host", args.host),
                    ("port", args.port),
                    ("data_dir", args.data_dir),
                )
                if value is not None
            }
            if overrides:
                config = dataclasses.replace(config, **overrides)
            from .service import serve

            serve(config)
            return 0
        seed = args.seed
        if seed is None:
            seed = load_config(env=os.environ).event_id_seed
        summary = _load_scenario(Path(args.data_dir), Path(args.scenario_dir), seed)
        print(
            f"accepted {summary['accepted']} events"
            f" ({summary['events_total']} total),"
            f" {summary['incidents']} incidents"
        )
        for line in summary["rejected"]:
            print(f"rejected {line}", file=sys.stderr)
        return 1 if summary["rejected"] else 0
    except FsmError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
