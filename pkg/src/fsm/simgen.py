"""Fixture and scenario generator for the library device fleet.

Everything here is deterministic: the fleet manifest and manuals are static,
scenario emissions are scripted, and the log corpus is driven entirely by
the caller's seed. Each scenario carries an authored ``expected`` section
(incident counts, member counts, primary codes) written alongside the steps,
so tests can compare fusion output against ground truth that was produced by
hand, not by the code under test.

CLI:
    simgen fleet --out DIR              manifest + fixture manuals
    simgen scenario --id S1 --seed N --out DIR
    simgen queries --out FILE           labeled routing utterances
"""
from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path

from .events import format_ts
from .knowledge import parse_manual, save_manual
from .registry import (
    DeviceDescriptor,
    DeviceKind,
    Registry,
    Zone,
    registry_to_manifest,
)
from .taxonomy import FAULT_TAXONOMY

OVERLAY_FMT = "%Y-%m-%d %H:%M:%S"  # camera OSD style, assumed UTC


# --- fixture fleet ------------------------------------------------------------

_FIXTURE_ZONES = (
    Zone("corridor", "the Corridor"),
    Zone("reading_room", "the Reading Room"),
    Zone("lobby", "the Lobby"),
)

_FIXTURE_DEVICES = (
    ("SSBRM-01", DeviceKind.SELF_SERVICE_MACHINE, "corridor",
     "Self-service Borrowing and Returning Machine 1", "ssbrm-manual", ()),
    ("SSBRM-02", DeviceKind.SELF_SERVICE_MACHINE, "corridor",
     "Self-service Borrowing and Returning Machine 2", "ssbrm-manual", ()),
    ("SSBRM-03", DeviceKind.SELF_SERVICE_MACHINE, "lobby",
     "Self-service Borrowing and Returning Machine 3", "ssbrm-manual", ()),
    ("SB-01", DeviceKind.SILENT_BOOTH, "reading_room",
     "Silent Booth 1", "booth-manual", ()),
    ("SHELF-01", DeviceKind.SMART_BOOKSHELF, "reading_room",
     "Smart Bookshelf 1", "shelf-manual", ()),
    ("SHELF-02", DeviceKind.SMART_BOOKSHELF, "lobby",
     "Smart Bookshelf 2", "shelf-manual", ()),
    ("CAM-01", DeviceKind.SURVEILLANCE_CAMERA, "corridor",
     "Surveillance Camera 1", "camera-manual", ("SSBRM-01",)),
    ("CAM-02", DeviceKind.SURVEILLANCE_CAMERA, "corridor",
     "Surveillance Camera 2", "camera-manual", ("SSBRM-01", "SSBRM-02")),
    ("CAM-03", DeviceKind.SURVEILLANCE_CAMERA, "reading_room",
     "Surveillance Camera 3", "camera-manual", ("SB-01", "SHELF-01")),
    ("CAM-04", DeviceKind.SURVEILLANCE_CAMERA, "lobby",
     "Surveillance Camera 4", "camera-manual", ("SSBRM-03", "SHELF-02")),
)


def build_fixture_registry() -> Registry:
    registry = Registry()
    for zone in _FIXTURE_ZONES:
        registry.add_zone(zone)
    for device_id, kind, zone_id, label, manual_id, observes in _FIXTURE_DEVICES:
        registry.register_device(
            DeviceDescriptor(
                device_id=device_id,
                kind=kind,
                zone_id=zone_id,
                label=label,
                manual_id=manual_id,
                observes=observes,
            )
        )
    return registry


def generate_fixture_fleet() -> dict:
    """The static 3-zone, 10-device library manifest."""
    return registry_to_manifest(build_fixture_registry())


# --- fixture manuals ----------------------------------------------------------

FIXTURE_MANUALS: dict[str, tuple[DeviceKind, str]] = {
    "ssbrm-manual": (DeviceKind.SELF_SERVICE_MACHINE, """\
SAFETY PRECAUTIONS

- Stable power: Connect the machine to a grounded outlet and avoid shared extension cords.
- Card slot hygiene: Keep the card slot free of dust and never force bent library cards into the reader.
- Receipt paper handling: Store receipt paper rolls in a dry place and load them with the feed edge forward.
- Ventilation clearance: Leave ten centimeters of clearance behind the machine cabinet so the vents stay unobstructed.
- Scheduled inspection: Have a technician inspect the rollers and the RFID antenna of the machine every six months.

TROUBLESHOOTING

Symptom: Card reader jams and reports error E101 while a borrow is in progress.
Remedy: Power the machine off, open the front panel, clear the card transport path, and reject cards with bent corners.

Symptom: Card reader times out with error E102 and the screen shows an error dialog.
Remedy: Clean the reader contacts with a dry cloth and restart the reader module from the service menu.

Symptom: Receipt printer reports error E201 and stops printing borrow receipts.
Remedy: Load a new receipt paper roll and check that the feed edge is straight before closing the cover.

Symptom: RFID antenna reports error E301 and book tags are not recognized.
Remedy: Re-seat the antenna cable and run the antenna calibration routine from the service menu.
"""),
    "booth-manual": (DeviceKind.SILENT_BOOTH, """\
SAFETY PRECAUTIONS

- Door clearance: Keep the silent booth door track free of obstacles so the door can close fully.
- Ventilation filter: Replace the booth ventilation filter every three months to keep airflow steady.
- Occupancy limit: Allow only one person in the booth; overloading strains the door mechanism.

TROUBLESHOOTING

Symptom: Door sensor reports error B101 and the booth door will not latch.
Remedy: Wipe the door sensor window, realign the strike plate, and test the latch five times.

Symptom: Ventilation unit reports error B201 and airflow inside the booth stops.
Remedy: Power-cycle the ventilation unit and replace the filter if the fan restarts but airflow stays weak.
"""),
    "shelf-manual": (DeviceKind.SMART_BOOKSHELF, """\
SAFETY PRECAUTIONS

- Load limit: Keep each smart bookshelf level under its rated load; distribute heavy volumes across levels.
- Tag placement: Attach RFID tags flat on the spine so the bookshelf antenna reads them reliably.
- Cable routing: Route the bookshelf power cable along the back rail, away from the shelf edges.

TROUBLESHOOTING

Symptom: Shelf scanner reports error S101 because a tag scan mismatch was detected on the bookshelf.
Remedy: Rescan the shelf level, reattach loose RFID tags, and clear the mismatch from the shelf console.

Symptom: Load sensor reports error S201 and the bookshelf shows drifting weight readings.
Remedy: Unload the affected shelf level, run the load sensor zero calibration, and reload the books evenly.
"""),
    "camera-manual": (DeviceKind.SURVEILLANCE_CAMERA, """\
SAFETY PRECAUTIONS

- Lens care: Clean the surveillance camera lens with a microfiber cloth only; solvents damage the coating.
- Mount check: Verify the camera mount screws are tight after any maintenance on nearby fixtures.
- Privacy zones: Keep the camera aimed at equipment areas, not at reading desks.

TROUBLESHOOTING

Symptom: The camera flags a visual anomaly V001 on an observed device screen or surface.
Remedy: Review the flagged frame, confirm the anomaly on site, and dispatch a technician to the observed device.
"""),
}


def write_fixture_fleet(out_dir: str | Path) -> list[Path]:
    """Write registry.json plus parsed fixture manuals under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "registry.json"
    _write_json(manifest_path, generate_fixture_fleet())
    written = [manifest_path]
    for manual_id, (kind, text) in FIXTURE_MANUALS.items():
        entries = parse_manual(text, manual_id, kind)
        save_manual(out, manual_id, text, entries)
        written.append(out / "manuals" / f"{manual_id}.txt")
        written.append(out / "manuals" / f"{manual_id}.entries.jsonl")
    return written


# --- seeded log corpus ----------------------------------------------------------

_OK_MESSAGES = (
    "self-check passed",
    "heartbeat nominal",
    "routine status poll",
)

_FAULT_SUFFIXES = ("detected", "persists", "reported by self-test")


def generate_log_corpus(registry: Registry, count: int, seed: int) -> list[str]:
    """``count`` well-formed log lines over the registered service devices."""
    rng = random.Random(seed)
    devices = [
        d
        for d in registry.list_devices()
        if d.kind is not DeviceKind.SURVEILLANCE_CAMERA
    ]
    codes_by_kind: dict[DeviceKind, list] = {}
    for fault in FAULT_TAXONOMY.values():
        codes_by_kind.setdefault(fault.device_kind, []).append(fault)
    ts = datetime(2025, 1, 20, 6, 0, 0, tzinfo=timezone.utc)
    lines = []
    for _ in range(count):
        ts += timedelta(seconds=rng.randrange(1, 30))
        device = rng.choice(devices)
        if rng.random() < 0.6 or device.kind not in codes_by_kind:
            severity, code, message = "INFO", "OK", rng.choice(_OK_MESSAGES)
        else:
            fault = rng.choice(codes_by_kind[device.kind])
            severity = fault.default_severity if rng.random() < 0.7 else "WARN"
            code = fault.code
            message = f"{fault.summary} {rng.choice(_FAULT_SUFFIXES)}"
        lines.append(
            f"{format_ts(ts)} | {device.device_id} | {severity} | {code} | {message}"
        )
    return lines


MUTATION_MODES = ("drop_field", "bad_timestamp", "bad_severity", "bad_code")

# first offending column a parser must report for each mutation mode
MUTATION_COLUMN = {
    "drop_field": 1,
    "bad_timestamp": 1,
    "bad_severity": 3,
    "bad_code": 4,
}


def mutate_line(line: str, mode: str, rng: random.Random) -> str:
    """Break one aspect of a well-formed line; parseability must fail at
    MUTATION_COLUMN[mode]."""
    parts = line.split(" | ")
    if mode == "drop_field":
        del parts[rng.randrange(len(parts))]
    elif mode == "bad_timestamp":
        parts[0] = rng.choice(
            ("not-a-timestamp", "2025-02-30T10:00:00Z", "12:99", "yesterday")
        )
    elif mode == "bad_severity":
        parts[2] = rng.choice(("SEVERE", "URGENT", "LOUD"))
    elif mode == "bad_code":
        parts[3] = rng.choice(("9XYZ", "E1", "E12345", "ee102"))
    else:
        raise ValueError(f"unknown mutation mode {mode!r}")
    return " | ".join(parts)


# --- scripted scenarios ---------------------------------------------------------

@dataclass(frozen=True)
class ScenarioStep:
    offset_secs: int
    emission: str  # "log" | "row" | "frame"
    device_id: str  # emitter: the device itself, or the camera for frames
    severity: str = ""
    code: str = ""
    message: str = ""
    caption: str = ""
    anomaly: bool = False


@dataclass(frozen=True)
class ScenarioScript:
    scenario_id: str
    seed: int
    base_ts: datetime
    steps: tuple[ScenarioStep, ...]
    expected: dict

    def __post_init__(self):
        offsets = [s.offset_secs for s in self.steps]
        if offsets != sorted(offsets):
            raise ValueError(f"{self.scenario_id}: step offsets must be nondecreasing")


_S1_BASE = datetime(2025, 1, 17, 9, 32, 10, tzinfo=timezone.utc)


def _scenario_s1(seed: int) -> ScenarioScript:
    # the card-reader degradation story: two log events, one camera sighting,
    # recovery an hour later
    steps = (
        ScenarioStep(0, "log", "SSBRM-01", "WARN", "E102",
                     "card reader slow to respond"),
        ScenarioStep(60, "log", "SSBRM-01", "ERROR", "E102",
                     "card reader timeout, screen shows error dialog"),
        ScenarioStep(90, "frame", "CAM-01",
                     caption="screen of the self-service machine shows an error dialog",
                     anomaly=True),
        ScenarioStep(3600, "log", "SSBRM-01", "INFO", "OK",
                      "self-check passed after restart"),
    )
    expected = {
        "incidents": [
            {
                "device_id": "SSBRM-01",
                "member_count": 3,
                "primary_code": "E102",
                "max_severity": "ERROR",
                "status": "RESOLVED",
                "sources": ["LOG", "VISION"],
            }
        ]
    }
    return ScenarioScript("S1", seed, _S1_BASE, steps, expected)


def _scenario_s1_open(seed: int) -> ScenarioScript:
    # S1 without the recovery: the incident stays open
    steps = _scenario_s1(seed).steps[:3]
    expected = {
        "incidents": [
            {
                "device_id": "SSBRM-01",
                "member_count": 3,
                "primary_code": "E102",
                "max_severity": "ERROR",
                "status": "OPEN",
                "sources": ["LOG", "VISION"],
            }
        ]
    }
    return ScenarioScript("S1_OPEN", seed, _S1_BASE, steps, expected)


def _scenario_s1_split(seed: int) -> ScenarioScript:
    # the camera sighting arrives too late to correlate: it must open its
    # own incident instead of joining the log incident
    steps = (
        ScenarioStep(0, "log", "SSBRM-01", "WARN", "E102",
                     "card reader slow to respond"),
        ScenarioStep(60, "log", "SSBRM-01", "ERROR", "E102",
                     "card reader timeout, screen shows error dialog"),
        ScenarioStep(420, "frame", "CAM-01",
                     caption="screen of the self-service machine shows an error dialog",
                     anomaly=True),
        ScenarioStep(3600, "log", "SSBRM-01", "INFO", "OK",
                      "self-check passed after restart"),
    )
    expected = {
        "incidents": [
            {
                "device_id": "SSBRM-01",
                "member_count": 2,
                "primary_code": "E102",
                "max_severity": "ERROR",
                "status": "RESOLVED",
                "sources": ["LOG"],
            },
            {
                "device_id": "SSBRM-01",
                "member_count": 1,
                "primary_code": "V001",
                "max_severity": "ERROR",
                "status": "RESOLVED",
                "sources": ["VISION"],
            },
        ]
    }
    return ScenarioScript("S1_SPLIT", seed, _S1_BASE, steps, expected)


def _scenario_s2(seed: int) -> ScenarioScript:
    # two independent faults two hours apart, reported through the status table
    base = datetime(2025, 1, 18, 8, 0, 0, tzinfo=timezone.utc)
    steps = (
        ScenarioStep(0, "row", "SSBRM-01", code="E101"),
        ScenarioStep(900, "row", "SSBRM-01", code="OK"),
        ScenarioStep(7200, "row", "SSBRM-01", code="E201"),
        ScenarioStep(7260, "row", "SSBRM-01", code="E201"),
    )
    expected = {
        "incidents": [
            {
                "device_id": "SSBRM-01",
                "member_count": 1,
                "primary_code": "E101",
                "max_severity": "ERROR",
                "status": "RESOLVED",
                "sources": ["TABLE"],
            },
            {
                "device_id": "SSBRM-01",
                "member_count": 2,
                "primary_code": "E201",
                "max_severity": "WARN",
                "status": "OPEN",
                "sources": ["TABLE"],
            },
        ]
    }
    return ScenarioScript("S2", seed, base, steps, expected)


def _scenario_empty(seed: int) -> ScenarioScript:
    return ScenarioScript("EMPTY", seed, _S1_BASE, (), {"incidents": []})


SCENARIOS = {
    "S1": _scenario_s1,
    "S1_OPEN": _scenario_s1_open,
    "S1_SPLIT": _scenario_s1_split,
    "S2": _scenario_s2,
    "EMPTY": _scenario_empty,
}


def build_scenario(scenario_id: str, seed: int) -> ScenarioScript:
    try:
        return SCENARIOS[scenario_id](seed)
    except KeyError:
        raise ValueError(
            f"unknown scenario {scenario_id!r}; choose from {sorted(SCENARIOS)}"
        ) from None


def run_scenario(script: ScenarioScript, out_dir: str | Path) -> list[Path]:
    """Emit the scenario's files; same script + seed give identical bytes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    log_lines = []
    rows = []
    frame_no = 0
    for step in script.steps:
        ts = script.base_ts + timedelta(seconds=step.offset_secs)
        if step.emission == "log":
            log_lines.append(
                f"{format_ts(ts)} | {step.device_id} | {step.severity}"
                f" | {step.code} | {step.message}"
            )
        elif step.emission == "row":
            rows.append(
                {
                    "device_id": step.device_id,
                    "ts": format_ts(ts),
                    "status": step.code,
                }
            )
        elif step.emission == "frame":
            frame_no += 1
            frames_dir = out / "frames"
            frames_dir.mkdir(exist_ok=True)
            sidecar = frames_dir / f"{step.device_id}-{frame_no:04d}.jpg.meta.json"
            _write_json(
                sidecar,
                {
                    "caption": step.caption,
                    "ts": ts.strftime(OVERLAY_FMT),
                    "anomaly": step.anomaly,
                },
            )
            written.append(sidecar)
        else:
            raise ValueError(f"unknown emission {step.emission!r}")

    if log_lines:
        log_path = out / "logs.log"
        log_path.write_text("\n".join(log_lines) + "\n", encoding="utf-8")
        written.append(log_path)
    if rows:
        rows_path = out / "rows.json"
        _write_json(rows_path, rows)
        written.append(rows_path)

    expected_path = out / "expected.json"
    _write_json(
        expected_path,
        {
            "scenario_id": script.scenario_id,
            "seed": script.seed,
            "base_ts": format_ts(script.base_ts),
            "incidents": script.expected["incidents"],
        },
    )
    written.append(expected_path)
    return written


# --- labeled query set ----------------------------------------------------------

def _q(utterance, path, zone=None, device_kind=None, device_id=None):
    return {
        "utterance": utterance,
        "path": path,
        "zone": zone,
        "device_kind": device_kind,
        "device_id": device_id,
    }


_QUERY_SET = (
    # path 1: availability and deployment statistics
    _q("Which devices are deployed in the corridor?", "PATH1_AVAILABILITY",
       zone="corridor"),
    _q("What devices are available in the reading room?", "PATH1_AVAILABILITY",
       zone="reading_room"),
    _q("Show me device statistics for the lobby.", "PATH1_AVAILABILITY",
       zone="lobby"),
    _q("Is the silent booth in the reading room available?", "PATH1_AVAILABILITY",
       zone="reading_room", device_kind="SILENT_BOOTH"),
    _q("Which devices are deployed right now?", "PATH1_AVAILABILITY"),
    _q("Is SSBRM-02 available?", "PATH1_AVAILABILITY", device_id="SSBRM-02"),
    _q("What devices are deployed in the lobby?", "PATH1_AVAILABILITY",
       zone="lobby"),
    _q("Give me the deployment statistics for the reading room.",
       "PATH1_AVAILABILITY", zone="reading_room"),
    _q("Are the smart bookshelves available?", "PATH1_AVAILABILITY",
       device_kind="SMART_BOOKSHELF"),
    _q("Which devices are available in the corridor?", "PATH1_AVAILABILITY",
       zone="corridor"),
    # path 2: current faults and anomalies
    _q("Are there any faults in the corridor?", "PATH2_FAULT_STATUS",
       zone="corridor"),
    _q("Any issues with the self-service machine in the corridor?",
       "PATH2_FAULT_STATUS", zone="corridor",
       device_kind="SELF_SERVICE_MACHINE"),
    _q("List current anomalies in the reading room.", "PATH2_FAULT_STATUS",
       zone="reading_room"),
    _q("Is anything broken in the lobby?", "PATH2_FAULT_STATUS", zone="lobby"),
    _q("Show faults for SSBRM-01.", "PATH2_FAULT_STATUS", device_id="SSBRM-01"),
    _q("Are there any malfunctions right now?", "PATH2_FAULT_STATUS"),
    _q("Any errors from the smart bookshelf in the lobby?", "PATH2_FAULT_STATUS",
       zone="lobby", device_kind="SMART_BOOKSHELF"),
    _q("Is the silent booth having any issues?", "PATH2_FAULT_STATUS",
       device_kind="SILENT_BOOTH"),
    _q("Current fault status for the corridor, please.", "PATH2_FAULT_STATUS",
       zone="corridor"),
    _q("Did CAM-01 flag any anomalies?", "PATH2_FAULT_STATUS",
       device_id="CAM-01"),
    # path 3: cause of malfunctions
    _q("Why is the Silent Booth not functioning properly?", "PATH3_CAUSE",
       device_kind="SILENT_BOOTH"),
    _q("Why is SSBRM-01 not working?", "PATH3_CAUSE", device_id="SSBRM-01"),
    _q("What is the cause of the self-service machine fault in the corridor?",
       "PATH3_CAUSE", zone="corridor", device_kind="SELF_SERVICE_MACHINE"),
    _q("What is the reason for the smart bookshelf malfunction in the lobby?",
       "PATH3_CAUSE", zone="lobby", device_kind="SMART_BOOKSHELF"),
    _q("Why did the self-service machine in the corridor stop working?",
       "PATH3_CAUSE", zone="corridor", device_kind="SELF_SERVICE_MACHINE"),
    _q("Explain the cause of the SSBRM-02 failure.", "PATH3_CAUSE",
       device_id="SSBRM-02"),
    _q("Why is the camera in the reading room misbehaving?", "PATH3_CAUSE",
       zone="reading_room", device_kind="SURVEILLANCE_CAMERA"),
    _q("What caused the silent booth to go offline?", "PATH3_CAUSE",
       device_kind="SILENT_BOOTH"),
    _q("Diagnose the reason behind the lobby bookshelf problem.", "PATH3_CAUSE",
       zone="lobby", device_kind="SMART_BOOKSHELF"),
    _q("Why is SHELF-01 not functioning properly?", "PATH3_CAUSE",
       device_id="SHELF-01"),
    # path 4: comprehensive reports
    _q("Give me a comprehensive report for the whole facility.", "PATH4_REPORT"),
    _q("Run a comprehensive risk assessment and cause analysis.", "PATH4_REPORT"),
    _q("I need an overall status report.", "PATH4_REPORT"),
    _q("Generate the daily fault report.", "PATH4_REPORT"),
    _q("Produce a risk assessment for all zones.", "PATH4_REPORT"),
    _q("Comprehensive overview of all devices, please.", "PATH4_REPORT"),
    _q("Report on the corridor, including causes.", "PATH4_REPORT",
       zone="corridor"),
    _q("What is the overall health of the facility?", "PATH4_REPORT"),
    _q("Prepare a comprehensive failure report for the lobby.", "PATH4_REPORT",
       zone="lobby"),
    _q("Summarize overall risks across the library.", "PATH4_REPORT"),
)


def generate_query_set() -> dict:
    """40 labeled utterances, 10 per path."""
    return {"queries": list(_QUERY_SET)}


# --- io helpers -----------------------------------------------------------------

def _write_json(path: Path, data) -> None:
    path.write_text(
        json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


# --- CLI -------------------------------------------------------------------------

def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simgen",
        description="Generate the library fixture fleet, scenarios, and queries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fleet = sub.add_parser("fleet", help="write registry.json and fixture manuals")
    p_fleet.add_argument("--out", required=True, help="output directory")

    p_scen = sub.add_parser("scenario", help="emit one scripted fault scenario")
    p_scen.add_argument("--id", required=True, choices=sorted(SCENARIOS))
    p_scen.add_argument("--seed", type=int, default=42)
    p_scen.add_argument("--out", required=True, help="output directory")

    p_q = sub.add_parser("queries", help="write the labeled query set")
    p_q.add_argument("--out", required=True, help="output file")

    args = parser.parse_args(argv)
    if args.command == "fleet":
        written = write_fixture_fleet(args.out)
    elif args.command == "scenario":
        written = run_scenario(build_scenario(args.id, args.seed), args.out)
    else:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_json(out, generate_query_set())
        written = [out]
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
