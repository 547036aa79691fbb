"""Service configuration: `fsm.toml` file plus FSM_* environment overrides.

Environment always wins over the file; both are optional and every setting
has a default suitable for a local demo on fixture data.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import BadConfig

DEFAULT_PORT = 8040
DEFAULT_HOST = "127.0.0.1"  # localhost only unless the operator opts out
DEFAULT_DATA_DIR = "data"

_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off", ""}


@dataclass(frozen=True)
class ServiceConfig:
    host: str = DEFAULT_HOST
    port: int = DEFAULT_PORT
    data_dir: str = DEFAULT_DATA_DIR
    correlation_window_secs: int = 120
    merge_gap_secs: int = 300
    resolve_on_ok: bool = True
    refusion_interval_secs: int = 0  # 0 disables the periodic re-fusion pass
    llm_backend: str = "stub"
    llm_base_url: str = ""
    llm_model: str = ""
    llm_api_key: str = ""
    allow_manual_egress: bool = False
    event_id_seed: int | None = None

    def __post_init__(self):
        if not 0 < self.port < 65536:
            raise BadConfig(f"port out of range: {self.port}")
        if self.correlation_window_secs <= 0 or self.merge_gap_secs <= 0:
            raise BadConfig("fusion windows must be positive")
        if self.refusion_interval_secs < 0:
            raise BadConfig("refusion interval must be >= 0")
        if self.llm_backend not in ("stub", "remote"):
            raise BadConfig(f"llm_backend must be stub or remote: {self.llm_backend!r}")


def _parse_bool(raw: str, name: str) -> bool:
    value = raw.strip().lower()
    if value in _TRUTHY:
        return True
    if value in _FALSY:
        return False
    raise BadConfig(f"{name} must be a boolean, got {raw!r}")


def _parse_int(raw: str, name: str) -> int:
    try:
        return int(raw.strip())
    except ValueError:
        raise BadConfig(f"{name} must be an integer, got {raw!r}") from None


# env var suffix -> (config field, parser)
_ENV_FIELDS = {
    "FSM_HOST": ("host", str),
    "FSM_PORT": ("port", _parse_int),
    "FSM_DATA_DIR": ("data_dir", str),
    "FSM_CORRELATION_WINDOW_SECS": ("correlation_window_secs", _parse_int),
    "FSM_MERGE_GAP_SECS": ("merge_gap_secs", _parse_int),
    "FSM_RESOLVE_ON_OK": ("resolve_on_ok", _parse_bool),
    "FSM_REFUSION_INTERVAL_SECS": ("refusion_interval_secs", _parse_int),
    "FSM_LLM_BACKEND": ("llm_backend", str),
    "FSM_LLM_BASE_URL": ("llm_base_url", str),
    "FSM_LLM_MODEL": ("llm_model", str),
    "FSM_LLM_API_KEY": ("llm_api_key", str),
    "FSM_ALLOW_MANUAL_EGRESS": ("allow_manual_egress", _parse_bool),
    "FSM_EVENT_ID_SEED": ("event_id_seed", _parse_int),
}


def load_config(
    path: str | Path | None = None, env: Mapping[str, str] | None = None
) -> ServiceConfig:
    """Resolve configuration: defaults < fsm.toml < environment."""
    env = os.environ if env is None else env
    values: dict = {}

    toml_path = Path(path) if path is not None else Path("fsm.toml")
    if toml_path.is_file():
        try:
            data = tomllib.loads(toml_path.read_text(encoding="utf-8"))
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise BadConfig(f"cannot read {toml_path}: {exc}") from None
        known = {f.name: f for f in fields(ServiceConfig)}
        for key, value in data.items():
            if key not in known:
                raise BadConfig(f"unknown config key {key!r} in {toml_path}")
            values[key] = value
    elif path is not None:
        raise BadConfig(f"config file not found: {toml_path}")

    for var, (field_name, parse) in _ENV_FIELDS.items():
        raw = env.get(var)
        if raw is None:
            continue
        values[field_name] = raw if parse is str else parse(raw, var)

    try:
        return ServiceConfig(**values)
    except TypeError as exc:
        raise BadConfig(str(exc)) from None
