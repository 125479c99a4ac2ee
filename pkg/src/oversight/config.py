"""Service configuration: one JSON file wiring schema, model, store, and
monitor knobs together.

Relative paths are resolved against the config file's directory so a config
can travel with its fixtures. The reviewer token never lives in the file;
it comes from the OVERSIGHT_TOKEN environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from typing import Optional

from .engine import SearchConfig
from .errors import ConfigError
from .models import Label
from .monitor import HOLD, TIMEOUT_DEFAULT, MonitorConfig

TOKEN_ENV = "OVERSIGHT_TOKEN"
CONFIG_ENV = "OVERSIGHT_CONFIG"

DEFAULT_PORT = 8300


@dataclass(frozen=True)
class ServiceConfig:
    schema_path: str
    model_path: str
    audit_path: str
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    monitor: MonitorConfig = field(default_factory=MonitorConfig)
    auth_token: Optional[str] = None
    max_request_bytes: int = 1_000_000
    max_concurrent_decisions: int = 8
    static_ui_path: Optional[str] = None

    def __post_init__(self):
        if not (1 <= self.port <= 65535):
            raise ConfigError(f"port {self.port} outside 1..65535")
        if self.max_request_bytes < 1024:
            raise ConfigError("request size limit below 1024 bytes is unusable")
        if self.max_concurrent_decisions < 1:
            raise ConfigError("need at least one decision worker")


def load_service_config(path: str, env: Optional[dict] = None) -> ServiceConfig:
    """Read and validate a service config file.

    Paths are resolved relative to the file. Referenced schema/model files
    must exist and the audit log's directory must be writable; violations
    fail here, before any socket opens.
    """
    env = os.environ if env is None else env
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r} is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(key, required=True):
        value = raw.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing {key!r}")
            return None
        if not isinstance(value, str) or not value:
            raise ConfigError(f"config {key!r} must be a non-empty path string")
        return value if os.path.isabs(value) else os.path.join(base, value)

    schema_path = resolve("schema")
    model_path = resolve("model")
    audit_path = resolve("audit_log")
    static_ui_path = resolve("static_ui", required=False)
    for name, p in (("schema", schema_path), ("model", model_path)):
        if not os.path.isfile(p):
            raise ConfigError(f"config {name!r} path {p!r} does not exist")
    audit_dir = os.path.dirname(audit_path) or "."
    try:
        os.makedirs(audit_dir, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create audit log directory {audit_dir!r}: {e}") from e
    if not os.access(audit_dir, os.W_OK):
        raise ConfigError(f"audit log directory {audit_dir!r} is not writable")
    if static_ui_path is not None and not os.path.isdir(static_ui_path):
        raise ConfigError(f"static UI path {static_ui_path!r} is not a directory")

    monitor = _parse_monitor(raw.get("monitor", {}))

    listen = raw.get("listen", {})
    if not isinstance(listen, dict):
        raise ConfigError("config 'listen' must be an object")

    token = env.get(TOKEN_ENV) or raw.get("auth_token")

    try:
        return ServiceConfig(
            schema_path=schema_path,
            model_path=model_path,
            audit_path=audit_path,
            host=listen.get("host", "127.0.0.1"),
            port=int(listen.get("port", DEFAULT_PORT)),
            monitor=monitor,
            auth_token=token,
            max_request_bytes=int(raw.get("max_request_bytes", 1_000_000)),
            max_concurrent_decisions=int(raw.get("max_concurrent_decisions", 8)),
            static_ui_path=static_ui_path,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid config value: {e}") from e


def _parse_monitor(raw: dict) -> MonitorConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config 'monitor' must be an object")
    search_raw = raw.get("search", {})
    if not isinstance(search_raw, dict):
        raise ConfigError("config 'monitor.search' must be an object")
    try:
        search = SearchConfig(
            enumeration_cap=int(raw.get("enumeration_cap", 256)),
            lambda_dist=float(search_raw.get("lambda_dist", 1.0)),
            margin=float(search_raw.get("margin", 0.05)),
            grid_levels=int(search_raw.get("grid_levels", 64)),
            restarts=int(search_raw.get("restarts", 8)),
            seed=int(search_raw.get("seed", 0)),
            evaluation_budget=int(search_raw.get("evaluation_budget", 5000)),
        )
        policy = raw.get("pending_policy", HOLD)
        if policy not in (HOLD, TIMEOUT_DEFAULT):
            raise ConfigError(f"unknown pending policy {policy!r}")
        default_label = raw.get("default_label", "negative")
        return MonitorConfig(
            lam=float(raw.get("lambda", 0.0)),
            enumeration_cap=int(raw.get("enumeration_cap", 256)),
            search=search,
            pending_policy=policy,
            default_label=Label(default_label),
            timeout_seconds=float(raw.get("timeout_seconds", 0.0)),
            metrics_window=int(raw.get("metrics_window", 1000)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid monitor config: {e}") from e


def override(config: ServiceConfig, port=None, lam=None, audit_path=None) -> ServiceConfig:
    """CLI-flag overrides applied on top of a loaded config."""
    updated = config
    if port is not None:
        updated = replace(updated, port=port)
    if audit_path is not None:
        updated = replace(updated, audit_path=os.path.abspath(audit_path))
    if lam is not None:
        try:
            updated = replace(updated, monitor=replace(updated.monitor, lam=lam))
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return updated
