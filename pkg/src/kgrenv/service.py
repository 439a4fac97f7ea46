"""HTTP facade over the six graph tools.

One store per server instance.  Requests are validated against the bundled
JSON schemas before dispatch and every successful response is re-validated
before emission.  Errors travel as ``{"error": {"code", "message"}}`` with a
4xx status for caller faults and 5xx for server-side ones.  Apart from the
store the service is stateless: identical read-only requests produce
identical bodies.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Mapping, get_type_hints

import jsonschema

from .metrics import SpectralParams
from .rewards import RewardConfig
from .store import KnowledgeGraph, load_store, save_store
from .tools import (
    TOOL_NAMES,
    query_coverage_feedback,
    query_entity_disambiguation,
    query_extraction_density,
    query_iterative_feedback,
    query_kg_storage,
    query_quality_metrics,
    validate_payload,
)
from .update import UpdateParams

log = logging.getLogger("kgrenv.service")

ENV_STORE_PATH = "KGR_DB_PATH"
ENV_SEED = "KGR_SEED"

# Logical clock base for storage timestamps; writes tick it by one second so
# replaying the same request sequence yields the same stored records.
SERVICE_EPOCH = datetime(2026, 1, 1, tzinfo=timezone.utc)

_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
_TOOL_PATH = re.compile(r"/tools/([A-Za-z0-9_\-]+)")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` comments and blank lines allowed."""
    entries: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            key, sep, value = s.partition("=")
            key = key.strip()
            if not sep or not key:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            entries[key] = value.strip()
    return entries


def _coerce(raw: Any, typ: Any, key: str) -> Any:
    if typ is int:
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r} expects an integer, got {raw!r}")
    if typ is float:
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ValueError(f"config key {key!r} expects a number, got {raw!r}")
    if typ is str:
        return str(raw)
    raise ValueError(f"config key {key!r} is not overridable")


def _apply_dotted(obj: Any, parts: list[str], raw: Any, key: str) -> Any:
    head = parts[0]
    names = {f.name for f in dataclasses.fields(obj)}
    if head not in names:
        raise ValueError(f"unknown config key {key!r}")
    if len(parts) == 1:
        hints = get_type_hints(type(obj))
        return dataclasses.replace(obj, **{head: _coerce(raw, hints[head], key)})
    sub = getattr(obj, head)
    if not dataclasses.is_dataclass(sub):
        raise ValueError(f"unknown config key {key!r}")
    return dataclasses.replace(obj, **{head: _apply_dotted(sub, parts[1:], raw, key)})


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    store_path: str | None = None
    seed: int = 0
    log_level: str = "INFO"
    reward: RewardConfig = field(default_factory=RewardConfig)
    spectral: SpectralParams = field(default_factory=SpectralParams)
    update: UpdateParams = field(default_factory=UpdateParams)

    def __post_init__(self) -> None:
        if not 1 <= self.port <= 65535:
            raise ValueError("port must be in [1, 65535]")
        if self.log_level.upper() not in _LOG_LEVELS:
            raise ValueError(f"log_level must be one of {_LOG_LEVELS}")
        object.__setattr__(self, "log_level", self.log_level.upper())

    @classmethod
    def load(
        cls,
        config_path: str | Path | None = None,
        env: Mapping[str, str] | None = None,
        overrides: Mapping[str, Any] | None = None,
    ) -> "ServiceConfig":
        """Merge file, environment, and explicit overrides (later wins)."""
        import os

        env = os.environ if env is None else env
        entries: dict[str, Any] = {}
        if config_path is not None:
            entries.update(parse_config_file(config_path))
        if ENV_STORE_PATH in env:
            entries["store_path"] = env[ENV_STORE_PATH]
        if ENV_SEED in env:
            entries["seed"] = env[ENV_SEED]
        if overrides:
            entries.update({k: v for k, v in overrides.items() if v is not None})

        top = {
            "host": str,
            "port": int,
            "store_path": str,
            "seed": int,
            "log_level": str,
        }
        kwargs: dict[str, Any] = {}
        reward = RewardConfig()
        spectral = SpectralParams()
        update = UpdateParams()
        for key, raw in entries.items():
            if "." in key:
                group, rest = key.split(".", 1)
                parts = rest.split(".")
                if group == "reward":
                    reward = _apply_dotted(reward, parts, raw, key)
                elif group == "spectral":
                    spectral = _apply_dotted(spectral, parts, raw, key)
                elif group == "update":
                    update = _apply_dotted(update, parts, raw, key)
                else:
                    raise ValueError(f"unknown config key {key!r}")
            elif key in top:
                kwargs[key] = _coerce(raw, top[key], key)
            else:
                raise ValueError(f"unknown config key {key!r}")
        return cls(reward=reward, spectral=spectral, update=update, **kwargs)


@dataclass(frozen=True)
class ToolEnvelope:
    tool: str
    payload: Mapping[str, Any]
    request_id: str | None = None


class ToolError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ToolService:
    """Dispatches validated tool envelopes against a single shared store."""

    def __init__(self, config: ServiceConfig) -> None:
        self.config = config
        self._lock = threading.Lock()
        self._write_seq = 0
        if config.store_path is not None and Path(config.store_path).exists():
            self.store = load_store(config.store_path)
        else:
            self.store = KnowledgeGraph()

    def _tick(self) -> datetime:
        self._write_seq += 1
        return SERVICE_EPOCH + timedelta(seconds=self._write_seq)

    def _persist(self) -> None:
        if self.config.store_path is None:
            return
        try:
            save_store(self.store, self.config.store_path)
        except OSError as err:
            log.error("store write failed: %s", err)
            raise ToolError(503, "store_error", f"store write failed: {err}")

    def store_counts(self) -> tuple[int, int, int]:
        with self._lock:
            return (
                len(self.store.entities),
                len(self.store.relations),
                len(self.store.staged),
            )

    def _call_tool(self, tool: str, payload: Mapping[str, Any]) -> dict:
        if tool == "query_extraction_density":
            return query_extraction_density(
                payload["text"],
                payload["schema"],
                payload["extracted_kg"],
                domain=payload.get("domain"),
            )
        if tool == "query_coverage_feedback":
            return query_coverage_feedback(
                payload["text"],
                payload["schema"],
                payload["extracted_kg"],
                priority_types=payload.get("priority_types"),
            )
        if tool == "query_quality_metrics":
            return query_quality_metrics(
                payload["extracted_kg"],
                payload["schema"],
                payload["text"],
                evaluation_aspects=payload.get("evaluation_aspects"),
            )
        if tool == "query_iterative_feedback":
            kwargs: dict[str, Any] = {}
            if payload.get("feedback_history") is not None:
                kwargs["feedback_history"] = payload["feedback_history"]
            if "max_iterations" in payload:
                kwargs["max_iterations"] = payload["max_iterations"]
            return query_iterative_feedback(
                payload["extraction_history"],
                payload["extracted_kg"],
                payload["text"],
                payload["schema"],
                **kwargs,
            )
        if tool == "query_entity_disambiguation":
            kwargs = {}
            if "disambiguation_strategy" in payload:
                kwargs["strategy"] = payload["disambiguation_strategy"]
            if "similarity_threshold" in payload:
                kwargs["similarity_threshold"] = payload["similarity_threshold"]
            if payload.get("context") is not None:
                kwargs["context"] = payload["context"]
            with self._lock:
                return query_entity_disambiguation(
                    payload["extracted_kg"], self.store, **kwargs
                )
        with self._lock:
            out = query_kg_storage(
                payload["extracted_kg"], self.store, now=self._tick()
            )
            self._persist()
            return out

    def handle(self, envelope: ToolEnvelope) -> dict:
        tool = envelope.tool
        if tool not in TOOL_NAMES:
            raise ToolError(404, "unknown_tool", f"no tool named {tool!r}")
        if not isinstance(envelope.payload, Mapping):
            raise ToolError(400, "invalid_request", "payload must be a JSON object")
        try:
            validate_payload(tool, "request", envelope.payload)
        except jsonschema.ValidationError as err:
            raise ToolError(400, "invalid_request", f"{err.json_path}: {err.message}")
        try:
            out = self._call_tool(tool, envelope.payload)
        except ToolError:
            raise
        except ValueError as err:
            raise ToolError(400, "invalid_request", str(err))
        try:
            validate_payload(tool, "response", out)
        except jsonschema.ValidationError as err:
            log.error("response for %s failed validation: %s", tool, err.message)
            raise ToolError(
                500, "invalid_response", f"tool produced an invalid response: {err.message}"
            )
        return out


def handle_tool_request(service: ToolService, envelope: ToolEnvelope) -> tuple[int, dict]:
    """Status plus body for one envelope; never raises on caller faults."""
    try:
        return 200, service.handle(envelope)
    except ToolError as err:
        return err.status, {"error": {"code": err.code, "message": err.message}}


class ToolRequestHandler(BaseHTTPRequestHandler):
    server_version = "kgrenv/0.1.0"
    protocol_version = "HTTP/1.1"

    def _send_json(self, status: int, body: dict, request_id: str | None = None) -> None:
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(data)))
        if request_id:
            self.send_header("X-Request-Id", request_id)
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self) -> None:  # noqa: N802 (http.server API)
        path = self.path.split("?", 1)[0]
        m = _TOOL_PATH.fullmatch(path)
        if m is None:
            self._send_json(
                404, {"error": {"code": "not_found", "message": f"no route {path}"}}
            )
            return
        request_id = self.headers.get("X-Request-Id")
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw.decode("utf-8")) if raw else None
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            self._send_json(
                400,
                {"error": {"code": "invalid_json", "message": f"body is not JSON: {err}"}},
                request_id,
            )
            return
        if not isinstance(payload, dict):
            self._send_json(
                400,
                {"error": {"code": "invalid_json", "message": "body must be a JSON object"}},
                request_id,
            )
            return
        envelope = ToolEnvelope(tool=m.group(1), payload=payload, request_id=request_id)
        try:
            status, body = handle_tool_request(self.server.service, envelope)
        except Exception:  # pragma: no cover - defensive
            log.exception("unhandled error for %s", envelope.tool)
            status, body = 500, {
                "error": {"code": "internal", "message": "unhandled server error"}
            }
        self._send_json(status, body, request_id)

    def do_GET(self) -> None:  # noqa: N802 (http.server API)
        path = self.path.split("?", 1)[0]
        if path == "/healthz":
            ents, rels, staged = self.server.service.store_counts()
            self._send_json(
                200,
                {
                    "status": "ok",
                    "entities": ents,
                    "relations": rels,
                    "staged": staged,
                },
            )
            return
        self._send_json(
            404, {"error": {"code": "not_found", "message": f"no route {path}"}}
        )

    def log_message(self, format: str, *args: Any) -> None:  # noqa: A002
        log.debug("%s - %s", self.address_string(), format % args)


class ToolServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, config: ServiceConfig) -> None:
        super().__init__((config.host, config.port), ToolRequestHandler)
        self.service = ToolService(config)


def make_server(config: ServiceConfig) -> ToolServer:
    return ToolServer(config)


def run_server(config: ServiceConfig) -> None:
    logging.basicConfig(level=getattr(logging, config.log_level))
    server = make_server(config)
    host, port = server.server_address[:2]
    log.info("serving on http://%s:%s (store=%s)", host, port, config.store_path or "memory")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
