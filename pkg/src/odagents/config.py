"""Platform configuration: backends, agent bindings, data paths."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .gateway import BackendConfig

CONFIG_FORMAT_VERSION = 1

# Agent tags that must be bound to a backend for the platform to start.
REQUIRED_AGENTS = ("qp", "da", "ir.generate", "ir.decompose", "pa.interpret")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8077


@dataclass(frozen=True)
class PlatformConfig:
    backends: tuple[BackendConfig, ...]
    agents: dict[str, str]  # agent tag -> backend_id
    paths: dict[str, str] = field(default_factory=dict)
    eval_datasets: dict[str, str] = field(default_factory=dict)
    service: ServiceConfig = ServiceConfig()
    base_dir: Path = Path(".")

    def backend(self, backend_id: str) -> BackendConfig:
        for b in self.backends:
            if b.backend_id == backend_id:
                return b
        raise ConfigError(f"unknown backend {backend_id!r}")

    def backend_for(self, agent_tag: str) -> str:
        if agent_tag not in self.agents:
            raise ConfigError(f"agent {agent_tag!r} has no backend binding")
        return self.agents[agent_tag]

    def path(self, key: str) -> Path | None:
        value = self.paths.get(key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def validate_for_startup(self) -> None:
        """Strict validation used by the service: every required agent bound
        to a known backend, every referenced path present on disk."""
        ids = {b.backend_id for b in self.backends}
        for tag in REQUIRED_AGENTS:
            backend_id = self.backend_for(tag)
            if backend_id not in ids:
                raise ConfigError(f"agent {tag!r} bound to unknown backend {backend_id!r}")
        for b in self.backends:
            if b.kind == "scripted":
                script = Path(b.script_path or "")
                if not script.is_absolute():
                    script = self.base_dir / script
                if not script.exists():
                    raise ConfigError(f"backend {b.backend_id!r}: script {script} does not exist")
        for key in self.paths:
            p = self.path(key)
            if p is not None and key != "sessions_dir" and not p.exists():
                raise ConfigError(f"configured path {key!r} = {p} does not exist")

    def to_dict(self) -> dict[str, Any]:
        return {
            "format_version": CONFIG_FORMAT_VERSION,
            "backends": [
                {
                    "backend_id": b.backend_id,
                    "kind": b.kind,
                    "endpoint": b.endpoint,
                    "model_name": b.model_name,
                    "script_path": b.script_path,
                    "price_per_input_token": b.price_per_input_token,
                    "price_per_output_token": b.price_per_output_token,
                    "api_key_env": b.api_key_env,
                }
                for b in self.backends
            ],
            "agents": dict(self.agents),
            "paths": dict(self.paths),
            "eval_datasets": dict(self.eval_datasets),
            "service": {"host": self.service.host, "port": self.service.port},
        }


def parse_config(data: dict[str, Any], base_dir: Path = Path(".")) -> PlatformConfig:
    version = data.get("format_version", CONFIG_FORMAT_VERSION)
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigError(f"unsupported config format version {version!r}")
    backends = []
    for raw in data.get("backends", []):
        backends.append(
            BackendConfig(
                backend_id=raw["backend_id"],
                kind=raw["kind"],
                endpoint=raw.get("endpoint"),
                model_name=raw.get("model_name"),
                script_path=raw.get("script_path"),
                price_per_input_token=float(raw.get("price_per_input_token", 0.0)),
                price_per_output_token=float(raw.get("price_per_output_token", 0.0)),
                api_key_env=raw.get("api_key_env"),
            )
        )
    if not backends:
        raise ConfigError("config must define at least one backend")
    service_raw = data.get("service", {})
    return PlatformConfig(
        backends=tuple(backends),
        agents=dict(data.get("agents", {})),
        paths=dict(data.get("paths", {})),
        eval_datasets=dict(data.get("eval_datasets", {})),
        service=ServiceConfig(
            host=service_raw.get("host", "127.0.0.1"), port=int(service_raw.get("port", 8077))
        ),
        base_dir=base_dir,
    )


def load_config(path: str | Path) -> PlatformConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return parse_config(data, base_dir=path.parent.resolve())
