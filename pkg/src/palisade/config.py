"""
Gateway configuration: a flat `key = value` file with environment
overrides for the listen address and backend URLs.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .llm import PromptTemplate, TemplateRegistry, default_registry

ENV_LISTEN = "PALISADE_LISTEN"
ENV_LLM_URL = "PALISADE_LLM_URL"
ENV_EMBED_URL = "PALISADE_EMBED_URL"

_TRUTHY = ("1", "true", "yes", "on")


@dataclass
class GatewayConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8642
    embedding_backend: str = "stub"  # "stub" or a URL
    llm_backend: str = "stub"        # "stub" or a URL
    template_registry: str | None = None
    scenario: str | None = None
    mapek_tick: float = 2.0
    retrieval_k: int = 5
    embedding_dim: int = 256
    audit_sink: str | None = None
    simulator_live: bool = False
    base_dir: Path = field(default_factory=Path)

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def parse_config(path: str | Path | None = None) -> GatewayConfig:
    """Read the config file (if given) and apply environment overrides."""
    config = GatewayConfig()
    if path is not None:
        path = Path(path)
        config.base_dir = path.parent
        for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected 'key = value'")
            key, _, value = line.partition("=")
            _apply(config, key.strip(), value.strip(), f"{path}:{line_no}")
    listen = os.environ.get(ENV_LISTEN)
    if listen:
        _apply(config, "listen", listen, ENV_LISTEN)
    llm_url = os.environ.get(ENV_LLM_URL)
    if llm_url:
        config.llm_backend = llm_url
    embed_url = os.environ.get(ENV_EMBED_URL)
    if embed_url:
        config.embedding_backend = embed_url
    if not (0 < config.listen_port < 65536):
        raise ValueError(f"invalid port {config.listen_port}")
    return config


def _apply(config: GatewayConfig, key: str, value: str, where: str) -> None:
    if key == "listen":
        host, _, port = value.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"{where}: listen must be host:port")
        config.listen_host, config.listen_port = host, int(port)
    elif key == "embedding_backend":
        config.embedding_backend = value
    elif key == "llm_backend":
        config.llm_backend = value
    elif key == "template_registry":
        config.template_registry = value
    elif key == "scenario":
        config.scenario = value
    elif key == "mapek_tick":
        config.mapek_tick = float(value)
    elif key == "retrieval_k":
        config.retrieval_k = int(value)
    elif key == "embedding_dim":
        config.embedding_dim = int(value)
    elif key == "audit_sink":
        config.audit_sink = value
    elif key == "simulator_live":
        config.simulator_live = value.lower() in _TRUTHY
    else:
        raise ValueError(f"{where}: unknown key {key!r}")


def load_registry(path: str | Path | None) -> TemplateRegistry:
    """Template registry from a JSON file, or the built-in default set."""
    if path is None:
        return default_registry()
    registry = TemplateRegistry()
    for entry in json.loads(Path(path).read_text()):
        template = PromptTemplate(
            template_id=entry["template_id"],
            strategy=entry["strategy"],
            task=entry["task"],
            body=entry["body"],
            whitelisted=bool(entry.get("whitelisted", True)),
        )
        registry.register(template, exemplars=entry.get("exemplars"))
    return registry
