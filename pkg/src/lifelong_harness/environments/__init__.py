"""Environment contract, the three environments, and a config-driven builder."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from ..config import EnvironmentSpec
from ..core import EnvKind
from ..errors import ConfigError
from .base import ChatHistoryFactory, Environment, InteractionResult, initial_history
from .db import DBEnvironment, MySQLBackend, SqliteBackend, state_digest
from .kg import KGEnvironment, KGVariable, TripleStore, VariableTable, kg_apply
from .os_env import DockerExecBackend, Effect, MockExecBackend, OSEnvironment, truncate_output


def _resolve(base_dir: Path | None, path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or base_dir is None else base_dir / p


def build_environment(
    spec: EnvironmentSpec,
    round_limit: int,
    *,
    base_dir: Path | str | None = None,
    factory: ChatHistoryFactory | None = None,
) -> Environment:
    base = Path(base_dir) if base_dir is not None else None
    opts: dict[str, Any] = dict(spec.options)
    if spec.kind is EnvKind.DB:
        if spec.backend == "mysql":
            backend = MySQLBackend(**opts)
        else:
            backend = SqliteBackend(opts.get("path", ":memory:"))
        return DBEnvironment(backend, round_limit=round_limit, factory=factory)
    if spec.kind is EnvKind.OS:
        limit = opts.pop("observation_limit", 8192)
        if spec.backend == "docker":
            exec_backend: Any = DockerExecBackend(**opts)
        else:
            effects = opts.get("effects", [])
            if isinstance(effects, str):
                effects = json.loads(_resolve(base, effects).read_text(encoding="utf-8"))
            exec_backend = MockExecBackend(effects)
        return OSEnvironment(exec_backend, round_limit=round_limit, observation_limit=limit, factory=factory)
    fixture = opts.get("fixture")
    if fixture is None:
        raise ConfigError("KG environment needs options.fixture (a triple-store TSV)")
    store = TripleStore.from_tsv(_resolve(base, fixture))
    return KGEnvironment(store, round_limit=round_limit, factory=factory)


__all__ = [
    "ChatHistoryFactory",
    "DBEnvironment",
    "DockerExecBackend",
    "Effect",
    "Environment",
    "InteractionResult",
    "KGEnvironment",
    "KGVariable",
    "MockExecBackend",
    "MySQLBackend",
    "OSEnvironment",
    "SqliteBackend",
    "TripleStore",
    "VariableTable",
    "build_environment",
    "initial_history",
    "kg_apply",
    "state_digest",
    "truncate_output",
]
