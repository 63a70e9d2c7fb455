"""Declarative experiment configuration (YAML or JSON)."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import EnvKind
from .errors import ConfigError

KNOWN_CALLBACKS = ("experience_replay", "group_self_consistency")
DEFAULT_ROUND_LIMITS = {EnvKind.DB: 3, EnvKind.OS: 5, EnvKind.KG: 15}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvironmentSpec(_Strict):
    kind: EnvKind
    # DB: sqlite | mysql; OS: mock | docker; KG: memory
    backend: str | None = None
    options: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_backend(self) -> EnvironmentSpec:
        allowed = {EnvKind.DB: ("sqlite", "mysql"), EnvKind.OS: ("mock", "docker"), EnvKind.KG: ("memory",)}[self.kind]
        if self.backend is None:
            self.backend = allowed[0]
        if self.backend not in allowed:
            raise ValueError(f"backend {self.backend!r} not valid for {self.kind.value}; choose from {allowed}")
        return self


class AgentSpec(_Strict):
    model: str
    context_limit: int | None = Field(default=None, gt=0)


class CallbackSpec(_Strict):
    name: str
    params: dict[str, Any] = Field(default_factory=dict)

    @field_validator("name")
    @classmethod
    def _known(cls, value: str) -> str:
        if value not in KNOWN_CALLBACKS:
            raise ValueError(f"unknown callback {value!r}; shipped callbacks are {KNOWN_CALLBACKS}")
        return value


class DeploymentSpec(_Strict):
    mode: Literal["local", "distributed"] = "local"
    controller: str | None = None
    token: str | None = None

    @model_validator(mode="after")
    def _addresses_iff_distributed(self) -> DeploymentSpec:
        if (self.mode == "distributed") != (self.controller is not None):
            raise ValueError("deployment.controller must be set exactly when mode is distributed")
        return self


class ExperimentConfig(_Strict):
    dataset: str
    environment: EnvironmentSpec
    agent: AgentSpec
    models: dict[str, dict[str, Any]]
    callbacks: list[CallbackSpec] = Field(default_factory=list)
    round_limits: dict[EnvKind, int] = Field(default_factory=dict)
    seed: int = 0
    output_dir: str = "output"
    deployment: DeploymentSpec = Field(default_factory=DeploymentSpec)
    # Directory relative paths are resolved against; not part of the digest.
    base_dir: str | None = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check(self) -> ExperimentConfig:
        if self.agent.model not in self.models:
            raise ValueError(f"agent model {self.agent.model!r} not in models {sorted(self.models)}")
        for limit in self.round_limits.values():
            if limit < 1:
                raise ValueError("round limits must be positive")
        return self

    @property
    def round_limit(self) -> int:
        kind = self.environment.kind
        return self.round_limits.get(kind, DEFAULT_ROUND_LIMITS[kind])

    def resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute() and self.base_dir is not None:
            p = Path(self.base_dir) / p
        return p

    @property
    def dataset_path(self) -> Path:
        return self.resolve(self.dataset)

    @property
    def output_path(self) -> Path:
        return self.resolve(self.output_dir)

    def canonical(self) -> dict[str, Any]:
        data = self.model_dump(mode="json", exclude={"base_dir", "output_dir", "deployment"})
        return data

    def digest(self, dataset_bytes: bytes = b"") -> str:
        """Identity of the experiment: everything that influences session contents."""
        h = hashlib.sha256()
        h.update(json.dumps(self.canonical(), sort_keys=True).encode())
        h.update(b"\0")
        h.update(dataset_bytes)
        return h.hexdigest()


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    raw.update(overrides or {})
    raw.setdefault("base_dir", str(path.parent.resolve()))
    return parse_config(raw)


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config:\n{exc}") from exc


class GeneratorSpec(_Strict):
    kind: Literal["mock", "chat_completions"] = "mock"
    seed: int | None = None
    options: dict[str, Any] = Field(default_factory=dict)


class DatagenConfig(_Strict):
    """Dataset construction settings; KG datasets are ingested from ``source`` records."""

    env: EnvKind = EnvKind.DB
    candidates: int = Field(default=1306, ge=0)
    target_size: int = Field(default=500, ge=0)
    min_per_skill: int = Field(default=20, ge=0)
    skills_per_task: tuple[int, int] = (2, 3)
    rare_skill_ratio: float | None = Field(default=None, ge=0, le=1)
    retries: int = Field(default=2, ge=0)
    review_fraction: float = Field(default=0.1, ge=0, le=1)
    seed: int = 0
    generator: GeneratorSpec = Field(default_factory=GeneratorSpec)
    source: str | None = None
    fixture: str | None = None
    base_dir: str | None = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check(self) -> DatagenConfig:
        if self.env is EnvKind.KG and (self.source is None or self.fixture is None):
            raise ValueError("KG datagen needs source (S-expression records) and fixture (triple store TSV)")
        return self

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() or self.base_dir is None else Path(self.base_dir) / p


def load_datagen_config(path: str | Path, overrides: dict[str, Any] | None = None) -> DatagenConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read datagen config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"datagen config {path} must be a mapping")
    raw.update(overrides or {})
    raw.setdefault("base_dir", str(path.parent.resolve()))
    try:
        return DatagenConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid datagen config:\n{exc}") from exc
