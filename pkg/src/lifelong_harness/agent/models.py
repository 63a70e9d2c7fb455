"""Model handles: the deterministic scripted model, a chat-completions HTTP
client, and the shared name -> handle pool."""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, Sequence

from ..core import ChatMessage, Role
from ..errors import AgentContextLimit, AgentFailure, AgentOutOfMemory, ConfigError


class ChatModel(Protocol):
    def complete(self, messages: Sequence[ChatMessage], *, task_id: str | None = None, round_index: int = 0) -> str: ...


@dataclass(frozen=True)
class ScriptRule:
    reply: str = ""
    task_id: str | None = None
    round: int | None = None
    contains: str | None = None
    error: str | None = None

    def matches(self, task_id: str | None, round_index: int, prompt: str) -> bool:
        if self.task_id is not None and self.task_id != task_id:
            return False
        if self.round is not None and self.round != round_index:
            return False
        if self.contains is not None and self.contains not in prompt:
            return False
        return True


_SCRIPT_ERRORS: dict[str, Callable[[str], Exception]] = {
    "out_of_memory": AgentOutOfMemory,
    "context_length": AgentContextLimit,
    "transport": AgentFailure,
}


class ScriptedModel:
    """Deterministic test double.

    Rules are checked in order and the first match wins. A rule may key on the
    task id, the round index (number of agent turns already taken in the
    current task), or a substring of the whole rendered prompt. A rule with
    ``error`` raises the corresponding agent failure instead of replying.
    """

    def __init__(self, rules: Sequence[ScriptRule] = (), default: str = "Act: finish"):
        self.rules = list(rules)
        self.default = default

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ScriptedModel:
        unknown = set(data) - {"default", "rules"}
        if unknown:
            raise ConfigError(f"unknown script keys {sorted(unknown)}")
        rules = []
        for raw in data.get("rules", []):
            if raw.get("error") not in (None, *_SCRIPT_ERRORS):
                raise ConfigError(f"unknown scripted error {raw['error']!r}")
            try:
                rules.append(ScriptRule(**raw))
            except TypeError as exc:
                raise ConfigError(f"bad script rule {raw}: {exc}") from exc
        return cls(rules, data.get("default", "Act: finish"))

    @classmethod
    def from_file(cls, path: str | Path) -> ScriptedModel:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read script {path}: {exc}") from exc
        return cls.from_dict(data)

    def complete(self, messages: Sequence[ChatMessage], *, task_id: str | None = None, round_index: int = 0) -> str:
        prompt = "\n".join(m.content for m in messages)
        for rule in self.rules:
            if rule.matches(task_id, round_index, prompt):
                if rule.error:
                    raise _SCRIPT_ERRORS[rule.error](f"scripted {rule.error}")
                return rule.reply
        return self.default


class ChatCompletionsModel:
    """Client for the common ``/chat/completions`` JSON interface."""

    def __init__(
        self,
        url: str,
        model: str,
        *,
        temperature: float = 0.0,
        api_key_env: str | None = "LLH_API_KEY",
        timeout: float = 120.0,
        retries: int = 2,
        transport: Any = None,
    ):
        import httpx

        self.url = url
        self.model = model
        self.temperature = temperature
        self.retries = retries
        headers = {}
        token = os.environ.get(api_key_env) if api_key_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._httpx = httpx
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def complete(self, messages: Sequence[ChatMessage], *, task_id: str | None = None, round_index: int = 0) -> str:
        body = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [
                {"role": "assistant" if m.role is Role.AGENT else "user", "content": m.content} for m in messages
            ],
        }
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(self.url, json=body)
            except self._httpx.TransportError as exc:
                last_error = exc
                time.sleep(min(2**attempt * 0.1, 2.0))
                continue
            if response.status_code >= 400:
                _raise_for_backend_error(response.status_code, response.text)
            try:
                return response.json()["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise AgentFailure(f"malformed completion response: {exc}") from exc
        raise AgentFailure(f"model endpoint unreachable after {self.retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


def _raise_for_backend_error(status: int, text: str) -> None:
    lowered = text.lower()
    if "context length" in lowered or "maximum context" in lowered or "context_length" in lowered:
        raise AgentContextLimit(text[:500])
    if "out of memory" in lowered or "out_of_memory" in lowered:
        raise AgentOutOfMemory(text[:500])
    raise AgentFailure(f"model endpoint returned HTTP {status}: {text[:500]}")


def build_model(spec: dict[str, Any], base_dir: Path | None = None) -> ChatModel:
    kind = spec.get("kind")
    if kind == "scripted":
        if "script" in spec:
            path = Path(spec["script"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return ScriptedModel.from_file(path)
        return ScriptedModel.from_dict(spec.get("inline", {}))
    if kind == "chat_completions":
        opts = {k: v for k, v in spec.items() if k not in {"kind", "url", "model", "context_limit"}}
        return ChatCompletionsModel(spec["url"], spec["model"], **opts)
    raise ConfigError(f"unknown model kind {kind!r}")


@dataclass
class ModelPool:
    """Name -> model handle registry; each handle is built at most once."""

    specs: dict[str, dict[str, Any]]
    base_dir: Path | None = None
    builder: Callable[[dict[str, Any], Path | None], ChatModel] = build_model
    constructions: dict[str, int] = field(default_factory=dict)
    _handles: dict[str, ChatModel] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def require(self, names: Sequence[str]) -> None:
        missing = sorted(set(names) - set(self.specs))
        if missing:
            raise ConfigError(f"unknown model name(s) {missing}; configured: {sorted(self.specs)}")

    def get(self, name: str) -> ChatModel:
        with self._lock:
            if name in self._handles:
                return self._handles[name]
            if name not in self.specs:
                raise ConfigError(f"unknown model name {name!r}")
            handle = self.builder(self.specs[name], self.base_dir)
            self._handles[name] = handle
            self.constructions[name] = self.constructions.get(name, 0) + 1
            return handle
