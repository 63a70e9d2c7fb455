"""Domain types shared by every module, plus metrics over finished sessions."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Iterator, Protocol

from .errors import DatasetError
from .skills import DB_SKILLS, KG_SKILLS, OS_SKILLS


class EnvKind(str, Enum):
    DB = "DB"
    OS = "OS"
    KG = "KG"


SKILL_SETS: dict[EnvKind, frozenset[str]] = {
    EnvKind.DB: frozenset(DB_SKILLS),
    EnvKind.OS: frozenset(OS_SKILLS),
    EnvKind.KG: frozenset(KG_SKILLS),
}


class Role(str, Enum):
    USER = "user"
    AGENT = "agent"


class SampleStatus(str, Enum):
    RUNNING = "running"
    COMPLETED = "completed"
    TASK_LIMIT_REACHED = "task_limit_reached"
    AGENT_VALIDATION_FAILED = "agent_validation_failed"
    AGENT_CONTEXT_LIMIT = "agent_context_limit"
    TASK_ENVIRONMENT_ERROR = "task_environment_error"
    TASK_UNKNOWN_ERROR = "task_unknown_error"
    AGENT_OUT_OF_MEMORY = "agent_out_of_memory"
    AGENT_UNKNOWN_ERROR = "agent_unknown_error"


# Statuses whose sessions are judged by the environment. Every other terminal
# status is a failure regardless of the environment state.
JUDGED_STATUSES = frozenset({SampleStatus.COMPLETED, SampleStatus.TASK_LIMIT_REACHED})


class Outcome(str, Enum):
    CORRECT = "correct"
    INCORRECT = "incorrect"
    UNKNOWN = "unknown"


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


@dataclass(frozen=True)
class TaskInstance:
    """One benchmark task.

    ``setup`` and ``ground_truth`` are environment specific JSON payloads; the
    environment modules document their shapes.
    """

    task_id: str
    env_kind: EnvKind
    instruction: str
    setup: dict[str, Any]
    ground_truth: dict[str, Any]
    skills: tuple[str, ...]
    difficulty: str | int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "env_kind", EnvKind(self.env_kind))
        object.__setattr__(self, "skills", tuple(self.skills))

    def validate(self) -> None:
        if not self.task_id:
            raise DatasetError("task_id must be non-empty")
        if not self.skills:
            raise DatasetError(f"{self.task_id}: skills must be non-empty")
        if len(set(self.skills)) != len(self.skills):
            raise DatasetError(f"{self.task_id}: duplicate skills")
        unknown = [s for s in self.skills if s not in SKILL_SETS[self.env_kind]]
        if unknown:
            raise DatasetError(f"{self.task_id}: skills {unknown} invalid for {self.env_kind.value}")
        gt = self.ground_truth
        if self.env_kind is EnvKind.DB:
            if ("rows" in gt) == ("digest" in gt):
                raise DatasetError(f"{self.task_id}: DB ground truth needs exactly one of rows/digest")
            if self.difficulty is not None and self.difficulty not in {d.value for d in Difficulty}:
                raise DatasetError(f"{self.task_id}: DB difficulty must be easy/medium/hard")
        elif self.env_kind is EnvKind.OS:
            if "evaluation" not in gt:
                raise DatasetError(f"{self.task_id}: OS ground truth needs an evaluation script")
        else:
            if ("answer" in gt) == ("count" in gt):
                raise DatasetError(f"{self.task_id}: KG ground truth needs exactly one of answer/count")
            actions = gt.get("actions", ())
            if not 2 <= len(actions) <= 9:
                raise DatasetError(f"{self.task_id}: KG action sequence must have 2..9 steps")
            if self.difficulty != len(actions):
                raise DatasetError(f"{self.task_id}: KG difficulty must equal action sequence length")

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "env_kind": self.env_kind.value,
            "instruction": self.instruction,
            "setup": self.setup,
            "ground_truth": self.ground_truth,
            "skills": list(self.skills),
            "difficulty": self.difficulty,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TaskInstance:
        expected = {"task_id", "env_kind", "instruction", "setup", "ground_truth", "skills", "difficulty"}
        if set(data) != expected:
            raise DatasetError(f"task record fields must be exactly {sorted(expected)}, got {sorted(data)}")
        return cls(**data)


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "role", Role(self.role))
        if self.role is Role.USER and not self.content:
            raise ValueError("user messages must be non-empty")


@dataclass
class ChatHistory:
    """Ordered role-tagged messages.

    ``task_start`` is the index of the current task's question message; the
    messages before it are the environment preamble and any injected
    experience transcripts.
    """

    messages: list[ChatMessage] = field(default_factory=list)
    task_start: int = 0

    def __post_init__(self) -> None:
        self.messages = [m if isinstance(m, ChatMessage) else ChatMessage(**m) for m in self.messages]

    def __len__(self) -> int:
        return len(self.messages)

    def append(self, role: Role, content: str) -> None:
        self.messages.append(ChatMessage(role, content))

    def copy(self) -> ChatHistory:
        return ChatHistory(list(self.messages), self.task_start)

    def transcript(self) -> list[ChatMessage]:
        """The current task's own messages, without preamble or injected experience."""
        return self.messages[self.task_start:]

    def validate(self) -> None:
        if self.messages and self.messages[0].role is not Role.USER:
            raise ValueError("first message must come from the user")
        for prev, cur in zip(self.messages, self.messages[1:]):
            if prev.role is cur.role:
                raise ValueError("roles must alternate")

    def to_dict(self) -> dict[str, Any]:
        return {
            "messages": [{"role": m.role.value, "content": m.content} for m in self.messages],
            "task_start": self.task_start,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ChatHistory:
        return cls([ChatMessage(**m) for m in data["messages"]], data.get("task_start", 0))


@dataclass
class Session:
    task_id: str
    env_kind: EnvKind
    skills: tuple[str, ...] = ()
    difficulty: str | int | None = None
    history: ChatHistory = field(default_factory=ChatHistory)
    status: SampleStatus = SampleStatus.RUNNING
    outcome: Outcome = Outcome.UNKNOWN
    reward: int = 0
    rounds_used: int = 0
    input_tokens_total: int = 0
    max_prompt_tokens: int = 0

    def __post_init__(self) -> None:
        self.env_kind = EnvKind(self.env_kind)
        self.status = SampleStatus(self.status)
        self.outcome = Outcome(self.outcome)
        self.skills = tuple(self.skills)

    @property
    def terminal(self) -> bool:
        return self.status is not SampleStatus.RUNNING

    def record_prompt(self, tokens: int) -> None:
        self.input_tokens_total += tokens
        self.max_prompt_tokens = max(self.max_prompt_tokens, tokens)

    def check(self, round_limit: int | None = None) -> None:
        """Raise ``AssertionError`` when a session invariant is broken."""
        assert (self.reward == 1) == (self.outcome is Outcome.CORRECT), "reward=1 iff outcome=correct"
        assert self.reward in (0, 1)
        if self.terminal:
            assert self.outcome is not Outcome.UNKNOWN, "terminal session without outcome"
        if round_limit is not None:
            assert self.rounds_used <= round_limit, "rounds_used exceeds the round limit"

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "env_kind": self.env_kind.value,
            "skills": list(self.skills),
            "difficulty": self.difficulty,
            "history": self.history.to_dict(),
            "status": self.status.value,
            "outcome": self.outcome.value,
            "reward": self.reward,
            "rounds_used": self.rounds_used,
            "input_tokens_total": self.input_tokens_total,
            "max_prompt_tokens": self.max_prompt_tokens,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Session:
        data = dict(data)
        data.pop("timestamp", None)
        data["history"] = ChatHistory.from_dict(data["history"])
        return cls(**data)


@dataclass
class MetricsReport:
    success_rate: float
    status_counts: dict[SampleStatus, int]
    per_skill_success: dict[str, tuple[int, int]]
    avg_input_tokens: float
    max_input_tokens: int
    session_count: int
    total_reward: int
    environment: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "success_rate": self.success_rate,
            "session_count": self.session_count,
            "total_reward": self.total_reward,
            "status_counts": {s.value: n for s, n in self.status_counts.items()},
            "per_skill_success": {k: list(v) for k, v in sorted(self.per_skill_success.items())},
            "avg_input_tokens": self.avg_input_tokens,
            "max_input_tokens": self.max_input_tokens,
            "environment": self.environment,
        }


class Tokenizer(Protocol):
    def count(self, text: str) -> int: ...


class WhitespaceTokenizer:
    """Deterministic stand-in tokenizer: one token per whitespace-separated word."""

    def count(self, text: str) -> int:
        return len(text.split())


def count_history_tokens(history: ChatHistory, tokenizer: Tokenizer | None = None) -> int:
    tok = tokenizer or WhitespaceTokenizer()
    return sum(tok.count(m.content) for m in history.messages)


def success_rate(sessions: Iterable[Session]) -> float:
    sessions = list(sessions)
    if not sessions:
        return 0.0
    return sum(1 for s in sessions if s.reward == 1) / len(sessions)


def status_breakdown(sessions: Iterable[Session]) -> dict[SampleStatus, int]:
    return dict(Counter(s.status for s in sessions))


def compute_metrics(sessions: Iterable[Session]) -> MetricsReport:
    sessions = list(sessions)
    per_skill: dict[str, list[int]] = {}
    for s in sessions:
        for skill in s.skills:
            bucket = per_skill.setdefault(skill, [0, 0])
            bucket[0] += s.reward
            bucket[1] += 1
    n = len(sessions)
    return MetricsReport(
        success_rate=success_rate(sessions),
        status_counts=status_breakdown(sessions),
        per_skill_success={k: (v[0], v[1]) for k, v in per_skill.items()},
        avg_input_tokens=(sum(s.input_tokens_total for s in sessions) / n) if n else 0.0,
        max_input_tokens=max((s.max_prompt_tokens for s in sessions), default=0),
        session_count=n,
        total_reward=sum(s.reward for s in sessions),
    )


# -- line-delimited JSON files -------------------------------------------------


def _iter_jsonl(path: Path) -> Iterator[tuple[int, dict[str, Any]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, record


def load_tasks(path: str | Path) -> list[TaskInstance]:
    tasks = []
    for lineno, record in _iter_jsonl(Path(path)):
        try:
            task = TaskInstance.from_dict(record)
            task.validate()
        except (DatasetError, ValueError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from exc
        tasks.append(task)
    return tasks


def dump_tasks(tasks: Iterable[TaskInstance], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_dict(), sort_keys=True) + "\n")


def session_line(session: Session, timestamp: str | None = None) -> str:
    record = session.to_dict()
    if timestamp is not None:
        record["timestamp"] = timestamp
    return json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"


def load_sessions(path: str | Path) -> list[Session]:
    sessions = []
    for lineno, record in _iter_jsonl(Path(path)):
        try:
            sessions.append(Session.from_dict(record))
        except (KeyError, ValueError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: malformed session record ({exc})") from exc
    return sessions

