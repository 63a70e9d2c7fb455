"""The five-method environment contract and its call-order guard."""

from __future__ import annotations

from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass
from enum import Enum
from typing import Any, Iterable

from ..agent.parsing import ParsedAction
from ..core import ChatHistory, EnvKind, Role, Session, TaskInstance, success_rate
from ..errors import ContractViolation
from .prompts import AGENT_ACK


@dataclass(frozen=True)
class InteractionResult:
    observation: str
    finished: bool = False


class _Phase(str, Enum):
    CLEAN = "clean"
    ACTIVE = "active"
    RELEASED = "released"


class ChatHistoryFactory:
    """Builds a task's opening history from the environment preamble and the question.

    Kept as its own component so that a deployment can host it in a separate
    process and every holder observes the same ``acknowledgement``.
    """

    def __init__(self, acknowledgement: str = AGENT_ACK):
        self.acknowledgement = acknowledgement

    def construct(self, preamble: str, question: str) -> ChatHistory:
        history = ChatHistory()
        history.append(Role.USER, preamble)
        history.append(Role.AGENT, self.acknowledgement)
        history.append(Role.USER, question)
        history.task_start = 2
        return history


def initial_history(preamble: str, question: str) -> ChatHistory:
    """Preamble, acknowledgement, then the task question (``task_start`` points at it)."""
    return ChatHistoryFactory().construct(preamble, question)


class Environment(ABC):
    """reset -> interact* -> complete per task; release frees long-lived resources.

    Subclasses implement the ``_reset``/``_interact``/``_complete`` hooks; the
    public methods enforce call order so that violations fail deterministically.
    """

    kind: EnvKind

    def __init__(self, factory: ChatHistoryFactory | None = None) -> None:
        self.factory = factory or ChatHistoryFactory()
        self._phase = _Phase.CLEAN
        self._task: TaskInstance | None = None

    @property
    def active_task(self) -> TaskInstance | None:
        return self._task

    def reset(self, task: TaskInstance) -> ChatHistory:
        if self._phase is not _Phase.CLEAN:
            raise ContractViolation(f"reset called while environment is {self._phase.value}")
        if task.env_kind is not self.kind:
            raise ContractViolation(f"{self.kind.value} environment cannot run {task.env_kind.value} task")
        self._phase = _Phase.ACTIVE
        self._task = task
        try:
            return self._reset(task)
        except BaseException:
            # A failed reset must not leave the environment wedged for the next task.
            self.abort()
            raise

    def interact(self, action: ParsedAction) -> InteractionResult:
        if self._phase is not _Phase.ACTIVE:
            raise ContractViolation(f"interact called while environment is {self._phase.value}")
        return self._interact(action)

    def complete(self, session: Session) -> int:
        if self._phase is not _Phase.ACTIVE:
            raise ContractViolation(f"complete called while environment is {self._phase.value}")
        try:
            return self._complete(self._task, session)
        finally:
            self._cleanup()
            self._phase = _Phase.CLEAN
            self._task = None

    def abort(self) -> None:
        """Drop per-task resources without judging (used after harness-level failures)."""
        if self._phase is _Phase.ACTIVE:
            try:
                self._cleanup()
            finally:
                self._phase = _Phase.CLEAN
                self._task = None

    def release(self) -> None:
        if self._phase is _Phase.RELEASED:
            return
        self.abort()
        self._release()
        self._phase = _Phase.RELEASED

    def calculate_metric(self, sessions: Iterable[Session]) -> dict[str, Any]:
        """Success rate plus per-difficulty breakdown; empty input gives an empty fragment."""
        sessions = [s for s in sessions if s.env_kind is self.kind]
        if not sessions:
            return {}
        buckets: dict[str, list[Session]] = defaultdict(list)
        for s in sessions:
            buckets[self.difficulty_bucket(s)].append(s)
        return {
            "success_rate": success_rate(sessions),
            "by_difficulty": {
                key: {"success_rate": success_rate(group), "solved": sum(x.reward for x in group), "count": len(group)}
                for key, group in sorted(buckets.items(), key=lambda kv: _bucket_order(kv[0]))
            },
        }

    def difficulty_bucket(self, session: Session) -> str:
        return "all"

    @abstractmethod
    def _reset(self, task: TaskInstance) -> ChatHistory: ...

    @abstractmethod
    def _interact(self, action: ParsedAction) -> InteractionResult: ...

    @abstractmethod
    def _complete(self, task: TaskInstance, session: Session) -> int: ...

    def _cleanup(self) -> None:
        pass

    def _release(self) -> None:
        pass


def _bucket_order(key: str) -> tuple[int, Any]:
    order = {"easy": 0, "medium": 1, "hard": 2}
    if key in order:
        return (0, order[key])
    if key.isdigit():
        return (1, int(key))
    return (2, key)
