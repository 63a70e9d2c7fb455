"""Experience replay: prior successful transcripts injected into the prompt."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from ..core import ChatHistory, ChatMessage, Role, Session
from .base import Callback, CallbackContext


@dataclass
class ExperienceStore:
    """Append-only log of terminal sessions in execution order."""

    sessions: list[Session] = field(default_factory=list)

    def append(self, session: Session) -> None:
        self.sessions.append(Session.from_dict(session.to_dict()))

    def to_bytes(self) -> bytes:
        return json.dumps([s.to_dict() for s in self.sessions], sort_keys=True, ensure_ascii=False).encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes) -> ExperienceStore:
        if not data:
            return cls()
        return cls([Session.from_dict(d) for d in json.loads(data.decode("utf-8"))])


def select_experiences(store: ExperienceStore, n: int) -> list[Session]:
    """Up to ``n`` successful sessions, most recent first."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if n == 0:
        return []
    picked = []
    for session in reversed(store.sessions):
        if session.reward == 1:
            picked.append(session)
            if len(picked) == n:
                break
    return picked


def experience_block(session: Session) -> list[ChatMessage]:
    """The session's own transcript, trimmed so it ends on an agent turn."""
    messages = list(session.history.transcript())
    while messages and messages[-1].role is Role.USER:
        messages.pop()
    return messages


def inject_experiences(history: ChatHistory, experiences: Sequence[Session]) -> ChatHistory:
    """New history with experiences (given most recent first) inserted oldest first
    between the preamble and the current question."""
    if not experiences:
        return history.copy()
    block: list[ChatMessage] = []
    for session in reversed(experiences):
        block.extend(experience_block(session))
    at = history.task_start
    return ChatHistory(history.messages[:at] + block + history.messages[at:], at + len(block))


class ExperienceCallback(Callback):
    """Shared plumbing: owns an :class:`ExperienceStore` fed at ``on_state_save``."""

    def __init__(self) -> None:
        self.store = ExperienceStore()

    def on_state_save(self, ctx: CallbackContext) -> None:
        if ctx.session is not None:
            self.store.append(ctx.session)

    def state_dict(self) -> bytes:
        return self.store.to_bytes()

    def load_state_dict(self, state: bytes) -> None:
        self.store = ExperienceStore.from_bytes(state)


class ExperienceReplayCallback(ExperienceCallback):
    name = "experience_replay"

    def __init__(self, n: int = 1):
        super().__init__()
        if n < 0:
            raise ValueError("n must be non-negative")
        self.n = n

    def on_environment_reset(self, ctx: CallbackContext) -> None:
        assert ctx.session is not None
        chosen = select_experiences(self.store, self.n)
        if chosen:
            ctx.session.history = inject_experiences(ctx.session.history, chosen)
