"""Group self-consistency: one inference per experience group, then a vote."""

from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from decimal import Decimal, InvalidOperation
from typing import Any, Sequence, TypeVar

from ..agent.parsing import ActionKind, KGCall, ParsedAction, parse_action
from ..core import ChatHistory, ChatMessage, EnvKind, Role, SampleStatus, Session
from ..environments.db import parse_rows
from ..errors import HarnessError
from .base import CallbackContext
from .replay import ExperienceCallback, inject_experiences, select_experiences

BOTTOM = "⊥"

T = TypeVar("T")


def partition_groups(experiences: Sequence[T], g: int) -> list[list[T]]:
    """Contiguous blocks whose sizes differ by at most one; earlier blocks take the
    remainder and empty blocks are dropped."""
    if g < 1:
        raise ValueError("group count must be at least 1")
    q, r = divmod(len(experiences), g)
    groups, start = [], 0
    for i in range(g):
        size = q + (1 if i < r else 0)
        if size:
            groups.append(list(experiences[start:start + size]))
        start += size
    return groups


def majority_vote(candidates: Sequence[str]) -> str:
    """Modal value; ties go to the value that occurs earliest."""
    if not candidates:
        raise ValueError("cannot vote over no candidates")
    counts = Counter(candidates)
    top = max(counts.values())
    return next(c for c in candidates if counts[c] == top)


def _canonical_cell(value: Any) -> str:
    if value is None:
        return "NULL"
    if isinstance(value, (bool, int, float, Decimal)):
        try:
            return format(Decimal(str(value)).normalize(), "f")
        except InvalidOperation:
            return str(value)
    return json.dumps(value, ensure_ascii=False)


_KG_ITEMS = re.compile(r"^[\[{(]?(.*?)[\]})]?$", re.S)
_ENTITY = re.compile(r"^[A-Za-z0-9_.:#/-]+$")


def canonicalize_answer(env_kind: EnvKind | str, raw_answer: str) -> str:
    env_kind = EnvKind(env_kind)
    if env_kind is EnvKind.OS:
        return "Act: finish"
    if env_kind is EnvKind.DB:
        try:
            rows = parse_rows(raw_answer)
        except ValueError:
            return BOTTOM
        return "[" + ";".join("(" + ",".join(_canonical_cell(c) for c in row) + ")" for row in rows) + "]"
    text = raw_answer.strip()
    if re.fullmatch(r"-?\d+", text):
        return str(int(text))
    inner = _KG_ITEMS.match(text)
    items = [i.strip().strip("'\"") for i in (inner.group(1) if inner else "").split(",")]
    items = [i for i in items if i]
    if not items or not all(_ENTITY.match(i) for i in items):
        return BOTTOM
    return ",".join(sorted(set(items)))


def vote_key(env_kind: EnvKind, action: ParsedAction) -> str:
    """Comparable form of one inference's action; answers go through
    :func:`canonicalize_answer`, intermediate actions compare by normalised text."""
    kind, payload = action.kind, action.payload
    if kind is ActionKind.INVALID:
        return BOTTOM
    if kind in (ActionKind.DB_ANSWER, ActionKind.KG_ANSWER, ActionKind.OS_FINISH):
        canonical = canonicalize_answer(env_kind, str(payload))
        return canonical if canonical == BOTTOM else "answer:" + canonical
    if isinstance(payload, KGCall):
        return "action:" + payload.render()
    return "action:" + " ".join(str(payload).split())


class GroupSelfConsistencyCallback(ExperienceCallback):
    """Group 0 (most recent experiences) is injected into the session history and
    served by the controller's own inference; groups 1..g-1 are run here and
    the vote decides which message is kept."""

    name = "group_self_consistency"

    def __init__(self, n: int = 1, g: int = 1, parallel: int = 1):
        super().__init__()
        if n < 0:
            raise ValueError("n must be non-negative")
        if g < 1:
            raise ValueError("g must be at least 1")
        self.n, self.g, self.parallel = n, g, max(1, parallel)
        self._groups: list[list[Session]] = []
        self._preamble_end = 0

    def on_session_create(self, ctx: CallbackContext) -> None:
        self._groups = []

    def on_environment_reset(self, ctx: CallbackContext) -> None:
        assert ctx.session is not None
        history = ctx.session.history
        self._preamble_end = history.task_start
        self._groups = partition_groups(select_experiences(self.store, self.n), self.g)
        if self._groups:
            ctx.session.history = inject_experiences(history, self._groups[0])

    def group_prompt(self, history: ChatHistory, group: Sequence[Session]) -> ChatHistory:
        """``history`` minus its final agent turn, with ``group`` in place of the injected block."""
        preamble = history.messages[: self._preamble_end]
        transcript = history.messages[history.task_start: -1]
        return inject_experiences(ChatHistory(preamble + transcript, len(preamble)), group)

    def on_agent_inference(self, ctx: CallbackContext) -> None:
        session = ctx.session
        assert session is not None
        if len(self._groups) < 2 or not session.history.messages or session.history.messages[-1].role is not Role.AGENT:
            return
        prompts = [self.group_prompt(session.history, group) for group in self._groups[1:]]
        agent = ctx.agent

        def run(prompt: ChatHistory) -> str | None:
            try:
                return agent.inference(prompt, session.task_id)
            except HarnessError:
                return None

        if self.parallel > 1:
            with ThreadPoolExecutor(max_workers=self.parallel) as pool:
                replies = list(pool.map(run, prompts))
        else:
            replies = [run(p) for p in prompts]
        for prompt in prompts:
            session.record_prompt(agent.count_prompt_tokens(prompt))

        messages = [session.history.messages[-1].content, *replies]
        keys = [BOTTOM if m is None else vote_key(session.env_kind, parse_action(session.env_kind, m)) for m in messages]
        if all(k == BOTTOM for k in keys):
            session.status = SampleStatus.AGENT_VALIDATION_FAILED
            return
        winner = majority_vote(keys)
        raw = messages[keys.index(winner)]
        if raw is not None and raw != messages[0]:
            session.history.messages[-1] = ChatMessage(Role.AGENT, raw)
