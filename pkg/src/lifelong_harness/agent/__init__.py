"""Agent abstraction: chat history in, next agent message out."""

from __future__ import annotations

from ..core import ChatHistory, Role, Tokenizer, WhitespaceTokenizer, count_history_tokens
from ..errors import AgentContextLimit
from .models import ChatCompletionsModel, ChatModel, ModelPool, ScriptedModel, ScriptRule, build_model
from .parsing import ActionKind, KGCall, ParsedAction, parse_action, render_action


def round_index(history: ChatHistory) -> int:
    """Number of agent turns already taken in the current task."""
    return sum(1 for m in history.transcript() if m.role is Role.AGENT)


class Agent:
    """Wraps a model handle with a tokenizer and a declared context limit.

    ``inference`` is side-effect free; the controller records token counts
    through :meth:`count_prompt_tokens`.
    """

    def __init__(self, model: ChatModel, *, context_limit: int | None = None, tokenizer: Tokenizer | None = None):
        self.model = model
        self.context_limit = context_limit
        self.tokenizer = tokenizer or WhitespaceTokenizer()

    def count_prompt_tokens(self, history: ChatHistory) -> int:
        return count_history_tokens(history, self.tokenizer)

    def inference(self, history: ChatHistory, task_id: str | None = None) -> str:
        tokens = self.count_prompt_tokens(history)
        if self.context_limit is not None and tokens > self.context_limit:
            raise AgentContextLimit(f"prompt has {tokens} tokens, limit is {self.context_limit}")
        return self.model.complete(tuple(history.messages), task_id=task_id, round_index=round_index(history))


__all__ = [
    "ActionKind",
    "Agent",
    "ChatCompletionsModel",
    "ChatModel",
    "KGCall",
    "ModelPool",
    "ParsedAction",
    "ScriptRule",
    "ScriptedModel",
    "build_model",
    "parse_action",
    "render_action",
    "round_index",
]
