"""Seven-event callback protocol with control flags."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

from ..core import Session


class CallbackEvent(str, Enum):
    RESTORE_STATE = "restore_state"
    ON_SESSION_CREATE = "on_session_create"
    ON_ENVIRONMENT_RESET = "on_environment_reset"
    ON_AGENT_INFERENCE = "on_agent_inference"
    ON_ENVIRONMENT_INTERACT = "on_environment_interact"
    ON_ENVIRONMENT_COMPLETE = "on_environment_complete"
    ON_STATE_SAVE = "on_state_save"


@dataclass
class ControlFlags:
    should_environment_reset: bool = True
    should_agent_inference: bool = True
    should_environment_interact: bool = True
    should_environment_complete: bool = True

    def reset(self) -> None:
        self.should_environment_reset = True
        self.should_agent_inference = True
        self.should_environment_interact = True
        self.should_environment_complete = True


@dataclass
class CallbackContext:
    """What a handler sees: it may mutate ``session`` and ``flags`` in place."""

    agent: Any
    environment: Any
    session: Session | None
    history: list[Session]
    flags: ControlFlags


class Callback:
    """Base class; every handler defaults to a no-op.

    Callbacks that carry state across tasks serialise it through
    :meth:`state_dict` / :meth:`load_state_dict` as opaque bytes.
    """

    name = "callback"

    def restore_state(self, ctx: CallbackContext) -> None:
        pass

    def on_session_create(self, ctx: CallbackContext) -> None:
        pass

    def on_environment_reset(self, ctx: CallbackContext) -> None:
        pass

    def on_agent_inference(self, ctx: CallbackContext) -> None:
        pass

    def on_environment_interact(self, ctx: CallbackContext) -> None:
        pass

    def on_environment_complete(self, ctx: CallbackContext) -> None:
        pass

    def on_state_save(self, ctx: CallbackContext) -> None:
        pass

    def state_dict(self) -> bytes:
        return b""

    def load_state_dict(self, state: bytes) -> None:
        pass


class CallbackHandler:
    def __init__(self, callbacks: Sequence[Callback] = ()):
        self.callbacks = list(callbacks)
        names = [c.name for c in self.callbacks]
        self.keys = [f"{i}:{n}" for i, n in enumerate(names)]

    def dispatch(self, event: CallbackEvent, ctx: CallbackContext) -> None:
        for callback in self.callbacks:
            getattr(callback, event.value)(ctx)

    def state_dicts(self) -> dict[str, bytes]:
        return {key: cb.state_dict() for key, cb in zip(self.keys, self.callbacks)}

    def load_state_dicts(self, states: dict[str, bytes]) -> None:
        if set(states) != set(self.keys):
            raise ValueError(f"snapshot callback states {sorted(states)} do not match chain {self.keys}")
        for key, cb in zip(self.keys, self.callbacks):
            cb.load_state_dict(states[key])
