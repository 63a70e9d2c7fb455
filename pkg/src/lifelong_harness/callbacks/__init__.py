"""Callback protocol and the shipped lifelong-learning callbacks."""

from __future__ import annotations

from typing import Any

from ..config import CallbackSpec
from ..errors import ConfigError
from .base import Callback, CallbackContext, CallbackEvent, CallbackHandler, ControlFlags
from .consistency import (
    BOTTOM,
    GroupSelfConsistencyCallback,
    canonicalize_answer,
    majority_vote,
    partition_groups,
    vote_key,
)
from .replay import ExperienceReplayCallback, ExperienceStore, inject_experiences, select_experiences

REGISTRY: dict[str, type[Callback]] = {
    ExperienceReplayCallback.name: ExperienceReplayCallback,
    GroupSelfConsistencyCallback.name: GroupSelfConsistencyCallback,
}


def build_callbacks(specs: list[CallbackSpec]) -> list[Callback]:
    built = []
    for spec in specs:
        cls: Any = REGISTRY[spec.name]
        try:
            built.append(cls(**spec.params))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"callback {spec.name}: {exc}") from exc
    return built


__all__ = [
    "BOTTOM",
    "Callback",
    "CallbackContext",
    "CallbackEvent",
    "CallbackHandler",
    "ControlFlags",
    "ExperienceReplayCallback",
    "ExperienceStore",
    "GroupSelfConsistencyCallback",
    "build_callbacks",
    "canonicalize_answer",
    "inject_experiences",
    "majority_vote",
    "partition_groups",
    "select_experiences",
    "vote_key",
]
