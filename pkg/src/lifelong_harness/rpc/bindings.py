"""Remote descriptors for the harness components that can live in other processes."""

from __future__ import annotations

from ..core import EnvKind
from ..environments.base import ChatHistoryFactory, Environment
from .remotable import describe

ENVIRONMENT = describe(
    Environment,
    methods=["reset", "interact", "complete", "abort", "release", "calculate_metric"],
    fields={"kind": (EnvKind, False), "round_limit": (int, False), "factory": (ChatHistoryFactory, True)},
    name="Environment",
)

HISTORY_FACTORY = describe(
    ChatHistoryFactory,
    methods=["construct"],
    fields={"acknowledgement": (str, True)},
    name="ChatHistoryFactory",
)
