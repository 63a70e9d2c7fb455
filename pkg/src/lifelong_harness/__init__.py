"""Lifelong-learning evaluation harness for language-model agents."""

from .core import (
    ChatHistory,
    ChatMessage,
    EnvKind,
    MetricsReport,
    Outcome,
    Role,
    SampleStatus,
    Session,
    TaskInstance,
    compute_metrics,
    load_sessions,
    load_tasks,
    status_breakdown,
    success_rate,
)
from .errors import HarnessError

__version__ = "0.1.0"

__all__ = [
    "ChatHistory",
    "ChatMessage",
    "EnvKind",
    "HarnessError",
    "MetricsReport",
    "Outcome",
    "Role",
    "SampleStatus",
    "Session",
    "TaskInstance",
    "compute_metrics",
    "load_sessions",
    "load_tasks",
    "status_breakdown",
    "success_rate",
]
