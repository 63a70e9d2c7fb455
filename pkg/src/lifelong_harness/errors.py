"""Exception types shared across the harness.

Exceptions that may cross an RPC boundary are registered with
:func:`wire_exception` so a remote client can re-raise the same class.
"""

from __future__ import annotations

_WIRE_EXCEPTIONS: dict[str, type[BaseException]] = {}


def wire_exception(cls: type[BaseException]) -> type[BaseException]:
    _WIRE_EXCEPTIONS[cls.__qualname__] = cls
    return cls


def lookup_wire_exception(name: str) -> type[BaseException] | None:
    return _WIRE_EXCEPTIONS.get(name)


@wire_exception
class HarnessError(Exception):
    """Base class for every error raised by this package."""


@wire_exception
class ConfigError(HarnessError):
    pass


@wire_exception
class DatasetError(HarnessError):
    pass


@wire_exception
class ContractViolation(HarnessError):
    """An environment method was called out of reset -> interact* -> complete order."""


@wire_exception
class EnvironmentFailure(HarnessError):
    """Task-side infrastructure failure (backend unreachable, setup failed, ...)."""


@wire_exception
class AgentContextLimit(HarnessError):
    pass


@wire_exception
class AgentOutOfMemory(HarnessError):
    pass


@wire_exception
class AgentFailure(HarnessError):
    """Unexpected failure inside the agent or its model transport."""


@wire_exception
class SnapshotError(HarnessError):
    pass
