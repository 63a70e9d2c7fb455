"""Client-side RPC failures."""

from __future__ import annotations

import builtins

from ..errors import HarnessError, lookup_wire_exception


class TransportError(HarnessError):
    """The server could not be reached or returned a non-protocol response."""


class RemoteError(HarnessError):
    """The remote target raised an exception with no local counterpart."""

    def __init__(self, remote_type: str, message: str):
        super().__init__(f"{remote_type}: {message}")
        self.remote_type = remote_type
        self.remote_message = message


_BUILTIN_ERRORS = {
    "ArithmeticError", "AssertionError", "AttributeError", "IndexError", "KeyError", "LookupError",
    "NotImplementedError", "OverflowError", "RuntimeError", "TypeError", "ValueError", "ZeroDivisionError",
}


def rebuild_exception(remote_type: str, message: str) -> BaseException:
    cls = lookup_wire_exception(remote_type)
    if cls is None and remote_type in _BUILTIN_ERRORS:
        cls = getattr(builtins, remote_type)
    if cls is None:
        return RemoteError(remote_type, message)
    try:
        return cls(message)
    except TypeError:
        return RemoteError(remote_type, message)
