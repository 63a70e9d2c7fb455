"""Transparent RPC toolkit and distributed bootstrap."""

from __future__ import annotations

from . import bindings  # noqa: F401  (registers remote descriptors)
from .bootstrap import BootstrapError, ServerController, bootstrap_start, bootstrap_stop, spawn_worker
from .client import RemoteObject, RpcClient, connect
from .codec import Codec, Handle, WireError, decode_value, encode_value, register_type
from .errors import RemoteError, TransportError
from .remotable import RemotableDescriptor, describe, descriptor_for, remotable
from .server import RpcServer, serve

__all__ = [
    "BootstrapError",
    "Codec",
    "Handle",
    "RemotableDescriptor",
    "RemoteError",
    "RemoteObject",
    "RpcClient",
    "RpcServer",
    "ServerController",
    "TransportError",
    "WireError",
    "bootstrap_start",
    "bootstrap_stop",
    "connect",
    "decode_value",
    "describe",
    "descriptor_for",
    "encode_value",
    "register_type",
    "remotable",
    "serve",
    "spawn_worker",
]
