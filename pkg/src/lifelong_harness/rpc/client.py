"""Mirror clients: proxies whose attribute access turns into remote calls."""

from __future__ import annotations

import json
import threading
from typing import Any

import httpx

from .codec import Codec, Handle
from .errors import TransportError, rebuild_exception
from .remotable import MethodSpec, ParamSpec, bind_arguments, descriptor_named

TOKEN_HEADER = "X-LLH-Token"


class RpcClient:
    """Shared HTTP client; safe to use from several threads."""

    def __init__(self, *, token: str | None = None, timeout: float = 300.0):
        headers = {TOKEN_HEADER: token} if token else {}
        self._http = httpx.Client(timeout=timeout, headers=headers)
        self._summaries: dict[tuple[str, str], dict[str, Any]] = {}
        self._lock = threading.Lock()
        self.codec = Codec(export=self._export, resolve=self.proxy)

    @staticmethod
    def _export(obj: Any) -> Handle | None:
        return obj._handle if isinstance(obj, RemoteObject) else None

    def request(self, address: str, op: str, target_id: str, method: str | None = None, args: dict[str, Any] | None = None) -> Any:
        envelope = {"op": op, "target_id": target_id, "method": method, "args": self.codec.encode(args or {})}
        body = json.dumps(envelope, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
        try:
            response = self._http.post(f"http://{address}/", content=body, headers={"Content-Type": "application/json"})
        except httpx.HTTPError as exc:
            raise TransportError(f"cannot reach {address}: {exc}") from exc
        try:
            reply = response.json()
            ok = reply["ok"]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(f"{address} sent a non-protocol reply (HTTP {response.status_code})") from exc
        if not ok:
            error = reply.get("error") or {}
            raise rebuild_exception(str(error.get("type", "RemoteError")), str(error.get("message", "")))
        return self.codec.decode(reply.get("value"))

    def summary(self, handle: Handle) -> dict[str, Any]:
        key = (handle.address, handle.type_name)
        with self._lock:
            cached = self._summaries.get(key)
        if cached is None:
            local = descriptor_named(handle.type_name)
            cached = local.summary() if local is not None else self.request(handle.address, "describe", handle.instance_id)
            with self._lock:
                self._summaries[key] = cached
        return cached

    def proxy(self, handle: Handle) -> RemoteObject:
        return RemoteObject(self, handle)

    def connect(self, address: str) -> RemoteObject:
        root = self.request(address, "root", "0")
        if not isinstance(root, RemoteObject):
            raise TransportError(f"{address} did not return a handle")
        return root

    def close(self) -> None:
        self._http.close()


class RemoteObject:
    """Stand-in for an object living on a server.

    Methods and fields named by the remote descriptor are forwarded; nothing
    else is visible. Instances are only ever created by decoding handles.
    """

    __slots__ = ("_client", "_handle", "_summary")

    def __init__(self, client: RpcClient, handle: Handle):
        object.__setattr__(self, "_client", client)
        object.__setattr__(self, "_handle", handle)
        object.__setattr__(self, "_summary", None)

    def _desc(self) -> dict[str, Any]:
        if self._summary is None:
            object.__setattr__(self, "_summary", self._client.summary(self._handle))
        return self._summary

    def __getattr__(self, name: str) -> Any:
        if name.startswith("__"):
            raise AttributeError(name)
        desc = self._desc()
        if name in desc["methods"]:
            params = desc["methods"][name]
            spec = MethodSpec(name, tuple(ParamSpec(p, Any, True) for p in params), Any)
            client, handle = self._client, self._handle

            def method(*args: Any, **kwargs: Any) -> Any:
                bound = bind_arguments(spec, args, kwargs)
                return client.request(handle.address, "call", handle.instance_id, name, bound)

            method.__name__ = name
            return method
        if name in desc["fields"]:
            return self._client.request(self._handle.address, "get", self._handle.instance_id, name)
        raise AttributeError(f"remote {self._handle.type_name} has no attribute {name!r}")

    def __setattr__(self, name: str, value: Any) -> None:
        desc = self._desc()
        if name not in desc["fields"]:
            raise AttributeError(f"remote {self._handle.type_name} has no field {name!r}")
        self._client.request(self._handle.address, "set", self._handle.instance_id, name, {"value": value})

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RemoteObject) and other._handle == self._handle

    def __hash__(self) -> int:
        return hash(self._handle)

    def __repr__(self) -> str:
        h = self._handle
        return f"<remote {h.type_name}#{h.instance_id} at {h.address}>"


_DEFAULT: RpcClient | None = None
_DEFAULT_LOCK = threading.Lock()


def connect(address: str, *, token: str | None = None) -> RemoteObject:
    """Proxy for the root target served at ``host:port``."""
    global _DEFAULT
    if token is not None:
        return RpcClient(token=token).connect(address)
    with _DEFAULT_LOCK:
        if _DEFAULT is None:
            _DEFAULT = RpcClient()
    return _DEFAULT.connect(address)
