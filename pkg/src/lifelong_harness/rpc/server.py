"""HTTP server exposing remotable targets.

One POST endpoint; the body is ``{op, target_id, method, args}`` and the reply
``{ok, value}`` or ``{ok: false, error: {type, message}}``. Invocations on the
same instance are serialised; different instances run concurrently.
"""

from __future__ import annotations

import itertools
import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any

from .client import RemoteObject, RpcClient
from .codec import Codec, Handle, WireError
from .remotable import RemotableDescriptor, descriptor_for

log = logging.getLogger(__name__)

TOKEN_HEADER = "X-LLH-Token"
ROOT_ID = "0"


@dataclass
class _Entry:
    obj: Any
    descriptor: RemotableDescriptor
    lock: threading.RLock = field(default_factory=threading.RLock)


class _RequestError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message


def _error_message(exc: BaseException) -> str:
    if len(exc.args) == 1 and isinstance(exc.args[0], str):
        return exc.args[0]
    return str(exc)


class RpcServer:
    def __init__(self, root: Any, *, host: str = "127.0.0.1", port: int = 0, token: str | None = None):
        if descriptor_for(root) is None:
            raise TypeError(f"{type(root).__name__} has no remotable descriptor")
        self.token = token
        self._entries: dict[str, _Entry] = {}
        self._ids: dict[int, str] = {}
        self._counter = itertools.count()
        self._registry_lock = threading.Lock()
        self._client = RpcClient(token=token)
        self._httpd = ThreadingHTTPServer((host, port), self._make_handler())
        self._httpd.daemon_threads = True
        self._httpd.block_on_close = False  # idle keep-alive handlers would stall shutdown
        self.address = f"{host}:{self._httpd.server_address[1]}"
        self.codec = Codec(export=self.export, resolve=self.resolve)
        self._thread: threading.Thread | None = None
        self.export(root)

    # -- registry ------------------------------------------------------------

    def export(self, obj: Any) -> Handle | None:
        if isinstance(obj, RemoteObject):
            return obj._handle
        desc = descriptor_for(obj)
        if desc is None:
            return None
        with self._registry_lock:
            instance_id = self._ids.get(id(obj))
            if instance_id is None:
                instance_id = str(next(self._counter))
                self._ids[id(obj)] = instance_id
                self._entries[instance_id] = _Entry(obj, desc)
        return Handle(desc.type_name, instance_id, self.address)

    def resolve(self, handle: Handle) -> Any:
        if handle.address == self.address:
            entry = self._entries.get(handle.instance_id)
            if entry is None:
                raise WireError(f"no instance {handle.instance_id} on {self.address}")
            return entry.obj
        return self._client.proxy(handle)

    @property
    def instance_count(self) -> int:
        return len(self._entries)

    # -- request handling ------------------------------------------------------

    def handle(self, body: bytes) -> dict[str, Any]:
        try:
            request = json.loads(body.decode("utf-8"))
            if not isinstance(request, dict):
                raise _RequestError("WireError", "request must be an object")
            value = self._dispatch(request)
            return {"ok": True, "value": self.codec.encode(value)}
        except _RequestError as exc:
            return {"ok": False, "error": {"type": exc.kind, "message": exc.message}}
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            return {"ok": False, "error": {"type": "WireError", "message": f"malformed request: {exc}"}}
        except WireError as exc:
            return {"ok": False, "error": {"type": "WireError", "message": _error_message(exc)}}
        except Exception as exc:
            return {"ok": False, "error": {"type": type(exc).__qualname__, "message": _error_message(exc)}}

    def _dispatch(self, request: dict[str, Any]) -> Any:
        op = request.get("op")
        entry = self._entries.get(str(request.get("target_id", ROOT_ID)))
        if entry is None:
            raise _RequestError("WireError", f"unknown target {request.get('target_id')!r}")
        desc = entry.descriptor
        if op == "root":
            return entry.obj
        if op == "describe":
            return desc.summary()
        name = request.get("method")
        if op == "call":
            spec = desc.methods.get(name)
            if spec is None:
                raise _RequestError("AttributeError", f"{desc.type_name} has no remote method {name!r}")
            raw = request.get("args") or {"$map": {}}
            if not isinstance(raw, dict) or not isinstance(raw.get("$map"), dict):
                raise _RequestError("WireError", "args must be a map")
            args = raw["$map"]
            unknown = set(args) - {p.name for p in spec.params}
            if unknown:
                raise _RequestError("TypeError", f"{name}() got unexpected argument(s) {sorted(unknown)}")
            kwargs = {}
            for p in spec.params:
                if p.name not in args:
                    if p.required:
                        raise _RequestError("TypeError", f"{name}() missing argument {p.name!r}")
                    continue
                try:
                    kwargs[p.name] = self.codec.decode(args[p.name], p.schema, p.name)
                except WireError as exc:
                    raise _RequestError("WireError", f"parameter {p.name!r} of {name}(): {exc}") from exc
            with entry.lock:
                return getattr(entry.obj, name)(**kwargs)
        if op in ("get", "set"):
            fspec = desc.fields.get(name)
            if fspec is None:
                raise _RequestError("AttributeError", f"{desc.type_name} has no remote field {name!r}")
            if op == "get":
                with entry.lock:
                    return getattr(entry.obj, name)
            if not fspec.writable:
                raise _RequestError("AttributeError", f"field {name!r} is read-only")
            raw_args = request.get("args") or {}
            try:
                value = self.codec.decode(raw_args.get("$map", {}).get("value"), fspec.schema, name)
            except WireError as exc:
                raise _RequestError("WireError", f"field {name!r}: {exc}") from exc
            with entry.lock:
                setattr(entry.obj, name, value)
            return None
        raise _RequestError("WireError", f"unknown op {op!r}")

    def _make_handler(self) -> type[BaseHTTPRequestHandler]:
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"
            disable_nagle_algorithm = True  # headers and body go out as separate writes

            def do_POST(self) -> None:  # noqa: N802
                length = int(self.headers.get("Content-Length") or 0)
                body = self.rfile.read(length)
                if server.token is not None and self.headers.get(TOKEN_HEADER) != server.token:
                    reply = {"ok": False, "error": {"type": "PermissionError", "message": "bad or missing token"}}
                    status = 403
                else:
                    reply = server.handle(body)
                    status = 200
                data = json.dumps(reply, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, format: str, *args: Any) -> None:
                log.debug("%s " + format, self.address_string(), *args)

        return Handler

    # -- lifecycle -------------------------------------------------------------

    def start(self) -> RpcServer:
        if self._thread is not None:
            return self
        self._thread = threading.Thread(target=self._httpd.serve_forever, args=(0.05,), name=f"rpc-{self.address}", daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever(0.05)

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._client.close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> RpcServer:
        return self.start()

    def __exit__(self, *exc: Any) -> None:
        self.stop()


def serve(target: Any, address: str = "127.0.0.1:0", *, token: str | None = None) -> RpcServer:
    """Start serving ``target`` on ``host:port`` in a background thread."""
    host, _, port = address.rpartition(":")
    return RpcServer(target, host=host or "127.0.0.1", port=int(port or 0), token=token).start()
