"""Tagged JSON codec for RPC values with schema-directed decoding.

Wire forms:

* ``null``, booleans, integers and text map to JSON natives;
* decimals travel as strings: ``{"$decimal": "1.50"}`` (``"float": true`` for
  binary floats, so they decode back to ``float``);
* lists are JSON arrays; tuples use the same form and are restored by schema;
* maps are ``{"$map": {...}}`` with text keys;
* enums are ``{"$enum": {"type_name", "variant"}}``;
* dataclass records are ``{"$record": {"type_name", "fields"}}``;
* remotable objects are ``{"$handle": {"type_name", "instance_id", "address"}}``.
"""

from __future__ import annotations

import collections.abc
import dataclasses
import json
import types
import typing
from decimal import Decimal
from enum import Enum
from typing import Any, Callable, Union

from ..errors import HarnessError, wire_exception


@wire_exception
class WireError(HarnessError):
    """A value cannot be encoded, or a wire value does not match its schema."""


_TYPES: dict[str, type] = {}


def register_type(cls: type) -> type:
    """Make an enum or dataclass decodable by name in this process."""
    _TYPES[type_name(cls)] = cls
    return cls


def type_name(cls: type) -> str:
    return f"{cls.__module__}.{cls.__qualname__}"


def lookup_type(name: str) -> type:
    try:
        return _TYPES[name]
    except KeyError:
        raise WireError(f"unknown wire type {name!r}") from None


@dataclasses.dataclass(frozen=True)
class Handle:
    type_name: str
    instance_id: str
    address: str


class Codec:
    """Encoder/decoder bound to an optional local registry and proxy factory.

    ``export`` turns a remotable object into a :class:`Handle`; ``resolve``
    turns a handle back into either a local object or a client proxy.
    """

    def __init__(
        self,
        export: Callable[[Any], Handle | None] | None = None,
        resolve: Callable[[Handle], Any] | None = None,
    ):
        self._export = export
        self._resolve = resolve

    # -- encode ------------------------------------------------------------

    def encode(self, value: Any) -> Any:
        if isinstance(value, Enum):
            register_type(type(value))
            return {"$enum": {"type_name": type_name(type(value)), "variant": value.name}}
        if value is None or isinstance(value, (bool, str)):
            return value
        if isinstance(value, int):
            return value
        if isinstance(value, float):
            return {"$decimal": repr(value), "float": True}
        if isinstance(value, Decimal):
            return {"$decimal": str(value)}
        if isinstance(value, Handle):
            return {"$handle": dataclasses.asdict(value)}
        handle = self._export(value) if self._export is not None else None
        if handle is not None:
            return {"$handle": dataclasses.asdict(handle)}
        if isinstance(value, (list, tuple)):
            return [self.encode(v) for v in value]
        if isinstance(value, dict):
            out = {}
            for k, v in value.items():
                if not isinstance(k, str):
                    raise WireError(f"map keys must be text, got {type(k).__name__}")
                out[k] = self.encode(v)
            return {"$map": out}
        if dataclasses.is_dataclass(value) and not isinstance(value, type):
            register_type(type(value))
            fields = {f.name: self.encode(getattr(value, f.name)) for f in dataclasses.fields(value)}
            return {"$record": {"type_name": type_name(type(value)), "fields": fields}}
        raise WireError(f"unsupported kind {type(value).__name__}")

    def dumps(self, value: Any) -> bytes:
        return json.dumps(self.encode(value), sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")

    # -- decode ------------------------------------------------------------

    def loads(self, data: bytes, schema: Any = Any) -> Any:
        try:
            wire = json.loads(data.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise WireError(f"malformed wire document: {exc}") from exc
        return self.decode(wire, schema)

    def decode(self, wire: Any, schema: Any = Any, where: str = "value") -> Any:
        value = self._decode_untyped(wire, where) if schema is Any else self._decode(wire, schema, where)
        return value

    def _decode_untyped(self, wire: Any, where: str) -> Any:
        if wire is None or isinstance(wire, (bool, int, str)):
            return wire
        if isinstance(wire, list):
            return [self._decode_untyped(w, f"{where}[{i}]") for i, w in enumerate(wire)]
        if isinstance(wire, dict) and len(wire) >= 1:
            tag = next(iter(wire)) if "$decimal" not in wire else "$decimal"
            if tag == "$decimal":
                return self._decimal(wire, where)
            if tag == "$map":
                return {k: self._decode_untyped(v, f"{where}.{k}") for k, v in self._body(wire, "$map", where).items()}
            if tag == "$enum":
                body = self._body(wire, "$enum", where)
                return self._enum(lookup_type(body["type_name"]), body, where)
            if tag == "$record":
                body = self._body(wire, "$record", where)
                return self._record(lookup_type(body["type_name"]), body, where)
            if tag == "$handle":
                return self._handle(wire, where)
        raise WireError(f"{where}: unrecognised wire value {str(wire)[:80]}")

    @staticmethod
    def _body(wire: Any, tag: str, where: str) -> Any:
        if not isinstance(wire, dict) or tag not in wire:
            raise WireError(f"{where}: expected {tag}")
        return wire[tag]

    def _decimal(self, wire: Any, where: str) -> Decimal | float:
        text = self._body(wire, "$decimal", where)
        if not isinstance(text, str):
            raise WireError(f"{where}: decimal must travel as text")
        try:
            return float(text) if wire.get("float") else Decimal(text)
        except (ValueError, ArithmeticError) as exc:
            raise WireError(f"{where}: bad decimal {text!r}") from exc

    def _enum(self, cls: type, body: Any, where: str) -> Enum:
        if body.get("type_name") != type_name(cls):
            raise WireError(f"{where}: expected enum {type_name(cls)}, got {body.get('type_name')}")
        try:
            return cls[body["variant"]]  # type: ignore[index]
        except KeyError:
            raise WireError(f"{where}: {body.get('variant')!r} is not a variant of {cls.__name__}") from None

    def _record(self, cls: type, body: Any, where: str) -> Any:
        if body.get("type_name") != type_name(cls):
            raise WireError(f"{where}: expected record {type_name(cls)}, got {body.get('type_name')}")
        hints = typing.get_type_hints(cls)
        raw = body.get("fields", {})
        init_fields = [f for f in dataclasses.fields(cls) if f.init]
        missing = [f.name for f in init_fields if f.name not in raw and f.default is dataclasses.MISSING
                   and f.default_factory is dataclasses.MISSING]  # type: ignore[misc]
        if missing:
            raise WireError(f"{where}: record {cls.__name__} is missing {missing}")
        kwargs = {
            f.name: self._decode(raw[f.name], hints.get(f.name, Any), f"{where}.{f.name}")
            for f in init_fields
            if f.name in raw
        }
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise WireError(f"{where}: cannot build {cls.__name__}: {exc}") from exc

    def _handle(self, wire: Any, where: str) -> Any:
        body = self._body(wire, "$handle", where)
        try:
            handle = Handle(str(body["type_name"]), str(body["instance_id"]), str(body["address"]))
        except (KeyError, TypeError) as exc:
            raise WireError(f"{where}: malformed handle") from exc
        if self._resolve is None:
            return handle
        return self._resolve(handle)

    def _decode(self, wire: Any, schema: Any, where: str) -> Any:
        if schema is Any or schema is object:
            return self._decode_untyped(wire, where)
        if schema is None or schema is type(None):
            if wire is not None:
                raise WireError(f"{where}: expected null")
            return None
        origin = typing.get_origin(schema)
        args = typing.get_args(schema)
        if origin is Union or (hasattr(types, "UnionType") and isinstance(schema, types.UnionType)):
            errors = []
            for option in args:
                try:
                    return self._decode(wire, option, where)
                except WireError as exc:
                    errors.append(str(exc))
            raise WireError(f"{where}: matches none of {schema}: {'; '.join(errors)}")
        if origin is typing.Literal:
            if wire not in args:
                raise WireError(f"{where}: expected one of {args}")
            return wire
        if origin in (list, collections.abc.Sequence, collections.abc.Iterable, collections.abc.Iterator):
            if not isinstance(wire, list):
                raise WireError(f"{where}: expected list")
            item = args[0] if args else Any
            return [self._decode(w, item, f"{where}[{i}]") for i, w in enumerate(wire)]
        if origin is tuple:
            if not isinstance(wire, list):
                raise WireError(f"{where}: expected list for tuple")
            if len(args) == 2 and args[1] is Ellipsis:
                return tuple(self._decode(w, args[0], f"{where}[{i}]") for i, w in enumerate(wire))
            if args and len(args) != len(wire):
                raise WireError(f"{where}: expected {len(args)} items, got {len(wire)}")
            hints = args or (Any,) * len(wire)
            return tuple(self._decode(w, h, f"{where}[{i}]") for i, (w, h) in enumerate(zip(wire, hints)))
        if origin in (dict, collections.abc.Mapping):
            body = self._body(wire, "$map", where)
            value_schema = args[1] if args else Any
            return {k: self._decode(v, value_schema, f"{where}.{k}") for k, v in body.items()}
        if origin is not None:
            return self._decode(wire, origin, where)
        if not isinstance(schema, type):
            return self._decode_untyped(wire, where)
        if schema is bool:
            if not isinstance(wire, bool):
                raise WireError(f"{where}: expected bool")
            return wire
        if schema is int:
            if isinstance(wire, bool) or not isinstance(wire, int):
                raise WireError(f"{where}: expected integer")
            return wire
        if schema is float:
            if isinstance(wire, int) and not isinstance(wire, bool):
                return wire
            value = self._decimal(wire, where) if isinstance(wire, dict) else None
            if not isinstance(value, float):
                raise WireError(f"{where}: expected float")
            return value
        if schema is Decimal:
            value = self._decimal(wire, where)
            if not isinstance(value, Decimal):
                raise WireError(f"{where}: expected decimal")
            return value
        if schema is str:
            if not isinstance(wire, str):
                raise WireError(f"{where}: expected text")
            return wire
        if schema in (list, tuple, dict):
            return schema(self._decode_untyped(wire, where)) if schema is not dict else self._decode(wire, dict[str, Any], where)
        if issubclass(schema, Enum):
            register_type(schema)
            return self._enum(schema, self._body(wire, "$enum", where), where)
        if dataclasses.is_dataclass(schema):
            register_type(schema)
            return self._record(schema, self._body(wire, "$record", where), where)
        if isinstance(wire, dict) and "$handle" in wire:
            return self._handle(wire, where)
        raise WireError(f"{where}: expected {schema.__name__}")


PLAIN = Codec()


def encode_value(value: Any) -> bytes:
    """Encode a value that contains no remotable objects."""
    return PLAIN.dumps(value)


def decode_value(data: bytes, schema: Any = Any) -> Any:
    return PLAIN.loads(data, schema)
