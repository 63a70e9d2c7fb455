"""Remotable type descriptors: which methods and fields a server exposes, with schemas."""

from __future__ import annotations

import dataclasses
import inspect
import typing
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

from .codec import register_type, type_name


@dataclass(frozen=True)
class ParamSpec:
    name: str
    schema: Any
    required: bool


@dataclass(frozen=True)
class MethodSpec:
    name: str
    params: tuple[ParamSpec, ...]
    result: Any


@dataclass(frozen=True)
class FieldSpec:
    name: str
    schema: Any
    writable: bool


@dataclass
class RemotableDescriptor:
    type_name: str
    methods: dict[str, MethodSpec] = field(default_factory=dict)
    fields: dict[str, FieldSpec] = field(default_factory=dict)

    def summary(self) -> dict[str, Any]:
        """Schema-free view sent to clients: names, parameter order, writability."""
        return {
            "type_name": self.type_name,
            "methods": {m.name: [p.name for p in m.params] for m in self.methods.values()},
            "fields": {f.name: f.writable for f in self.fields.values()},
        }


_BY_CLASS: dict[type, RemotableDescriptor] = {}
_BY_NAME: dict[str, RemotableDescriptor] = {}


def _register_schema_types(schema: Any, seen: set[int] | None = None) -> None:
    seen = seen if seen is not None else set()
    if id(schema) in seen:
        return
    seen.add(id(schema))
    for arg in typing.get_args(schema):
        _register_schema_types(arg, seen)
    if isinstance(schema, type):
        if issubclass(schema, Enum):
            register_type(schema)
        elif dataclasses.is_dataclass(schema):
            register_type(schema)
            for hint in typing.get_type_hints(schema).values():
                _register_schema_types(hint, seen)


def _method_spec(cls: type, name: str) -> MethodSpec:
    func = getattr(cls, name)
    hints = typing.get_type_hints(func, localns={cls.__name__: cls})
    params = []
    for p in list(inspect.signature(func).parameters.values())[1:]:
        if p.kind in (p.VAR_POSITIONAL, p.VAR_KEYWORD):
            continue
        params.append(ParamSpec(p.name, hints.get(p.name, Any), p.default is inspect.Parameter.empty))
    result = hints.get("return", Any)
    for schema in [result, *(p.schema for p in params)]:
        _register_schema_types(schema)
    return MethodSpec(name, tuple(params), result)


def describe(
    cls: type,
    *,
    methods: Sequence[str] | None = None,
    fields: Mapping[str, bool | tuple[Any, bool]] | None = None,
    name: str | None = None,
) -> RemotableDescriptor:
    """Build and register a descriptor for ``cls``.

    ``methods`` defaults to every public function; ``fields`` maps a field name to
    its writability, or to ``(schema, writable)`` when the class has no annotation.
    """
    if methods is None:
        methods = [n for n, v in inspect.getmembers(cls, inspect.isfunction) if not n.startswith("_")]
    annotations = {}
    for klass in reversed(cls.__mro__):
        try:
            annotations.update(typing.get_type_hints(klass))
        except Exception:
            pass
    if fields is None:
        fields = {n: True for n in getattr(cls, "__annotations__", {}) if not n.startswith("_")}
    desc = RemotableDescriptor(name or type_name(cls))
    for m in methods:
        desc.methods[m] = _method_spec(cls, m)
    for fname, spec in fields.items():
        schema, writable = spec if isinstance(spec, tuple) else (annotations.get(fname, Any), bool(spec))
        _register_schema_types(schema)
        desc.fields[fname] = FieldSpec(fname, schema, writable)
    _BY_CLASS[cls] = desc
    _BY_NAME[desc.type_name] = desc
    return desc


def remotable(cls: type | None = None, **options: Any) -> Any:
    """Class decorator form of :func:`describe`."""

    def wrap(klass: type) -> type:
        describe(klass, **options)
        return klass

    return wrap(cls) if cls is not None else wrap


def descriptor_for(obj_or_cls: Any) -> RemotableDescriptor | None:
    cls = obj_or_cls if isinstance(obj_or_cls, type) else type(obj_or_cls)
    for klass in cls.__mro__:
        if klass in _BY_CLASS:
            return _BY_CLASS[klass]
    return None


def descriptor_named(name: str) -> RemotableDescriptor | None:
    return _BY_NAME.get(name)


def bind_arguments(spec: MethodSpec, args: Sequence[Any], kwargs: Mapping[str, Any]) -> dict[str, Any]:
    """Map positional and keyword arguments onto parameter names (client side)."""
    names = [p.name for p in spec.params]
    if len(args) > len(names):
        raise TypeError(f"{spec.name}() takes {len(names)} arguments, got {len(args)}")
    bound = dict(zip(names, args))
    for k, v in kwargs.items():
        if k not in names:
            raise TypeError(f"{spec.name}() got an unexpected argument {k!r}")
        if k in bound:
            raise TypeError(f"{spec.name}() got multiple values for {k!r}")
        bound[k] = v
    return bound


Invoker = Callable[..., Any]
