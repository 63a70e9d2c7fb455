from __future__ import annotations

import dataclasses
from decimal import Decimal
from enum import Enum
from typing import Optional

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifelong_harness.core import ChatHistory, EnvKind, Role, Session
from lifelong_harness.rpc import (
    Codec,
    RemoteError,
    RemoteObject,
    RpcClient,
    TransportError,
    WireError,
    decode_value,
    encode_value,
    remotable,
    serve,
)


class Colour(Enum):
    RED = 1
    BLUE = 2


@dataclasses.dataclass(frozen=True)
class Point:
    x: int
    y: Decimal
    tag: Optional[str] = None


class Oddity(Exception):
    pass


@remotable
class Counter:
    step: int
    name: str

    def __init__(self, step: int = 1):
        self.step = step
        self.name = "counter"
        self.total = 0

    def bump(self, times: int = 1) -> int:
        self.total += self.step * times
        return self.total

    def child(self, step: int) -> "Counter":
        return Counter(step)

    def absorb(self, other: "Counter") -> int:
        self.total += other.bump(0)
        return self.total

    def describe_point(self, p: Point) -> str:
        return f"{p.x}:{p.y}:{p.tag}"

    def make_point(self, x: int) -> Point:
        return Point(x, Decimal("0.10"))

    def colour(self, c: Colour) -> Colour:
        return Colour.BLUE if c is Colour.RED else Colour.RED

    def fail(self, kind: str) -> None:
        if kind == "value":
            raise ValueError("bad value")
        if kind == "key":
            raise KeyError("k")
        raise Oddity("strange")


@remotable(fields={"label": False})
class Hub:
    def __init__(self):
        self.label = "hub"
        self.counters: list[Counter] = []

    def new_counter(self, step: int) -> Counter:
        c = Counter(step)
        self.counters.append(c)
        return c

    def sum_totals(self) -> int:
        return sum(c.total for c in self.counters)


# -- codec ---------------------------------------------------------------------

plain = st.recursive(
    st.one_of(
        st.none(),
        st.booleans(),
        st.integers(),
        st.text(max_size=10),
        st.floats(allow_nan=False),
        st.decimals(allow_nan=False, allow_infinity=False),
    ),
    lambda inner: st.one_of(st.lists(inner, max_size=4), st.dictionaries(st.text(max_size=5), inner, max_size=4)),
    max_leaves=15,
)


@given(plain)
def test_codec_round_trip(value):
    back = decode_value(encode_value(value))
    assert back == value
    assert type(back) is type(value)


def test_codec_records_enums_and_tuples():
    p = Point(3, Decimal("1.50"), "a")
    assert decode_value(encode_value(p), Point) == p
    assert decode_value(encode_value(Colour.BLUE), Colour) is Colour.BLUE
    assert decode_value(encode_value((1, "a")), tuple[int, str]) == (1, "a")
    assert decode_value(encode_value({"a": [1, 2]}), dict[str, list[int]]) == {"a": [1, 2]}


def test_codec_core_types_round_trip():
    h = ChatHistory()
    h.append(Role.USER, "hi")
    s = Session("t", EnvKind.KG, ("count",), 3, h)
    assert decode_value(encode_value(s), Session) == s


def test_codec_is_canonical():
    assert encode_value({"b": 1, "a": 2}) == encode_value({"a": 2, "b": 1})
    assert encode_value(Decimal("1.50")) != encode_value(Decimal("1.5"))


@pytest.mark.parametrize(
    "wire,schema",
    [
        (b'"x"', int),
        (b"true", int),
        (b"[1]", tuple[int, int]),
        (b'{"$decimal": "1"}', float),
        (b"{", int),
        (b'{"$enum": {"type_name": "nope.Nope", "variant": "A"}}', Colour),
    ],
)
def test_codec_rejects_schema_mismatch(wire, schema):
    with pytest.raises(WireError):
        decode_value(wire, schema)


def test_codec_rejects_unsupported_values():
    with pytest.raises(WireError):
        encode_value(object())
    with pytest.raises(WireError):
        encode_value({1: "non-text key"})


def test_codec_uses_export_hook():
    marker = object()
    codec = Codec(export=lambda v: None)
    with pytest.raises(WireError):
        codec.encode(marker)


# -- client/server ---------------------------------------------------------------


@pytest.fixture
def counter_server():
    with serve(Counter(2)) as server:
        client = RpcClient()
        yield server, client
        client.close()


def test_methods_fields_and_defaults(counter_server):
    server, client = counter_server
    remote = client.connect(server.address)
    assert isinstance(remote, RemoteObject)
    assert remote.bump() == 2
    assert remote.bump(times=3) == 8
    assert remote.step == 2
    remote.step = 5
    assert remote.bump(1) == 13
    assert remote.name == "counter"


def test_records_and_enums_across_the_wire(counter_server):
    server, client = counter_server
    remote = client.connect(server.address)
    assert remote.describe_point(Point(1, Decimal("2.50"))) == "1:2.50:None"
    assert remote.make_point(4) == Point(4, Decimal("0.10"))
    assert remote.colour(Colour.RED) is Colour.BLUE


def test_chained_handles(counter_server):
    server, client = counter_server
    root = client.connect(server.address)
    child = root.child(10)
    assert isinstance(child, RemoteObject)
    assert child.bump() == 10
    grandchild = child.child(7)
    grandchild.bump(2)
    # Passing a handle back in resolves to the server-side object.
    assert root.absorb(child) == 10
    assert child.absorb(grandchild) == 24
    assert child != root


def test_handles_from_another_server_are_proxied():
    with serve(Hub()) as hub_server, serve(Counter(1)) as counter_server:
        client = RpcClient()
        try:
            hub = client.connect(hub_server.address)
            counter = client.connect(counter_server.address)
            counter.bump(4)
            made = hub.new_counter(3)
            made.bump()
            assert hub.sum_totals() == 3
            assert counter.absorb(made) == 7
            assert hub.label == "hub"
            with pytest.raises(AttributeError, match="read-only"):
                hub.label = "x"
        finally:
            client.close()


def test_remote_exceptions_are_rebuilt(counter_server):
    server, client = counter_server
    remote = client.connect(server.address)
    with pytest.raises(ValueError, match="bad value"):
        remote.fail("value")
    with pytest.raises(KeyError):
        remote.fail("key")
    with pytest.raises(RemoteError) as info:
        remote.fail("other")
    assert info.value.remote_type.endswith("Oddity")


def test_unknown_members_and_bad_arguments(counter_server):
    server, client = counter_server
    remote = client.connect(server.address)
    with pytest.raises(AttributeError):
        remote.total  # not declared as a field
    with pytest.raises(AttributeError):
        remote.missing()
    with pytest.raises(TypeError):
        remote.bump(1, 2)
    with pytest.raises(TypeError):
        remote.bump(bogus=1)
    with pytest.raises(WireError):
        remote.bump("three")


def test_token_is_enforced():
    with serve(Counter(), token="s3cret") as server:
        good = RpcClient(token="s3cret")
        bad = RpcClient(token="wrong")
        try:
            assert good.connect(server.address).bump() == 1
            with pytest.raises((PermissionError, RemoteError)):
                bad.connect(server.address)
        finally:
            good.close()
            bad.close()


def test_unreachable_server_is_a_transport_error():
    with serve(Counter()) as server:
        address = server.address
    client = RpcClient(timeout=2)
    with pytest.raises(TransportError):
        client.connect(address)
    client.close()


def test_raw_malformed_requests(counter_server):
    server, _ = counter_server
    assert server.handle(b"{")["error"]["type"] == "WireError"
    assert server.handle(b"[]")["error"]["type"] == "WireError"
    assert server.handle(b'{"op": "teleport", "target_id": "0"}')["error"]["type"] == "WireError"
    assert server.handle(b'{"op": "call", "target_id": "99", "method": "bump"}')["error"]["type"] == "WireError"
