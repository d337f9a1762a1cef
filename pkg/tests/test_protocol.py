import json
import os
import socket
import struct
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cogtwin.protocol import (HEADER, OPS, Client, EncodingError, MemoryRecord, Message,
                              MessageServer, ProtocolError, RemoteError, Response, decode,
                              encode, parse_address, split_memory_address)

json_scalars = (st.none() | st.booleans() | st.integers(min_value=-2**70, max_value=2**70)
                | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=20))
json_values = st.recursive(
    json_scalars,
    lambda inner: st.lists(inner, max_size=5) | st.dictionaries(st.text(max_size=8), inner,
                                                                max_size=5),
    max_leaves=25)

messages = st.builds(Message, op=st.sampled_from(sorted(OPS)), target=st.text(max_size=30),
                     body=json_values, request_id=st.integers(min_value=0, max_value=2**53))


def test_read_request_fields():
    msg = Message("read", "p3-out", None, 7)
    doc = json.loads(encode(msg)[HEADER.size:])
    assert doc == {"op": "read", "target": "p3-out", "body": None, "request_id": 7,
                   "version": 1}


def test_length_prefix_is_big_endian_document_size():
    frame = encode(Message("health", request_id=1))
    (n,) = struct.unpack(">I", frame[:4])
    assert n == len(frame) - 4


def test_write_round_trip_bit_exact():
    msg = Message("write", "motor-lights", {"value": 1, "sample_id": 42}, 3)
    frame = encode(msg)
    assert decode(frame) == msg
    assert encode(decode(frame)) == frame


@settings(max_examples=1000, deadline=None)
@given(messages)
def test_round_trip_random_messages(msg):
    frame = encode(msg)
    assert decode(frame) == msg
    assert encode(decode(frame)) == frame


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip_bitwise(x):
    out = decode(encode(Message("write", "x", {"v": x}, 1))).body["v"]
    assert struct.pack(">d", out) == struct.pack(">d", x)


def test_encode_is_key_order_independent():
    a = Message("write", "m", {"b": 1, "a": [1, {"y": 2, "x": 3}]}, 1)
    b = Message("write", "m", {"a": [1, {"x": 3, "y": 2}], "b": 1}, 1)
    assert encode(a) == encode(b)


def test_response_round_trip():
    r = Response.failure(9, "not_found", "no memory named 'x'")
    assert decode(encode(r)) == r


@pytest.mark.parametrize("body", [{"x": float("nan")}, {"x": float("inf")}, {1: 2},
                                  (1, 2), {"s": {1, 2}}, b"raw"])
def test_unrepresentable_payloads_rejected(body):
    with pytest.raises(EncodingError):
        encode(Message("write", "m", body, 1))


def test_unknown_op_cannot_be_encoded():
    with pytest.raises(EncodingError):
        encode(Message("teleport", "m", None, 1))


def test_empty_input_is_parse_error():
    with pytest.raises(ProtocolError) as exc:
        decode(b"")
    assert exc.value.offset == 0


def test_truncated_document_reports_offset():
    frame = encode(Message("read", "abc", None, 1))
    with pytest.raises(ProtocolError) as exc:
        decode(frame[:-3])
    assert exc.value.offset >= 0


def test_invalid_json_offset_points_into_document():
    raw = b'{"op": "read", oops}'
    with pytest.raises(ProtocolError) as exc:
        decode(HEADER.pack(len(raw)) + raw)
    assert exc.value.offset == HEADER.size + raw.index(b"oops")


def test_bad_utf8_offset():
    raw = b'{"op": "\xff"}'
    with pytest.raises(ProtocolError) as exc:
        decode(HEADER.pack(len(raw)) + raw)
    assert exc.value.offset == HEADER.size + raw.index(b"\xff")


@pytest.mark.parametrize("doc", [
    [1, 2],
    {"op": "read", "target": "", "body": None, "request_id": 1},                 # no version
    {"version": 2, "op": "read", "target": "", "body": None, "request_id": 1},
    {"version": 1, "op": "read", "target": 5, "body": None, "request_id": 1},
    {"version": 1, "op": "read", "target": "", "body": None, "request_id": "1"},
    {"version": 1, "op": "fly", "target": "", "body": None, "request_id": 1},
])
def test_schema_violations(doc):
    raw = json.dumps(doc).encode()
    with pytest.raises(ProtocolError):
        decode(HEADER.pack(len(raw)) + raw)


def test_megabyte_of_random_bytes_fails_fast():
    rnd = os.urandom(1 << 20)
    start = time.perf_counter()
    for cut in (rnd, HEADER.pack(len(rnd) - 4) + rnd[4:], HEADER.pack(len(rnd)) + rnd):
        with pytest.raises(ProtocolError):
            decode(cut)
    assert time.perf_counter() - start < 2.0


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=300))
def test_garbage_never_crashes(data):
    try:
        decode(data)
    except ProtocolError:
        pass


def test_memory_record_invariants():
    with pytest.raises(ValueError):
        MemoryRecord("x", eval=1.5)
    with pytest.raises(ValueError):
        MemoryRecord("x", sample_id=-1)
    rec = MemoryRecord("x", "h:1", "sensory", [1, 2], 0.5, 3)
    assert MemoryRecord.from_dict(rec.to_dict()) == rec


def test_addresses():
    assert parse_address("10.0.0.1:7100") == ("10.0.0.1", 7100)
    assert split_memory_address("h:1/p03-out") == ("h:1", "p03-out")
    for bad in ("nohost", "h:x"):
        with pytest.raises(ValueError):
            parse_address(bad)
    with pytest.raises(ValueError):
        split_memory_address("h:1")


# -- live server ----------------------------------------------------------------


@pytest.fixture
def echo_server():
    def handler(msg):
        if msg.op == "read" and msg.target == "missing":
            raise RemoteError("not_found", "no such memory")
        if msg.op == "write" and msg.target == "boom":
            raise ZeroDivisionError("oops")
        return {"op": msg.op, "target": msg.target, "body": msg.body}

    srv = MessageServer("127.0.0.1:0", handler)
    srv.start()
    yield srv
    srv.shutdown()
    srv.server_close()


def test_client_round_trip(echo_server):
    with Client(echo_server.address) as c:
        for i in range(20):
            assert c.request("write", "m", {"i": i}) == {"op": "write", "target": "m",
                                                         "body": {"i": i}}


def test_remote_and_internal_errors(echo_server):
    with Client(echo_server.address) as c:
        with pytest.raises(RemoteError) as exc:
            c.request("read", "missing")
        assert exc.value.code == "not_found"
        with pytest.raises(RemoteError) as exc:
            c.request("write", "boom")
        assert exc.value.code == "internal"
        # the connection survives error responses
        assert c.request("health")["op"] == "health"


def _raw_exchange(address, frame):
    with socket.create_connection(parse_address(address), timeout=5) as s:
        s.sendall(frame)
        head = s.recv(4, socket.MSG_WAITALL)
        (n,) = HEADER.unpack(head)
        return decode(head + s.recv(n, socket.MSG_WAITALL))


def test_unknown_op_gets_error_response_with_request_id(echo_server):
    raw = json.dumps({"version": 1, "op": "fly", "target": "", "body": None,
                      "request_id": 77}).encode()
    resp = _raw_exchange(echo_server.address, HEADER.pack(len(raw)) + raw)
    assert not resp.ok and resp.request_id == 77 and resp.error["code"] == "unknown_op"


def test_garbage_frame_gets_error_response(echo_server):
    raw = b"\x00\x01garbage"
    resp = _raw_exchange(echo_server.address, HEADER.pack(len(raw)) + raw)
    assert not resp.ok and resp.error["code"] == "bad_request"


def test_every_pipelined_request_answered_once(echo_server):
    frames = b"".join(encode(Message("health", "", None, i)) for i in range(50))
    with socket.create_connection(parse_address(echo_server.address), timeout=5) as s:
        s.sendall(frames)
        ids = []
        for _ in range(50):
            head = s.recv(4, socket.MSG_WAITALL)
            (n,) = HEADER.unpack(head)
            ids.append(decode(head + s.recv(n, socket.MSG_WAITALL)).request_id)
    assert ids == list(range(50))
