"""Wire format shared by nodes, codelets, the trainer and the environment server.

Every document is UTF-8 JSON with sorted keys, framed by a 4-byte big-endian
length prefix. Requests are :class:`Message`; every request gets exactly one
:class:`Response` carrying the same ``request_id``.
"""
from __future__ import annotations

import json
import logging
import math
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from typing import Any, Callable

log = logging.getLogger(__name__)

VERSION = 1
HEADER = struct.Struct(">I")
MAX_FRAME = 64 * 1024 * 1024

OPS = frozenset({
    "read", "write", "train", "get_model", "get_io_set", "reconfigure",
    "health", "shutdown", "set_state", "set_device", "read_device", "reset",
})


class ProtocolError(ValueError):
    """Malformed or truncated document. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=0, request_id=None):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset
        self.request_id = request_id


class EncodingError(ValueError):
    pass


class RemoteError(RuntimeError):
    """Error response returned by a peer."""

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


@dataclass
class MemoryRecord:
    name: str
    address: str = ""
    mem_type: str = ""
    payload: Any = None
    eval: float = 0.0
    sample_id: int = 0

    def __post_init__(self):
        if not 0.0 <= self.eval <= 1.0:
            raise ValueError(f"eval must lie in [0, 1], got {self.eval}")
        if self.sample_id < 0:
            raise ValueError("sample_id must be non-negative")

    def to_dict(self):
        return {
            "name": self.name, "address": self.address, "mem_type": self.mem_type,
            "payload": self.payload, "eval": self.eval, "sample_id": self.sample_id,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"], address=d.get("address", ""), mem_type=d.get("mem_type", ""),
            payload=d.get("payload"), eval=float(d.get("eval", 0.0)),
            sample_id=int(d.get("sample_id", 0)),
        )


@dataclass
class Message:
    op: str
    target: str = ""
    body: Any = None
    request_id: int = 0

    def to_dict(self):
        return {"version": VERSION, "op": self.op, "target": self.target,
                "body": self.body, "request_id": self.request_id}


@dataclass
class Response:
    request_id: int
    ok: bool = True
    body: Any = None
    error: dict | None = field(default=None)

    def to_dict(self):
        d = {"version": VERSION, "request_id": self.request_id, "ok": self.ok, "body": self.body}
        if self.error is not None:
            d["error"] = self.error
        return d

    @classmethod
    def failure(cls, request_id, code, message):
        return cls(request_id=request_id, ok=False, error={"code": code, "message": str(message)})


def _check_json(value, path="body"):
    # json.dumps silently coerces tuples and non-str keys; reject them so round-trips are exact
    if value is None or isinstance(value, (bool, str)):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        if not math.isfinite(value):
            raise EncodingError(f"{path}: non-finite float {value!r}")
        return
    if isinstance(value, list):
        for i, v in enumerate(value):
            _check_json(v, f"{path}[{i}]")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise EncodingError(f"{path}: non-string key {k!r}")
            _check_json(v, f"{path}.{k}")
        return
    raise EncodingError(f"{path}: {type(value).__name__} is not representable")


def encode(msg: Message | Response) -> bytes:
    """Serialize to one length-prefixed frame. Output is byte-stable for equal input."""
    doc = msg.to_dict()
    _check_json(doc["body"])
    if isinstance(msg, Message):
        if msg.op not in OPS:
            raise EncodingError(f"unknown op {msg.op!r}")
        if not isinstance(msg.target, str):
            raise EncodingError("target must be a string")
    raw = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                     allow_nan=False).encode("utf-8")
    if len(raw) > MAX_FRAME:
        raise EncodingError(f"document of {len(raw)} bytes exceeds frame limit")
    return HEADER.pack(len(raw)) + raw


def _parse_document(raw: bytes, base: int):
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"invalid UTF-8: {exc.reason}", base + exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        # exc.pos is a character index; convert to a byte offset
        raise ProtocolError(f"invalid JSON: {exc.msg}",
                            base + len(text[:exc.pos].encode("utf-8"))) from None
    except RecursionError:
        raise ProtocolError("document nested too deeply", base) from None
    if not isinstance(doc, dict):
        raise ProtocolError("document is not an object", base)
    return doc


def decode(data: bytes) -> Message | Response:
    """Parse one complete frame produced by :func:`encode`.

    Raises ProtocolError for anything that is not exactly one valid frame.
    """
    if len(data) < HEADER.size:
        raise ProtocolError("truncated length prefix", len(data))
    (n,) = HEADER.unpack_from(data)
    if n > MAX_FRAME:
        raise ProtocolError(f"declared length {n} exceeds frame limit", 0)
    if len(data) - HEADER.size != n:
        raise ProtocolError(
            f"declared length {n} but {len(data) - HEADER.size} bytes follow",
            min(len(data), HEADER.size + n))
    return decode_document(data[HEADER.size:], base=HEADER.size)


def decode_document(raw: bytes, base: int = 0) -> Message | Response:
    doc = _parse_document(raw, base)
    rid = doc.get("request_id")
    # an error response to an unparseable request has no id to echo
    anonymous_error = rid is None and doc.get("ok") is False and "op" not in doc
    if not anonymous_error and (not isinstance(rid, int) or isinstance(rid, bool)):
        raise ProtocolError("missing or non-integer request_id", base)
    if doc.get("version") != VERSION:
        raise ProtocolError(f"unsupported version {doc.get('version')!r}", base, rid)
    if "op" in doc:
        op, target = doc["op"], doc.get("target", "")
        if op not in OPS:
            raise ProtocolError(f"unknown op {op!r}", base, rid)
        if not isinstance(target, str):
            raise ProtocolError("target must be a string", base, rid)
        return Message(op=op, target=target, body=doc.get("body"), request_id=rid)
    if "ok" in doc:
        return Response(request_id=rid, ok=bool(doc["ok"]), body=doc.get("body"),
                        error=doc.get("error"))
    raise ProtocolError("document is neither request nor response", base, rid)


# -- stream transport ---------------------------------------------------------

def _recv_exact(sock, n):
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def recv_frame(sock) -> bytes | None:
    """Read one whole frame (prefix included). ``None`` on clean EOF."""
    head = _recv_exact(sock, HEADER.size)
    if head is None:
        return None
    (n,) = HEADER.unpack(head)
    if n > MAX_FRAME:
        raise ProtocolError(f"declared length {n} exceeds frame limit", 0)
    payload = _recv_exact(sock, n)
    if payload is None:
        raise ProtocolError("connection closed mid-frame", HEADER.size)
    return head + payload


def parse_address(address: str) -> tuple[str, int]:
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {address!r}, expected host:port")
    return host, int(port)


def split_memory_address(address: str) -> tuple[str, str]:
    """``host:port/name`` -> (``host:port``, ``name``)."""
    node, sep, name = address.partition("/")
    if not sep or not name:
        raise ValueError(f"bad memory address {address!r}, expected host:port/name")
    return node, name


class Client:
    """Persistent request/response connection to one server. Thread-safe."""

    def __init__(self, address: str, timeout: float = 10.0):
        self.address = address
        self.timeout = timeout
        self._sock = None
        self._lock = threading.Lock()
        self._next_id = 1

    def _connect(self):
        sock = socket.create_connection(parse_address(self.address), timeout=self.timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock

    def request(self, op, target="", body=None, timeout=None):
        """Send one request and return the response body; raise RemoteError on failure."""
        with self._lock:
            rid = self._next_id
            self._next_id += 1
            frame = encode(Message(op=op, target=target, body=body, request_id=rid))
            try:
                if self._sock is None:
                    self._connect()
                self._sock.settimeout(timeout if timeout is not None else self.timeout)
                self._sock.sendall(frame)
                raw = recv_frame(self._sock)
            except (OSError, ProtocolError):
                self._close_locked()
                raise
            if raw is None:
                self._close_locked()
                raise ConnectionError(f"{self.address} closed the connection")
            resp = decode(raw)
        if not isinstance(resp, Response) or resp.request_id != rid:
            raise ProtocolError("response does not match request", 0)
        if not resp.ok:
            err = resp.error or {}
            raise RemoteError(err.get("code", "error"), err.get("message", ""))
        return resp.body

    def _close_locked(self):
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def close(self):
        with self._lock:
            self._close_locked()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock = self.request
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        while True:
            try:
                raw = recv_frame(sock)
            except ProtocolError as exc:
                self._reply(Response.failure(None, "bad_request", exc))
                return
            except OSError:
                return
            if raw is None:
                return
            try:
                msg = decode(raw)
                if not isinstance(msg, Message):
                    raise ProtocolError("expected a request", HEADER.size, msg.request_id)
            except ProtocolError as exc:
                code = "unknown_op" if "unknown op" in str(exc) else "bad_request"
                self._reply(Response.failure(exc.request_id, code, exc))
                continue
            resp = self.server.dispatch(msg)
            if not self._reply(resp):
                return

    def _reply(self, resp):
        try:
            frame = encode(resp)
        except EncodingError as exc:
            frame = encode(Response.failure(resp.request_id, "internal", exc))
        try:
            self.request.sendall(frame)
            return True
        except OSError:
            return False


class MessageServer(socketserver.ThreadingTCPServer):
    """Threaded TCP server that maps each request to ``handler(msg) -> body``.

    The handler raises RemoteError for domain errors; anything else becomes
    an ``internal`` error response.
    """

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: str, handler: Callable[[Message], Any]):
        self.handler = handler
        super().__init__(parse_address(address), _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def dispatch(self, msg: Message) -> Response:
        try:
            return Response(request_id=msg.request_id, body=self.handler(msg))
        except RemoteError as exc:
            return Response.failure(msg.request_id, exc.code, exc.message)
        except Exception as exc:  # noqa: BLE001 - a server must answer every request
            log.exception("handler failed for %s", msg.op)
            return Response.failure(msg.request_id, "internal", exc)

    def start(self):
        t = threading.Thread(target=self.serve_forever, name=f"server-{self.address}", daemon=True)
        t.start()
        return t
