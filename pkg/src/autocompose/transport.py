"""AC1: a one-line request/response protocol for serving plans on a peer.

Grammar (ASCII, one message per ``\\n``-terminated line)::

    request  = "AC1 REQ " service-id " " items "\\n"
    response = "AC1 OK " cost "\\n" | "AC1 ERR " message "\\n"
    items    = index *("," index)        ; strictly ascending, no leading zeros
    cost     = non-negative integer, minor currency units

``service-id`` is any run of visible ASCII characters (0x21-0x7E); ``message``
is printable ASCII (0x20-0x7E), non-empty. The endpoint ``loopback`` (or
``loopback:<name>``) routes through an in-process table instead of a socket.
"""
from __future__ import annotations

import logging
import re
import socket
import socketserver
import threading
from collections.abc import Callable
from dataclasses import dataclass

from .errors import ProtocolError, TransportError
from .mining import Itemset

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_LINE = 65536

_INDEX = re.compile(rb"[1-9][0-9]*")
_COST = re.compile(rb"0|[1-9][0-9]*")


@dataclass(frozen=True)
class RemoteRequest:
    service_id: str
    items: Itemset
    protocol_version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class RemoteResponse:
    ok: bool
    total_cost: int | None = None
    message: str | None = None

    @classmethod
    def success(cls, cost: int) -> RemoteResponse:
        return cls(True, cost, None)

    @classmethod
    def failure(cls, message: str) -> RemoteResponse:
        return cls(False, None, message)

    @property
    def status(self) -> str:
        return "Ok" if self.ok else "Error"


def _visible(s: str) -> bool:
    return bool(s) and all(0x21 <= ord(c) <= 0x7E for c in s)


def _printable(s: str) -> bool:
    return bool(s) and all(0x20 <= ord(c) <= 0x7E for c in s)


def encode_request(r: RemoteRequest) -> bytes:
    if r.protocol_version != PROTOCOL_VERSION:
        raise ProtocolError(f"cannot encode version {r.protocol_version}", 0)
    if not _visible(r.service_id):
        raise ProtocolError(f"invalid service id {r.service_id!r}", 8)
    items = list(r.items)
    if not items or any(
        isinstance(i, bool) or not isinstance(i, int) or i < 1 for i in items
    ) or any(a >= b for a, b in zip(items, items[1:])):
        raise ProtocolError(f"items must be non-empty, positive, ascending: {items}", 9 + len(r.service_id))
    return f"AC1 REQ {r.service_id} {','.join(map(str, items))}\n".encode("ascii")


def encode_response(r: RemoteResponse) -> bytes:
    if r.ok:
        if r.message is not None or r.total_cost is None:
            raise ProtocolError("ok response carries a cost and no message", 4)
        if isinstance(r.total_cost, bool) or not isinstance(r.total_cost, int) or r.total_cost < 0:
            raise ProtocolError(f"cost must be a non-negative integer, got {r.total_cost!r}", 7)
        return f"AC1 OK {r.total_cost}\n".encode("ascii")
    if r.total_cost is not None or r.message is None or not _printable(r.message):
        raise ProtocolError("error response carries a printable message and no cost", 8)
    return f"AC1 ERR {r.message}\n".encode("ascii")


def _frame(data: bytes | str) -> bytes:
    """Validate framing and the version tag; returns the body after ``AC1 ``."""
    if isinstance(data, str):
        try:
            data = data.encode("ascii")
        except UnicodeEncodeError as exc:
            raise ProtocolError("non-ASCII character", exc.start) from None
    if not isinstance(data, (bytes, bytearray)):
        raise ProtocolError(f"expected bytes, got {type(data).__name__}", 0)
    data = bytes(data)
    for pos, b in enumerate(data):
        if b > 0x7E or (b < 0x20 and not (b == 0x0A and pos == len(data) - 1)):
            raise ProtocolError(f"illegal byte 0x{b:02x}", pos)
    if not data.endswith(b"\n"):
        raise ProtocolError("missing line terminator", len(data))
    line = data[:-1]
    m = re.match(rb"AC([0-9]+) ", line)
    if m is None:
        raise ProtocolError("expected 'AC<version> '", 0)
    version = int(m.group(1))
    if version != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {version}", 2)
    return line


def decode_request(data: bytes | str) -> RemoteRequest:
    line = _frame(data)
    pos = 4
    if line[pos:pos + 4] != b"REQ ":
        raise ProtocolError("expected 'REQ '", pos)
    pos += 4
    sp = line.find(b" ", pos)
    if sp == pos:
        raise ProtocolError("empty service id", pos)
    if sp < 0:
        raise ProtocolError("missing item list", len(line))
    service_id = line[pos:sp].decode("ascii")
    pos = sp + 1
    items: list[int] = []
    for token in line[pos:].split(b","):
        if not _INDEX.fullmatch(token):
            raise ProtocolError(f"bad item index {token!r}", pos)
        value = int(token)
        if items and value <= items[-1]:
            raise ProtocolError("items must be strictly ascending", pos)
        items.append(value)
        pos += len(token) + 1
    return RemoteRequest(service_id, tuple(items))


def decode_response(data: bytes | str) -> RemoteResponse:
    line = _frame(data)
    body = line[4:]
    if body.startswith(b"OK "):
        token = body[3:]
        if not _COST.fullmatch(token):
            raise ProtocolError(f"bad cost {token!r}", 7)
        return RemoteResponse.success(int(token))
    if body.startswith(b"ERR "):
        message = body[4:].decode("ascii")
        if not message:
            raise ProtocolError("empty error message", 8)
        return RemoteResponse.failure(message)
    raise ProtocolError("expected 'OK ' or 'ERR '", 4)


# -- serving -----------------------------------------------------------------

Service = Callable[[RemoteRequest], int]


def _sanitize(text: str) -> str:
    out = "".join(c if 0x20 <= ord(c) <= 0x7E else "?" for c in text)
    return out or "error"


def answer(line: bytes, service: Service) -> bytes:
    """Compute the single response line for one request line. Never raises."""
    try:
        request = decode_request(line)
    except ProtocolError as exc:
        return encode_response(RemoteResponse.failure(_sanitize(f"protocol error: {exc}")))
    try:
        cost = service(request)
    except LookupError:
        return encode_response(RemoteResponse.failure("no such service"))
    except Exception as exc:
        return encode_response(RemoteResponse.failure(_sanitize(str(exc) or type(exc).__name__)))
    return encode_response(RemoteResponse.success(int(cost)))


_LOOPBACK: dict[str, Service] = {}
_LOOPBACK_LOCK = threading.Lock()


def _loopback_name(endpoint: str) -> str | None:
    if endpoint == "loopback":
        return ""
    if endpoint.startswith("loopback:"):
        return endpoint[len("loopback:"):]
    return None


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host or not port.isdigit() or int(port) > 65535:
        raise TransportError(f"endpoint must be host:port or loopback, got {endpoint!r}")
    return host, int(port)


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        service = self.server.service  # type: ignore[attr-defined]
        while True:
            try:
                line = self.rfile.readline(MAX_LINE + 1)
            except OSError:
                return
            if not line:
                return
            if len(line) > MAX_LINE and not line.endswith(b"\n"):
                self.wfile.write(encode_response(RemoteResponse.failure("line too long")))
                return
            try:
                self.wfile.write(answer(line, service))
                self.wfile.flush()
            except OSError:
                return


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class PeerServer:
    """A running AC1 endpoint. Use :func:`serve_peer` to create one."""

    def __init__(self, endpoint: str, service: Service):
        self.service = service
        self._tcp: _Server | None = None
        self._thread: threading.Thread | None = None
        name = _loopback_name(endpoint)
        if name is not None:
            with _LOOPBACK_LOCK:
                if name in _LOOPBACK:
                    raise TransportError(f"loopback endpoint {endpoint!r} already served")
                _LOOPBACK[name] = service
            self.endpoint = endpoint
            self._loopback = name
            return
        self._loopback = None
        host, port = parse_endpoint(endpoint)
        try:
            self._tcp = _Server((host, port), _LineHandler)
        except OSError as exc:
            raise TransportError(f"cannot listen on {endpoint}: {exc}") from exc
        self._tcp.service = service  # type: ignore[attr-defined]
        bound_host, bound_port = self._tcp.server_address[:2]
        self.endpoint = f"{bound_host}:{bound_port}"
        self._thread = threading.Thread(target=self._tcp.serve_forever, name="ac1-server", daemon=True)
        self._thread.start()

    def close(self) -> None:
        if self._loopback is not None:
            with _LOOPBACK_LOCK:
                _LOOPBACK.pop(self._loopback, None)
            self._loopback = None
        if self._tcp is not None:
            self._tcp.shutdown()
            self._tcp.server_close()
            self._tcp = None

    def __enter__(self) -> PeerServer:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve_peer(endpoint: str, service: Service) -> PeerServer:
    return PeerServer(endpoint, service)


class PeerConnection:
    """A persistent client connection; responses arrive in request order."""

    def __init__(self, endpoint: str, timeout: float = 5.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self._loopback = _loopback_name(endpoint)
        self._sock = None
        self._file = None
        if self._loopback is None:
            host, port = parse_endpoint(endpoint)
            try:
                self._sock = socket.create_connection((host, port), timeout=timeout)
            except OSError as exc:
                raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
            self._file = self._sock.makefile("rb")

    def call(self, request: RemoteRequest) -> RemoteResponse:
        payload = encode_request(request)
        if self._loopback is not None:
            with _LOOPBACK_LOCK:
                service = _LOOPBACK.get(self._loopback)
            if service is None:
                raise TransportError(f"nothing is serving {self.endpoint!r}")
            return decode_response(answer(payload, service))
        if self._sock is None:
            raise TransportError("connection closed")
        try:
            self._sock.sendall(payload)
            line = self._file.readline(MAX_LINE + 1)
        except OSError as exc:
            raise TransportError(f"{self.endpoint}: {exc}") from exc
        if not line:
            raise TransportError(f"{self.endpoint} closed the connection")
        return decode_response(line)

    def close(self) -> None:
        if self._file is not None:
            self._file.close()
        if self._sock is not None:
            self._sock.close()
        self._sock = self._file = None

    def __enter__(self) -> PeerConnection:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def call_peer(endpoint: str, request: RemoteRequest, timeout: float = 5.0) -> RemoteResponse:
    with PeerConnection(endpoint, timeout) as conn:
        return conn.call(request)


__all__ = [
    "PeerConnection",
    "PeerServer",
    "ProtocolError",
    "RemoteRequest",
    "RemoteResponse",
    "TransportError",
    "answer",
    "call_peer",
    "decode_request",
    "decode_response",
    "encode_request",
    "encode_response",
    "serve_peer",
]
