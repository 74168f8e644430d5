from __future__ import annotations

import random
import socket

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autocompose.errors import ProtocolError, TransportError
from autocompose.transport import (
    PeerConnection,
    RemoteRequest,
    RemoteResponse,
    call_peer,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
    serve_peer,
)

PRICES = {1: 100, 2: 50, 3: 8, 6: 12}


def service(req: RemoteRequest) -> int:
    if req.service_id not in {"c-2-3-6", "item-1", "item-2"}:
        raise LookupError(req.service_id)
    return sum(PRICES[i] for i in req.items)


def test_request_examples():
    assert encode_request(RemoteRequest("c-2-3-6", (2, 3, 6))) == b"AC1 REQ c-2-3-6 2,3,6\n"
    assert decode_request(b"AC1 REQ x 1\n") == RemoteRequest("x", (1,))
    with pytest.raises(ProtocolError) as info:
        decode_request(b"AC2 REQ x 1\n")
    assert "version" in str(info.value)


def test_response_examples():
    assert encode_response(RemoteResponse.success(150)) == b"AC1 OK 150\n"
    assert encode_response(RemoteResponse.failure("no such service")) == b"AC1 ERR no such service\n"
    with pytest.raises(ProtocolError):
        decode_response(b"AC1 OK abc\n")


@pytest.mark.parametrize("line,offset", [
    (b"AC1 REQ x 1", 11),
    (b"AC1 REQ x 2,1\n", 12),
    (b"AC1 REQ x 01\n", 10),
    (b"AC1 REQ  1\n", 8),
    (b"AC1 PUT x 1\n", 4),
    (b"AC1 REQ x\n", 9),
    (b"AC1 REQ x 1\x00\n", 11),
])
def test_error_offsets(line, offset):
    with pytest.raises(ProtocolError) as info:
        decode_request(line)
    assert info.value.offset == offset


def test_encode_rejects_invalid():
    for bad in (RemoteRequest("x", ()), RemoteRequest("a b", (1,)), RemoteRequest("x", (2, 1)),
                RemoteRequest("x", (1,), 2)):
        with pytest.raises(ProtocolError):
            encode_request(bad)
    for bad in (RemoteResponse(True, None, None), RemoteResponse(False, 3, "x"), RemoteResponse.failure("a\nb"),
                RemoteResponse.success(-1)):
        with pytest.raises(ProtocolError):
            encode_response(bad)


service_ids = st.text(st.characters(min_codepoint=0x21, max_codepoint=0x7E), min_size=1, max_size=20)
item_lists = st.sets(st.integers(1, 10**6), min_size=1, max_size=12).map(lambda s: tuple(sorted(s)))
messages = st.text(st.characters(min_codepoint=0x20, max_codepoint=0x7E), min_size=1, max_size=60)


@settings(max_examples=300, deadline=None)
@given(service_ids, item_lists)
def test_request_round_trip(sid, items):
    r = RemoteRequest(sid, items)
    assert decode_request(encode_request(r)) == r


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 10**12) | messages)
def test_response_round_trip(value):
    r = RemoteResponse.success(value) if isinstance(value, int) else RemoteResponse.failure(value)
    assert decode_response(encode_response(r)) == r


@settings(max_examples=500, deadline=None)
@given(st.binary(max_size=64))
def test_fuzz_never_crashes(data):
    for decode in (decode_request, decode_response):
        try:
            decode(data)
        except ProtocolError as exc:
            assert 0 <= exc.offset <= len(data)


def test_loopback():
    with serve_peer("loopback:t1", service):
        assert call_peer("loopback:t1", RemoteRequest("c-2-3-6", (2, 3, 6))) == RemoteResponse.success(70)
        assert call_peer("loopback:t1", RemoteRequest("zzz", (1,))) == RemoteResponse.failure("no such service")
    with pytest.raises(TransportError):
        call_peer("loopback:t1", RemoteRequest("c-2-3-6", (2,)))


def test_tcp_server_order_and_errors():
    with serve_peer("127.0.0.1:0", service) as server:
        with PeerConnection(server.endpoint, timeout=2) as conn:
            got = [conn.call(RemoteRequest("item-1", (1,))), conn.call(RemoteRequest("nope", (1,))),
                   conn.call(RemoteRequest("item-2", (2,)))]
        assert got == [RemoteResponse.success(100), RemoteResponse.failure("no such service"),
                       RemoteResponse.success(50)]
        # malformed input gets one structured error line per line sent
        host, port = server.endpoint.rsplit(":", 1)
        with socket.create_connection((host, int(port)), timeout=2) as s:
            s.sendall(b"garbage\nAC1 REQ item-1 1\n")
            f = s.makefile("rb")
            first, second = f.readline(), f.readline()
        assert first.startswith(b"AC1 ERR protocol error")
        assert second == b"AC1 OK 100\n"


def test_closed_endpoint_is_transport_error():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    with pytest.raises(TransportError) as info:
        call_peer(f"127.0.0.1:{port}", RemoteRequest("x", (1,)), timeout=1)
    assert not isinstance(info.value, ProtocolError)


def test_port_in_use():
    with serve_peer("127.0.0.1:0", service) as server:
        with pytest.raises(TransportError):
            serve_peer(server.endpoint, service)


def test_bad_endpoint():
    with pytest.raises(TransportError):
        call_peer("nowhere", RemoteRequest("x", (1,)))


def test_random_mutations_structured():
    rng = random.Random(3)
    base = encode_request(RemoteRequest("c-1-2", (1, 2)))
    for _ in range(2000):
        data = bytearray(base)
        for _ in range(rng.randint(1, 3)):
            data[rng.randrange(len(data))] = rng.randrange(256)
        try:
            decode_request(bytes(data))
        except ProtocolError:
            pass
