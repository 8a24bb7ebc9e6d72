"""Store-and-forward package server and client over a length-prefixed protocol.

Every message is a frame: ``u32le length`` followed by ``length`` body bytes.

request body::   b"ERQ1" | device_id u64le | name_len u16le | name (UTF-8)
response body::  b"ERS1" | status u8 | payload_len u32le | payload

The server is deliberately untrusted: it hands back stored bytes verbatim and
never looks inside them.
"""

from __future__ import annotations

import logging
import re
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from .errors import BadRequest, NotFound, TransportError

logger = logging.getLogger(__name__)

MAX_FRAME = 1 << 26
REQUEST_MAGIC = b"ERQ1"
RESPONSE_MAGIC = b"ERS1"
MIN_REQUEST = 14

STATUS_OK = 0
STATUS_NOT_FOUND = 1
STATUS_BAD_REQUEST = 2

_NAME_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]{0,127}$")


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit() or not 0 <= int(port) <= 65535:
        raise ValueError(f"address must be host:port, got {address!r}")
    return host.strip("[]"), int(port)


def valid_name(name: str) -> bool:
    return bool(_NAME_RE.match(name))


# --- framing --------------------------------------------------------------

class FrameTooLarge(Exception):
    pass


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(min(n - len(buf), 1 << 16))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes | None:
    """Next frame body, or None on a clean close before a new frame."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack("<I", head)
    if length > MAX_FRAME:
        raise FrameTooLarge(length)
    body = _recv_exact(sock, length)
    if body is None:
        raise ConnectionError("connection closed mid-frame")
    return body


def write_frame(sock: socket.socket, body: bytes) -> None:
    if len(body) > MAX_FRAME:
        raise FrameTooLarge(len(body))
    sock.sendall(struct.pack("<I", len(body)) + body)


def encode_request(device_id: int, name: str) -> bytes:
    raw = name.encode("utf-8")
    return REQUEST_MAGIC + struct.pack("<QH", device_id, len(raw)) + raw


def decode_request(body: bytes) -> tuple[int, str] | None:
    """``(device_id, name)``, or None when the body is malformed."""
    if len(body) < MIN_REQUEST or body[:4] != REQUEST_MAGIC:
        return None
    device_id, name_len = struct.unpack_from("<QH", body, 4)
    if len(body) != MIN_REQUEST + name_len:
        return None
    try:
        name = body[MIN_REQUEST:].decode("utf-8")
    except UnicodeDecodeError:
        return None
    return device_id, name


def encode_response(status: int, payload: bytes = b"") -> bytes:
    return RESPONSE_MAGIC + struct.pack("<BI", status, len(payload)) + payload


def decode_response(body: bytes) -> tuple[int, bytes]:
    if len(body) < 9 or body[:4] != RESPONSE_MAGIC:
        raise TransportError("malformed response frame")
    status, length = struct.unpack_from("<BI", body, 4)
    if len(body) != 9 + length:
        raise TransportError("response payload length mismatch")
    return status, body[9:]


# --- store ----------------------------------------------------------------

@dataclass(frozen=True)
class PackageStore:
    """Directory of ``<device_id hex>_<name>.eric`` files."""

    root: Path

    def __post_init__(self) -> None:
        object.__setattr__(self, "root", Path(self.root))

    def path_for(self, device_id: int, name: str) -> Path:
        if not valid_name(name):
            raise ValueError(f"invalid package name {name!r}")
        return self.root / f"{device_id:016x}_{name}.eric"

    def put(self, device_id: int, name: str, data: bytes) -> Path:
        path = self.path_for(device_id, name)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        return path

    def get(self, device_id: int, name: str) -> bytes | None:
        try:
            return self.path_for(device_id, name).read_bytes()
        except (FileNotFoundError, IsADirectoryError):
            return None


# --- server ---------------------------------------------------------------

class _Handler(socketserver.BaseRequestHandler):
    server: "PackageServer"

    def handle(self) -> None:
        sock = self.request
        while True:
            try:
                body = read_frame(sock)
            except FrameTooLarge as exc:
                logger.info("closing %s: oversize frame (%s bytes)", self.client_address, exc)
                return
            except (ConnectionError, OSError):
                return
            if body is None:
                return
            try:
                write_frame(sock, self.server.respond(body))
            except (FrameTooLarge, OSError):
                return


class PackageServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True
    request_queue_size = 64

    def __init__(self, address: tuple[str, int], store: PackageStore) -> None:
        self.store = store
        super().__init__(address, _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def respond(self, body: bytes) -> bytes:
        request = decode_request(body)
        if request is None:
            return encode_response(STATUS_BAD_REQUEST)
        device_id, name = request
        if not valid_name(name):
            return encode_response(STATUS_BAD_REQUEST)
        data = self.store.get(device_id, name)
        if data is None:
            return encode_response(STATUS_NOT_FOUND)
        return encode_response(STATUS_OK, data)


def make_server(address: str, store: PackageStore) -> PackageServer:
    return PackageServer(parse_address(address), store)


def serve(address: str, store: PackageStore) -> None:
    with make_server(address, store) as server:
        logger.info("serving %s on %s", store.root, server.address)
        server.serve_forever()


def serve_in_background(address: str, store: PackageStore) -> PackageServer:
    """Start a server thread; stop it with ``server.shutdown()``."""
    server = make_server(address, store)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


# --- client ---------------------------------------------------------------

def fetch(address: str, device_id: int, name: str, timeout: float = 10.0) -> bytes:
    host, port = parse_address(address)
    try:
        with socket.create_connection((host, port), timeout=timeout) as sock:
            write_frame(sock, encode_request(device_id, name))
            body = read_frame(sock)
    except (OSError, ConnectionError, FrameTooLarge) as exc:
        raise TransportError(f"{address}: {exc}") from exc
    if body is None:
        raise TransportError(f"{address}: connection closed before a response")
    status, payload = decode_response(body)
    if status == STATUS_OK:
        return payload
    if status == STATUS_NOT_FOUND:
        raise NotFound(f"no package {name!r} for device {device_id:#x}")
    if status == STATUS_BAD_REQUEST:
        raise BadRequest(f"server rejected request for {name!r}")
    raise TransportError(f"unknown response status {status}")
