"""Networked replica servers and the client-side exchange.

Wire format: each frame is a 4-byte big-endian length prefix followed by a
UTF-8 JSON payload of at most 2**24 bytes. Messages carry a "type" field
(hello / query / answer / error); unknown fields are ignored. Answer bits
travel as a '0'/'1' string so there is no endianness to argue about.

Servers are honest-but-curious: they evaluate queries against an immutable
replica and keep no per-client state. Download-cost accounting counts
answer payload bits only; framing overhead is tracked separately.
"""

from __future__ import annotations

import json
import socket
import socketserver
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import MessageStore
from .errors import (
    FetchTimeout,
    InvalidParams,
    LengthMismatch,
    MalformedFrame,
    OutOfRange,
    ProtocolError,
)
from .pir import PirAnswer, PirQuery, pir_answer

PROTO_VERSION = 1
MAX_FRAME = 1 << 24


def send_frame(sock: socket.socket, payload: dict) -> int:
    """Send one frame; returns the number of bytes written."""
    body = json.dumps(payload, separators=(",", ":"), sort_keys=True).encode("utf-8")
    if len(body) > MAX_FRAME:
        raise MalformedFrame(f"payload of {len(body)} bytes exceeds the frame limit")
    sock.sendall(struct.pack("!I", len(body)) + body)
    return 4 + len(body)


def _recv_exactly(sock: socket.socket, n: int) -> bytes | None:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_frame(sock: socket.socket) -> dict | None:
    """Read one frame; None on clean EOF."""
    header = _recv_exactly(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack("!I", header)
    if length > MAX_FRAME:
        raise MalformedFrame(f"announced frame of {length} bytes exceeds the limit")
    body = _recv_exactly(sock, length)
    if body is None:
        raise MalformedFrame("connection closed mid-frame")
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedFrame(f"undecodable frame: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedFrame("frame payload is not an object")
    return payload


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        store: MessageStore = self.server.store  # type: ignore[attr-defined]
        sock = self.request
        while True:
            try:
                message = recv_frame(sock)
            except MalformedFrame as exc:
                try:
                    send_frame(sock, {"type": "error", "code": "frame_too_large"
                                      if "limit" in str(exc) else "malformed",
                                      "detail": str(exc)})
                except OSError:
                    pass
                return
            if message is None:
                return
            kind = message.get("type")
            if kind == "hello":
                send_frame(
                    sock,
                    {
                        "type": "hello",
                        "proto_version": PROTO_VERSION,
                        "K": store.K,
                        "L": store.L,
                    },
                )
            elif kind == "query":
                session = message.get("session", "")
                combos = message.get("combos", [])
                try:
                    query = PirQuery(
                        server=0,
                        combos=tuple(
                            tuple((int(m), int(b)) for m, b in combo)
                            for combo in combos
                        ),
                    )
                    answer = pir_answer(query, store)
                except OutOfRange as exc:
                    send_frame(
                        sock, {"type": "error", "code": "range", "detail": str(exc)}
                    )
                    continue
                except (TypeError, ValueError) as exc:
                    send_frame(
                        sock,
                        {"type": "error", "code": "malformed", "detail": str(exc)},
                    )
                    return
                send_frame(
                    sock,
                    {
                        "type": "answer",
                        "session": session,
                        "bits": "".join(str(b) for b in answer.bits),
                    },
                )
            else:
                send_frame(
                    sock,
                    {"type": "error", "code": "malformed",
                     "detail": f"unknown type {kind!r}"},
                )
                return


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


@dataclass
class StoreServer:
    """A running replica; close() tears it down."""

    address: tuple[str, int]
    _server: _ThreadingServer
    _thread: threading.Thread

    def wait(self):
        self._thread.join()

    def close(self):
        self._server.shutdown()
        self._server.server_close()


def serve(store: MessageStore, bind=("127.0.0.1", 0)) -> StoreServer:
    """Serve a replica on a background thread; stateless between queries."""
    server = _ThreadingServer(bind, _Handler)
    server.store = store  # type: ignore[attr-defined]
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return StoreServer(address=server.server_address, _server=server, _thread=thread)


def _fetch_one(address, query: PirQuery, timeout: float, session: str):
    try:
        with socket.create_connection(address, timeout=timeout) as sock:
            sent = send_frame(
                sock,
                {
                    "type": "query",
                    "session": session,
                    "combos": [[list(pair) for pair in combo] for combo in query.combos],
                },
            )
            reply = recv_frame(sock)
    except (OSError, MalformedFrame) as exc:
        raise FetchTimeout(f"{address[0]}:{address[1]}") from exc
    if reply is None:
        raise FetchTimeout(f"{address[0]}:{address[1]}")
    if reply.get("type") == "error":
        raise ProtocolError(f"server {address} answered {reply.get('code')}: "
                            f"{reply.get('detail')}")
    if reply.get("type") != "answer" or reply.get("session") != session:
        raise ProtocolError(f"unexpected reply {reply.get('type')!r} from {address}")
    bits = reply.get("bits", "")
    if len(bits) != len(query.combos) or any(c not in "01" for c in bits):
        raise LengthMismatch(
            f"server {address} answered {len(bits)} bits for "
            f"{len(query.combos)} combos"
        )
    answer = PirAnswer(server=query.server, bits=tuple(int(c) for c in bits))
    frame_bytes = sent + 4 + len(
        json.dumps(reply, separators=(",", ":"), sort_keys=True).encode()
    )
    return answer, len(bits), frame_bytes


@dataclass
class RemoteTransport:
    """Client-side exchange against one endpoint per server index.

    Callable with a query list, like the in-process transport; accumulates
    answer-bit and framing-byte counters for wire accounting.
    """

    addresses: list[tuple[str, int]]
    timeout: float = 5.0
    answer_bits: int = 0
    frame_bytes: int = 0
    _serial: int = 0
    _pool: ThreadPoolExecutor | None = field(default=None, repr=False)

    def __call__(self, queries: list[PirQuery]) -> list[PirAnswer]:
        if len(queries) != len(self.addresses):
            raise InvalidParams(
                f"{len(queries)} queries for {len(self.addresses)} endpoints"
            )
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=max(len(self.addresses), 1))
        self._serial += 1
        session = f"{self._serial:08x}"
        futures = [
            self._pool.submit(_fetch_one, addr, query, self.timeout, session)
            for addr, query in zip(self.addresses, queries)
        ]
        answers = []
        for future in futures:
            answer, bits, frames = future.result()
            self.answer_bits += bits
            self.frame_bytes += frames
            answers.append(answer)
        return answers

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def fetch(addresses, queries: list[PirQuery], timeout: float = 5.0) -> list[PirAnswer]:
    """One-shot concurrent exchange; answers ordered like the queries."""
    transport = RemoteTransport(addresses=list(addresses), timeout=timeout)
    try:
        return transport(queries)
    finally:
        transport.close()


def hello(address, timeout: float = 5.0) -> dict:
    """Ask one server for its parameters."""
    try:
        with socket.create_connection(address, timeout=timeout) as sock:
            send_frame(sock, {"type": "hello"})
            reply = recv_frame(sock)
    except OSError as exc:
        raise FetchTimeout(f"{address[0]}:{address[1]}") from exc
    if not reply or reply.get("type") != "hello":
        raise ProtocolError(f"bad hello reply from {address}")
    return reply


STORE_MAGIC_LEN = 8  # two 4-byte big-endian fields: K, L


def store_to_bytes(store: MessageStore) -> bytes:
    """Binary store file: 8-byte header (K, L) then K * L/8 payload bytes."""
    if store.L % 8 != 0:
        raise InvalidParams("file storage needs L to be a multiple of 8")
    out = bytearray(struct.pack("!II", store.K, store.L))
    for bits in store.data:
        for i in range(0, store.L, 8):
            byte = 0
            for j in range(8):
                byte = (byte << 1) | bits[i + j]
            out.append(byte)
    return bytes(out)


def store_from_bytes(blob: bytes) -> MessageStore:
    if len(blob) < STORE_MAGIC_LEN:
        raise MalformedFrame("store file shorter than its header")
    K, L = struct.unpack("!II", blob[:STORE_MAGIC_LEN])
    if L % 8 != 0:
        raise MalformedFrame(f"stored L={L} is not a multiple of 8")
    need = STORE_MAGIC_LEN + K * L // 8
    if len(blob) != need:
        raise MalformedFrame(f"store file has {len(blob)} bytes, expected {need}")
    data = []
    offset = STORE_MAGIC_LEN
    for _ in range(K):
        bits = []
        for _ in range(L // 8):
            byte = blob[offset]
            offset += 1
            bits.extend((byte >> (7 - j)) & 1 for j in range(8))
        data.append(tuple(bits))
    return MessageStore(K=K, L=L, data=tuple(data))


def save_store(store: MessageStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(store_to_bytes(store))


def load_store(path) -> MessageStore:
    with open(path, "rb") as fh:
        return store_from_bytes(fh.read())
