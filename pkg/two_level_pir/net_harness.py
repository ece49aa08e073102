"""
Multi-Server Harness
====================

Runs a complete retrieval against N replicated servers, either in-process
(one worker thread per server) or over loopback TCP (one threaded
socketserver per server), and records a transcript of the traffic.

Wire format, every field little-endian:

    magic     8 bytes   b"PIR2LVL\\0"
    header    8 × u64   version, kind, server id, K2, L, q, rows, cols
    payload   rows × cols × u64 symbols, row-major

Examples:
    p = SystemParams.parse("4,2:2,1:4")
    transcript = retrieve(p, "NS", k_star=3, seed=7)
    transcript.downloaded_symbols        # 116
"""

import logging
import os
import socket
import socketserver
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import nb_engine, ns_engine
from .algebra import FieldContext, Matrix, SeededRng
from .capacity_calc import SystemParams, fraction_string, nb_cost, ns_cost
from .config import (
    DEFAULT_PORT_BASE, DEFAULT_SEED, LOOPBACK_HOST, SEED_ENV_VAR, SOCKET_TIMEOUT, SYMBOL_BYTES,
    TRANSPORTS, WIRE_MAGIC, WIRE_VERSION,
)
from .exceptions import (
    CorruptionError, DegenerateSystemError, InsufficientInformationError, ParameterError,
    ProtocolError, RetrievalError, TransportError,
)
from .integrity import array_digest
from .ns_engine import AnswerVector, QueryPlan

logger = logging.getLogger(__name__)

HEADER = struct.Struct("<8s8Q")

STORE_STREAM = 0
PLAN_STREAM = 1


class MessageKind(IntEnum):
    QUERY = 1
    ANSWER = 2


@dataclass(frozen=True)
class WireMessage:
    kind: MessageKind
    server: int
    k_count: int
    L: int
    q: int
    payload: Matrix

    @property
    def shape(self) -> Tuple[int, int]:
        payload = np.asarray(self.payload)
        if payload.ndim == 1:
            return payload.shape[0], 1
        return payload.shape[0], payload.shape[1]


def encode_message(message: WireMessage) -> bytes:
    rows, cols = message.shape
    header = HEADER.pack(WIRE_MAGIC, WIRE_VERSION, int(message.kind), message.server,
                         message.k_count, message.L, message.q, rows, cols)
    payload = np.asarray(message.payload)
    if payload.dtype == object:
        payload = payload.astype(np.uint64)
    return header + np.ascontiguousarray(payload.reshape(rows, cols), dtype="<u8").tobytes()


def decode_header(header: bytes) -> Tuple[MessageKind, int, int, int, int, int, int]:
    """Validate a header and return (kind, server, K2, L, q, rows, cols)."""
    if len(header) != HEADER.size:
        raise ProtocolError(f"Header must be {HEADER.size} bytes, got {len(header)}")
    magic, version, kind, server, k_count, L, q, rows, cols = HEADER.unpack(header)
    if magic != WIRE_MAGIC:
        raise ProtocolError(f"Bad magic {magic!r}")
    if version != WIRE_VERSION:
        raise ProtocolError(f"Unsupported wire version {version}")
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise ProtocolError(f"Unknown message kind {kind}")
    return kind, server, k_count, L, q, rows, cols


def decode_message(data: bytes) -> WireMessage:
    kind, server, k_count, L, q, rows, cols = decode_header(data[:HEADER.size])
    body = data[HEADER.size:]
    if len(body) != rows * cols * SYMBOL_BYTES:
        raise ProtocolError(f"Payload holds {len(body)} bytes, header announces {rows}x{cols} symbols")
    payload = np.frombuffer(body, dtype="<u8").reshape(rows, cols)
    if payload.size and int(payload.max()) >= q:
        raise ProtocolError(f"Payload symbol outside F_{q}")
    storage = payload.astype(np.int64) if q < 2 ** 31 else payload.astype(object)
    if kind is MessageKind.ANSWER:
        storage = storage.reshape(-1)
    return WireMessage(kind=kind, server=server, k_count=k_count, L=L, q=q, payload=storage)


def read_exact(sock: socket.socket, size: int) -> bytes:
    chunks, remaining = [], size
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ProtocolError(f"Connection closed with {remaining} of {size} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> bytes:
    """Read one framed message from a socket and return its raw bytes."""
    header = read_exact(sock, HEADER.size)
    _, _, _, _, _, rows, cols = decode_header(header)
    return header + read_exact(sock, rows * cols * SYMBOL_BYTES)


class ReplicaServer:
    """One server holding a full replica of the K2 messages."""

    def __init__(self, server_id: int, store: Matrix, ctx: FieldContext):
        self.server_id = server_id
        self.store = store
        self.field = ctx

    def handle(self, data: bytes) -> bytes:
        request = decode_message(data)
        k_count, L = self.store.shape
        if request.kind is not MessageKind.QUERY:
            raise ProtocolError(f"Server {self.server_id} expected a QUERY, got {request.kind.name}")
        if request.server != self.server_id:
            raise ProtocolError(f"Query for server {request.server} delivered to server {self.server_id}")
        if (request.k_count, request.L, request.q) != (k_count, L, self.field.q):
            raise ProtocolError(
                f"Server {self.server_id} stores K2={k_count}, L={L}, q={self.field.q}; query announces "
                f"K2={request.k_count}, L={request.L}, q={request.q}")

        result = ns_engine.answer(request.payload, self.store, self.field, server=self.server_id)
        return encode_message(WireMessage(MessageKind.ANSWER, self.server_id, k_count, L,
                                          self.field.q, result.symbols))


class _ReplicaRequestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        replica: ReplicaServer = self.server.replica
        try:
            request = read_message(self.request)
            self.request.sendall(replica.handle(request))
        except ProtocolError as e:
            logger.warning(f"Server {replica.server_id} rejected a request: {str(e)}")


class _ReplicaTCPServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: Tuple[str, int], replica: ReplicaServer):
        self.replica = replica
        super().__init__(address, _ReplicaRequestHandler)


class ServerPool:
    """
    N replica servers behind one transport. Use as a context manager.

    Examples:
        with ServerPool(store, ctx, N=4, transport="tcp") as pool:
            responses = pool.exchange(requests)
    """

    def __init__(self, store: Matrix, ctx: FieldContext, N: int, transport: str = "inproc",
                 port_base: int = DEFAULT_PORT_BASE, host: str = LOOPBACK_HOST):
        if transport not in TRANSPORTS:
            raise ParameterError(f"Unknown transport '{transport}', expected one of {TRANSPORTS}")
        store = np.array(store)
        store.setflags(write=False)
        self.logger = logging.getLogger(__name__)
        self.transport = transport
        self.host = host
        self.port_base = port_base
        self.replicas = [ReplicaServer(n, store, ctx) for n in range(1, N + 1)]
        self._servers: List[_ReplicaTCPServer] = []
        self._threads: List[threading.Thread] = []
        self._executor: Optional[ThreadPoolExecutor] = None

    @property
    def addresses(self) -> List[Tuple[str, int]]:
        return [server.server_address[:2] for server in self._servers]

    def start(self) -> "ServerPool":
        self._executor = ThreadPoolExecutor(max_workers=len(self.replicas), thread_name_prefix="pir-server")
        if self.transport == "tcp":
            for replica in self.replicas:
                port = self.port_base + replica.server_id if self.port_base else 0
                try:
                    server = _ReplicaTCPServer((self.host, port), replica)
                except OSError as e:
                    self.stop()
                    raise TransportError(f"Cannot bind server {replica.server_id} to {self.host}:{port}: {str(e)}")
                thread = threading.Thread(target=server.serve_forever, daemon=True,
                                          name=f"pir-tcp-{replica.server_id}")
                thread.start()
                self._servers.append(server)
                self._threads.append(thread)
            self.logger.debug(f"Started {len(self._servers)} loopback servers on {self.addresses}")
        return self

    def stop(self) -> None:
        for server in self._servers:
            server.shutdown()
            server.server_close()
        for thread in self._threads:
            thread.join(timeout=SOCKET_TIMEOUT)
        self._servers, self._threads = [], []
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "ServerPool":
        return self.start()

    def __exit__(self, exc_type, exc, tb) -> None:
        self.stop()

    def _send_tcp(self, index: int, data: bytes) -> bytes:
        address = self._servers[index].server_address[:2]
        try:
            with socket.create_connection(address, timeout=SOCKET_TIMEOUT) as sock:
                sock.sendall(data)
                return read_message(sock)
        except ProtocolError:
            raise ProtocolError(f"Server {index + 1} rejected the query")
        except OSError as e:
            raise TransportError(f"Exchange with server {index + 1} at {address} failed: {str(e)}")

    def exchange(self, requests: Sequence[bytes]) -> List[bytes]:
        """Send request n to server n+1 concurrently and wait for every response."""
        if self._executor is None:
            raise TransportError("Server pool is not running")
        if len(requests) != len(self.replicas):
            raise ProtocolError(f"Expected {len(self.replicas)} requests, got {len(requests)}")
        if self.transport == "tcp":
            send: Callable[[int, bytes], bytes] = self._send_tcp
        else:
            send = lambda index, data: self.replicas[index].handle(data)
        futures = [self._executor.submit(send, index, data) for index, data in enumerate(requests)]
        return [future.result() for future in futures]


def serve(messages: Matrix, ctx: FieldContext, N: int, transport: str = "inproc",
          port_base: int = DEFAULT_PORT_BASE) -> ServerPool:
    """Start N replicas of the message store; the caller stops the pool."""
    messages = np.asarray(messages)
    if messages.ndim != 2:
        raise ParameterError(f"Message store must be K2 x L, got shape {messages.shape}")
    return ServerPool(messages, ctx, N, transport, port_base).start()


def resolve_seed(seed: Optional[int] = None) -> int:
    """Explicit seed, else the PIR_SEED environment variable, else the default."""
    if seed is not None:
        return int(seed)
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw.strip(), 0)
    except ValueError:
        raise ParameterError(f"{SEED_ENV_VAR}={raw!r} is not an integer")


SCHEMES: Dict[str, Any] = {"NS": ns_engine, "NB": nb_engine}
COSTS = {"NS": ns_cost, "NB": nb_cost}


def scheme_engine(scheme: str) -> Any:
    try:
        return SCHEMES[scheme.upper()]
    except KeyError:
        raise ParameterError(f"Unknown scheme '{scheme}', expected NS or NB")


def message_store(p: SystemParams, L: int, ctx: FieldContext, seed: int) -> Matrix:
    """The K2 x L uniform message store every replica holds for this seed."""
    return SeededRng(seed, STORE_STREAM).field_matrix(ctx, p.K2, L)


@dataclass(frozen=True)
class ServerTraffic:
    server: int
    uploaded_bytes: int
    downloaded_bytes: int
    uploaded_symbols: int
    downloaded_symbols: int
    answer_digest: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "server": self.server,
            "uploaded_bytes": self.uploaded_bytes,
            "downloaded_bytes": self.downloaded_bytes,
            "uploaded_symbols": self.uploaded_symbols,
            "downloaded_symbols": self.downloaded_symbols,
            "answer_digest": self.answer_digest,
        }


@dataclass(frozen=True)
class RetrievalTranscript:
    """Record of one retrieval; wall time is ignored when comparing transcripts."""

    params: SystemParams
    scheme: str
    k_star: int
    seed: int
    transport: str = field(compare=False)
    L: int
    q: int
    servers: Tuple[ServerTraffic, ...]
    message_digest: str
    recovered: bool
    wall_seconds: float = field(compare=False, default=0.0)

    @property
    def downloaded_symbols(self) -> int:
        return sum(s.downloaded_symbols for s in self.servers)

    @property
    def uploaded_bytes(self) -> int:
        return sum(s.uploaded_bytes for s in self.servers)

    @property
    def downloaded_bytes(self) -> int:
        return sum(s.downloaded_bytes for s in self.servers)

    @property
    def rate(self) -> Fraction:
        return Fraction(self.L, self.downloaded_symbols)

    @property
    def cost_matches(self) -> bool:
        return Fraction(self.downloaded_symbols, self.L) == COSTS[self.scheme](self.params)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.label,
            "scheme": self.scheme,
            "k_star": self.k_star,
            "seed": self.seed,
            "transport": self.transport,
            "L": self.L,
            "downloaded": self.downloaded_symbols,
            "rate": fraction_string(self.rate),
            "recovered": self.recovered,
            "servers": [s.to_dict() for s in self.servers],
            "recovered_sha256": self.message_digest,
        }


def _query_requests(plan: QueryPlan) -> List[bytes]:
    return [encode_message(WireMessage(MessageKind.QUERY, n, plan.params.K2, plan.L, plan.field.q, query))
            for n, query in enumerate(plan.queries, start=1)]


def retrieve(p: SystemParams, scheme: str, k_star: int, seed: Optional[int] = None,
             transport: str = "inproc", port_base: int = DEFAULT_PORT_BASE) -> RetrievalTranscript:
    """
    Run one full retrieval and verify the recovered message.

    Args:
        p: system parameters
        scheme: "NS" or "NB"
        k_star: desired message, 1..K2
        seed: drives both the message store and the plan; resolved through
            resolve_seed when None
        transport: "inproc" or "tcp"
        port_base: first loopback port minus one for tcp; 0 picks free ports

    Returns:
        RetrievalTranscript with per-server traffic

    Raises:
        RetrievalError carrying diagnostics when decoding fails or the
        recovered message differs from the stored one
    """
    scheme = scheme.upper()
    engine = scheme_engine(scheme)
    seed = resolve_seed(seed)
    started = time.perf_counter()

    L, ctx = engine.message_geometry(p)
    store = message_store(p, L, ctx, seed)
    plan = engine.build_query(p, k_star, SeededRng(seed, PLAN_STREAM))
    requests = _query_requests(plan)

    with ServerPool(store, ctx, p.N, transport, port_base) as pool:
        responses = pool.exchange(requests)

    answers = []
    for n, response in enumerate(responses, start=1):
        message = decode_message(response)
        if message.kind is not MessageKind.ANSWER or message.server != n:
            raise ProtocolError(f"Unexpected {message.kind.name} from server {message.server} in slot {n}")
        answers.append(AnswerVector(server=n, symbols=message.payload))

    traffic = tuple(
        ServerTraffic(server=n, uploaded_bytes=len(request), downloaded_bytes=len(response),
                      uploaded_symbols=int(np.asarray(query).size), downloaded_symbols=len(answer),
                      answer_digest=array_digest(answer.symbols))
        for n, (request, response, query, answer) in enumerate(zip(requests, responses, plan.queries, answers),
                                                              start=1))
    diagnostics = {"params": p.label, "scheme": scheme, "k_star": k_star, "seed": seed,
                   "L": L, "q": ctx.q, "loads": plan.loads}

    try:
        recovered = engine.decode(plan, answers)
    except (CorruptionError, DegenerateSystemError, InsufficientInformationError) as e:
        logger.error(f"Decoding message {k_star} of {p.label} failed: {str(e)}")
        raise RetrievalError(f"Decoding message {k_star} failed: {str(e)}", diagnostics)

    stored = store[k_star - 1]
    if not np.array_equal(np.asarray(recovered, dtype=object) % ctx.q, np.asarray(stored, dtype=object)):
        mismatched = int(np.count_nonzero(np.asarray(recovered) != np.asarray(stored)))
        diagnostics["mismatched_symbols"] = mismatched
        logger.error(f"Recovered message {k_star} of {p.label} differs in {mismatched} symbols")
        raise RetrievalError(f"Recovered message {k_star} differs from the stored one in {mismatched} symbols",
                             diagnostics)

    transcript = RetrievalTranscript(params=p, scheme=scheme, k_star=k_star, seed=seed, transport=transport,
                                     L=L, q=ctx.q, servers=traffic, message_digest=array_digest(recovered),
                                     recovered=True, wall_seconds=time.perf_counter() - started)
    if transcript.downloaded_symbols != plan.total_download:
        logger.error(f"Download {transcript.downloaded_symbols} differs from planned {plan.total_download}")
        raise RetrievalError("Answers do not match the planned download", diagnostics)
    logger.info(f"{scheme} retrieval of message {k_star} from {p.label}: "
                f"{transcript.downloaded_symbols} symbols for L={L} over {transport}")
    return transcript
