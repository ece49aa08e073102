"""
Tests for the wire format, the replica servers and full retrievals
"""

from fractions import Fraction

import numpy as np
import pytest

from two_level_pir.algebra import FieldContext, SeededRng
from two_level_pir.capacity_calc import SystemParams, nb_cost, ns_cost
from two_level_pir.config import DEFAULT_SEED, SEED_ENV_VAR, WIRE_MAGIC
from two_level_pir.exceptions import ParameterError, ProtocolError, RetrievalError
from two_level_pir.net_harness import (
    HEADER, MessageKind, ReplicaServer, ServerPool, WireMessage, decode_message, encode_message,
    message_store, resolve_seed, retrieve, serve,
)
from two_level_pir.ns_engine import AnswerVector

GOLDEN = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)


# ---------------------------------------------------------
# Wire format
# ---------------------------------------------------------

def test_query_frame_layout():
    payload = np.arange(6, dtype=np.int64).reshape(2, 3)
    data = encode_message(WireMessage(MessageKind.QUERY, 2, 4, 3, 7, payload))
    assert data[:8] == WIRE_MAGIC
    assert len(data) == HEADER.size + 6 * 8

    message = decode_message(data)
    assert message.kind is MessageKind.QUERY
    assert (message.server, message.k_count, message.L, message.q) == (2, 4, 3, 7)
    assert np.array_equal(message.payload, payload)


def test_answer_payload_is_flat():
    data = encode_message(WireMessage(MessageKind.ANSWER, 1, 4, 3, 7, np.array([1, 2, 3])))
    assert decode_message(data).payload.shape == (3,)


def test_large_field_symbols_survive_framing():
    q = 2 ** 61 - 1
    payload = np.array([[q - 1, 0, 12345678901234]], dtype=object)
    message = decode_message(encode_message(WireMessage(MessageKind.QUERY, 1, 1, 3, q, payload)))
    assert [int(v) for v in message.payload[0]] == [q - 1, 0, 12345678901234]


def valid_frame():
    return encode_message(WireMessage(MessageKind.QUERY, 1, 1, 2, 7, np.array([[1, 2]])))


def test_bad_magic_rejected():
    data = b"NOTPIR!\0" + valid_frame()[8:]
    with pytest.raises(ProtocolError):
        decode_message(data)


def test_truncated_payload_rejected():
    with pytest.raises(ProtocolError):
        decode_message(valid_frame()[:-3])


def test_unknown_kind_rejected():
    magic, version, _, *rest = HEADER.unpack(valid_frame()[:HEADER.size])
    data = HEADER.pack(magic, version, 9, *rest) + valid_frame()[HEADER.size:]
    with pytest.raises(ProtocolError):
        decode_message(data)


def test_symbol_outside_field_rejected():
    data = encode_message(WireMessage(MessageKind.QUERY, 1, 1, 2, 7, np.array([[1, 9]])))
    with pytest.raises(ProtocolError):
        decode_message(data)


# ---------------------------------------------------------
# Replica servers
# ---------------------------------------------------------

def make_replica():
    ctx = FieldContext(7)
    store = SeededRng(1).field_matrix(ctx, 2, 3)
    return ReplicaServer(1, store, ctx), store, ctx


def test_replica_answers_query():
    replica, store, ctx = make_replica()
    query = np.array([[1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 0, 1]])
    response = decode_message(replica.handle(encode_message(WireMessage(MessageKind.QUERY, 1, 2, 3, 7, query))))
    assert response.kind is MessageKind.ANSWER
    assert list(response.payload) == [store[0, 0], store[1, 2]]


@pytest.mark.parametrize("server, k_count, L, q", [(2, 2, 3, 7), (1, 3, 3, 7), (1, 2, 4, 7), (1, 2, 3, 11)])
def test_replica_rejects_mismatched_query(server, k_count, L, q):
    replica, _, _ = make_replica()
    query = np.zeros((1, k_count * L), dtype=np.int64)
    with pytest.raises(ProtocolError):
        replica.handle(encode_message(WireMessage(MessageKind.QUERY, server, k_count, L, q, query)))


def test_replica_rejects_answer_frames():
    replica, _, _ = make_replica()
    with pytest.raises(ProtocolError):
        replica.handle(encode_message(WireMessage(MessageKind.ANSWER, 1, 2, 3, 7, np.array([1]))))


def test_tcp_pool_reports_rejected_query():
    ctx = FieldContext(7)
    store = SeededRng(1).field_matrix(ctx, 2, 3)
    bad = encode_message(WireMessage(MessageKind.QUERY, 1, 2, 4, 7, np.zeros((1, 8), dtype=np.int64)))
    with ServerPool(store, ctx, N=1, transport="tcp") as pool:
        with pytest.raises(ProtocolError):
            pool.exchange([bad])


def test_served_pool_is_read_only_and_stoppable():
    ctx = FieldContext(7)
    store = SeededRng(1).field_matrix(ctx, 2, 3)
    pool = serve(store, ctx, N=2)
    try:
        assert not pool.replicas[0].store.flags.writeable
        assert pool.replicas[0].store is pool.replicas[1].store
        query = encode_message(WireMessage(MessageKind.QUERY, 1, 2, 3, 7, np.ones((1, 6), dtype=np.int64)))
        second = encode_message(WireMessage(MessageKind.QUERY, 2, 2, 3, 7, np.ones((1, 6), dtype=np.int64)))
        first, other = pool.exchange([query, second])
        assert decode_message(first).payload[0] == decode_message(other).payload[0] == int(store.sum()) % 7
    finally:
        pool.stop()


def test_unknown_transport_rejected():
    ctx = FieldContext(7)
    with pytest.raises(ParameterError):
        ServerPool(np.zeros((1, 1), dtype=np.int64), ctx, N=1, transport="udp")


# ---------------------------------------------------------
# Full retrievals
# ---------------------------------------------------------

@pytest.mark.parametrize("scheme", ["NS", "NB"])
def test_golden_retrieval(scheme):
    for k_star in GOLDEN.messages:
        transcript = retrieve(GOLDEN, scheme, k_star, seed=7)
        assert transcript.recovered
        assert transcript.L == 64
        assert transcript.downloaded_symbols == 116
        assert [s.downloaded_symbols for s in transcript.servers] == [29, 29, 29, 29]
        assert transcript.rate == Fraction(16, 29)
        assert transcript.cost_matches


def test_traffic_counts_whole_frames():
    transcript = retrieve(GOLDEN, "NS", 1, seed=7)
    # 29 answer symbols and 29 x 256 query coefficients per server
    assert transcript.downloaded_bytes == 4 * (HEADER.size + 29 * 8)
    assert transcript.uploaded_bytes == 4 * (HEADER.size + 29 * 256 * 8)
    assert transcript.servers[0].to_dict()["downloaded_bytes"] == HEADER.size + 29 * 8


def test_three_server_costs():
    p = SystemParams(3, 2, 2, 1, 3)
    ns = retrieve(p, "ns", 3, seed=1)
    nb = retrieve(p, "nb", 3, seed=1)
    assert Fraction(ns.downloaded_symbols, ns.L) == ns_cost(p) == Fraction(19, 9)
    assert Fraction(nb.downloaded_symbols, nb.L) == nb_cost(p) == 2
    assert nb.downloaded_symbols == 54


def test_single_server_single_message():
    transcript = retrieve(SystemParams(1, 1, 1, 1, 1), "NS", 1, seed=3)
    assert transcript.L == 1
    assert transcript.downloaded_symbols == 1


@pytest.mark.parametrize("seed", range(5))
def test_transports_agree(seed):
    inproc = retrieve(GOLDEN, "NS", 2, seed=seed, transport="inproc")
    tcp = retrieve(GOLDEN, "NS", 2, seed=seed, transport="tcp")
    assert inproc == tcp
    assert [s.answer_digest for s in inproc.servers] == [s.answer_digest for s in tcp.servers]
    assert inproc.transport == "inproc" and tcp.transport == "tcp"


def test_same_seed_reproduces_transcript():
    first = retrieve(GOLDEN, "NB", 4, seed=99)
    second = retrieve(GOLDEN, "NB", 4, seed=99)
    assert first == second
    assert first.to_dict()["recovered_sha256"] == second.to_dict()["recovered_sha256"]


def test_transcript_dict_keys():
    data = retrieve(GOLDEN, "NS", 1, seed=5).to_dict()
    assert set(data) == {"params", "scheme", "k_star", "seed", "transport", "L", "downloaded", "rate",
                         "recovered", "servers", "recovered_sha256"}
    assert data["rate"] == "16/29"
    assert len(data["servers"]) == 4


def test_store_uses_its_own_stream():
    ctx = FieldContext(29)
    store = message_store(GOLDEN, 64, ctx, 7)
    assert store.shape == (4, 64)
    assert np.array_equal(store, SeededRng(7, 0).field_matrix(ctx, 4, 64))


def test_unknown_scheme_rejected():
    with pytest.raises(ParameterError):
        retrieve(GOLDEN, "XX", 1, seed=1)


def test_decode_failure_raises_retrieval_error(monkeypatch):
    from two_level_pir import ns_engine

    original = ns_engine.answer

    def tampered(query, messages, ctx, server=1):
        result = original(query, messages, ctx, server)
        if server != 1:
            return result
        symbols = (result.symbols + 1) % ctx.q
        return AnswerVector(server=server, symbols=symbols)

    monkeypatch.setattr(ns_engine, "answer", tampered)
    with pytest.raises(RetrievalError) as info:
        retrieve(GOLDEN, "NS", 3, seed=1)
    assert info.value.diagnostics["scheme"] == "NS"
    assert info.value.diagnostics["loads"] == [29, 29, 29, 29]


# ---------------------------------------------------------
# Seed resolution
# ---------------------------------------------------------

def test_seed_precedence(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "0x10")
    assert resolve_seed(5) == 5
    assert resolve_seed() == 16
    monkeypatch.delenv(SEED_ENV_VAR)
    assert resolve_seed() == DEFAULT_SEED


def test_invalid_seed_variable(monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "forty-two")
    with pytest.raises(ParameterError):
        resolve_seed()
