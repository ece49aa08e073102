"""
NS Scheme (Successive Cancellation)
===================================

Query construction, answer evaluation and decoding for the layered two-level
code. Retrieving message k* works in three steps:

1. Precoding: every message W_k is replaced by W*_k = S_k W_k for a private
   uniform full-rank L×L matrix S_k.
2. Group-wise MDS coding: for each non-empty composition K not containing k*,
   a fresh segment of every member's W*_k is coded with the same (n, k) MDS code.
   The first m(K) coordinates are summed into layer |K|; the remaining
   m(K ∪ {k*}) coordinates are summed with a segment of W*_{k*} into layer |K|+1.
3. Placement: the m(J) symbols of every composition J are dealt round-robin to
   the N servers, so every server holds the same number of symbols and the
   placement pattern does not depend on k*.

Decoding walks the layers bottom-up: each group's top-layer sums complete its
summed codeword, which cancels the interference riding on the desired
segment one layer higher.

The same module carries the plan types shared with the NB scheme.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .algebra import FieldContext, Matrix, SeededRng, default_modulus, random_full_rank, solve_square
from .capacity_calc import SystemParams, ns_cost
from .exceptions import InternalConsistencyError, ParameterError, ProtocolError
from .mds_codes import MdsCode, complete, make_code
from .ns_params import NsParameterTable, build_table, reduction_factor

logger = logging.getLogger(__name__)

Composition = Tuple[int, ...]
RowKey = Tuple[Composition, int]


# --- Plan types shared by every scheme --------------------------------------


@dataclass(frozen=True, order=True)
class SymbolTag:
    """Placement of one answer symbol: layer (NS) or block (NB), composition, index."""

    server: int
    layer: int
    composition: Composition
    index: int


@dataclass(frozen=True)
class AnswerVector:
    server: int
    symbols: Matrix

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True, eq=False)
class QueryPlan:
    """
    Everything the user prepares before contacting the servers.

    queries[n] is the composite coefficient matrix sent to server n+1;
    coding[n] is its deterministic part before precoding, kept on the user
    side together with user_secret for decoding and auditing.
    """

    params: SystemParams
    scheme: str
    k_star: int
    L: int
    field: FieldContext
    queries: Tuple[Matrix, ...]
    manifest: Tuple[Tuple[SymbolTag, ...], ...]
    coding: Tuple[Matrix, ...]
    user_secret: Any = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.queries)

    @property
    def loads(self) -> List[int]:
        return [len(tags) for tags in self.manifest]

    @property
    def total_download(self) -> int:
        return sum(self.loads)

    @property
    def cost(self) -> Fraction:
        return Fraction(self.total_download, self.L)


def lexicographic_subsets(members: Sequence[int]) -> List[Composition]:
    """All non-empty subsets as sorted tuples, in lexicographic order."""
    subsets = []
    for size in range(1, len(members) + 1):
        subsets.extend(itertools.combinations(sorted(members), size))
    return sorted(subsets)


def sample_precoders(ctx: FieldContext, messages: Sequence[int], L: int,
                     rng: SeededRng) -> Dict[int, Matrix]:
    """One uniform full-rank L×L matrix per message, drawn in message order."""
    return {k: random_full_rank(ctx, L, rng) for k in messages}


def compose_queries(ctx: FieldContext, coding: Matrix, precoders: Mapping[int, Matrix], L: int) -> Matrix:
    """Q = C · blockdiag(S_1, ..., S_K2), computed one message block at a time."""
    composite = ctx.zeros(coding.shape[0], coding.shape[1])
    for k, precoder in precoders.items():
        cols = slice((k - 1) * L, k * L)
        block = coding[:, cols]
        if np.any(block):
            composite[:, cols] = ctx.matmul(block, precoder)
    return composite


def assemble_plan(params: SystemParams, scheme: str, k_star: int, L: int, ctx: FieldContext,
                  tags: Sequence[SymbolTag], coding: Matrix, precoders: Mapping[int, Matrix],
                  user_secret: Any) -> QueryPlan:
    """Split globally ordered rows by server and compose the transmitted queries."""
    composite = compose_queries(ctx, coding, precoders, L)
    per_server: List[List[int]] = [[] for _ in range(params.N)]
    for row, tag in enumerate(tags):
        per_server[tag.server - 1].append(row)

    loads = {len(rows) for rows in per_server}
    if len(loads) != 1:
        raise InternalConsistencyError(f"Uneven server loads {sorted(loads)} for {params.label}")

    queries, manifest, coding_parts = [], [], []
    for rows in per_server:
        index = np.array(rows, dtype=np.int64)
        queries.append(composite[index])
        coding_parts.append(coding[index])
        manifest.append(tuple(tags[r] for r in rows))
    for matrix in queries + coding_parts:
        matrix.setflags(write=False)

    plan = QueryPlan(params=params, scheme=scheme, k_star=k_star, L=L, field=ctx,
                     queries=tuple(queries), manifest=tuple(manifest), coding=tuple(coding_parts),
                     user_secret=user_secret)
    logger.debug(f"{scheme} plan for {params.label}, k*={k_star}: L={L}, q={ctx.q}, "
                 f"{plan.loads[0]} symbols per server")
    return plan


def answer(query: Matrix, messages: Matrix, ctx: FieldContext, server: int = 1) -> AnswerVector:
    """
    Evaluate one server's answer: Q_n · concat(W_1, ..., W_K2).

    Args:
        query: the server's composite matrix, ℓ_n × K2·L
        messages: K2×L message matrix or its row-major concatenation
        ctx: field of the plan
        server: 1-based server id carried into the answer

    Returns:
        AnswerVector of length ℓ_n
    """
    stacked = np.asarray(messages).reshape(-1)
    if query.shape[1] != stacked.shape[0]:
        raise ProtocolError(f"Query has {query.shape[1]} columns but the store holds {stacked.shape[0]} symbols")
    return AnswerVector(server=server, symbols=ctx.matmul(query, stacked))


def collect_answers(plan: QueryPlan, answers: Sequence[AnswerVector]) -> Dict[Tuple[int, Composition, int], Any]:
    """Map every answer symbol to its (layer, composition, index) tag."""
    if len(answers) != plan.N:
        raise ProtocolError(f"Expected {plan.N} answers, got {len(answers)}")
    by_server = {a.server: a for a in answers}
    if sorted(by_server) != list(range(1, plan.N + 1)):
        raise ProtocolError(f"Answers must come from servers 1..{plan.N}, got {sorted(by_server)}")

    values: Dict[Tuple[int, Composition, int], Any] = {}
    for n, tags in enumerate(plan.manifest, start=1):
        symbols = by_server[n].symbols
        if len(symbols) != len(tags):
            raise ProtocolError(f"Server {n} returned {len(symbols)} symbols, expected {len(tags)}")
        for tag, symbol in zip(tags, symbols):
            values[(tag.layer, tag.composition, tag.index)] = symbol
    return values


# --- NS layout --------------------------------------------------------------


@dataclass(frozen=True)
class CodingGroup:
    """One MDS-coded interference group for the retrieval in effect."""

    composition: Composition
    layer: int
    m: int
    n: int
    k: int
    segment_offsets: Dict[int, int]
    code: MdsCode = field(compare=False, repr=False)


@dataclass(frozen=True)
class NsLayout:
    """
    The deterministic skeleton of one NS retrieval: groups, desired-segment
    offsets and the symbol count of every composition. Compositions use
    global message ids.
    """

    messages: Tuple[int, ...]
    k_star: int
    L: int
    groups: Tuple[CodingGroup, ...]
    desired_offsets: Dict[Composition, int]
    sizes: Dict[Composition, int]

    @property
    def row_keys(self) -> List[RowKey]:
        """Every symbol as (composition, index), ordered by layer, composition, index."""
        ordered = sorted(self.sizes, key=lambda comp: (len(comp), comp))
        return [(comp, t) for comp in ordered for t in range(self.sizes[comp])]

    def coding_matrix(self, ctx: FieldContext, message_count: int) -> Tuple[List[RowKey], Matrix]:
        """
        Coefficients of every symbol over the precoded streams W*_1..W*_K.

        Returns:
            (row keys, matrix with one row per key and message_count·L columns)
        """
        keys = self.row_keys
        coding = ctx.zeros(len(keys), message_count * self.L)
        starts: Dict[Composition, int] = {}
        for row, (comp, t) in enumerate(keys):
            if t == 0:
                starts[comp] = row
        groups = {g.composition: g for g in self.groups}

        for comp, size in self.sizes.items():
            rows = slice(starts[comp], starts[comp] + size)
            if self.k_star in comp:
                first = (self.k_star - 1) * self.L + self.desired_offsets[comp]
                coding[np.arange(starts[comp], starts[comp] + size), np.arange(first, first + size)] = 1
                base = tuple(k for k in comp if k != self.k_star)
                if not base:
                    continue
                group = groups[base]
                coords = slice(group.m, group.m + size)
            else:
                group = groups[comp]
                coords = slice(0, size)
            columns = np.transpose(group.code.generator[:, coords])
            for member, offset in group.segment_offsets.items():
                first = (member - 1) * self.L + offset
                coding[rows, first:first + group.k] = columns
        return keys, coding


def build_layout(table: NsParameterTable, k_star: int, messages: Sequence[int],
                 ctx: FieldContext) -> NsLayout:
    """
    Lay out the NS code of a (possibly scaled) parameter table.

    Args:
        table: parameter table whose local message i is messages[i-1]
        k_star: global id of the desired message
        messages: global ids covered by the table, high-privacy ones first
        ctx: field for the group codes

    Returns:
        NsLayout with groups and segment offsets assigned lexicographically
    """
    messages = tuple(messages)
    if k_star not in messages:
        raise ParameterError(f"Message {k_star} is not covered by this table")
    local = {g: i for i, g in enumerate(messages, start=1)}
    star = local[k_star]
    others = [k for k in range(1, len(messages) + 1) if k != star]

    def to_global(comp: Sequence[int]) -> Composition:
        return tuple(sorted(messages[i - 1] for i in comp))

    sizes: Dict[Composition, int] = {}
    for comp in lexicographic_subsets(range(1, len(messages) + 1)):
        size = table.m_of(comp)
        if size:
            sizes[to_global(comp)] = size

    desired_offsets: Dict[Composition, int] = {}
    offset = 0
    for comp in lexicographic_subsets(range(1, len(messages) + 1)):
        if star in comp and table.m_of(comp):
            desired_offsets[to_global(comp)] = offset
            offset += table.m_of(comp)
    if offset != table.L:
        raise InternalConsistencyError(f"Desired segments cover {offset} of {table.L} symbols")

    stream_used = {k: 0 for k in others}
    groups: List[CodingGroup] = []
    for comp in lexicographic_subsets(others):
        n, k = table.code_for(comp, star)
        if not n:
            continue
        m = table.m_of(comp)
        top_up = table.m_of(tuple(sorted(comp + (star,))))
        if n != m + top_up or k > m:
            raise InternalConsistencyError(f"Group {to_global(comp)} has (n, k, m) = ({n}, {k}, {m})")
        segments = {}
        for member in comp:
            segments[messages[member - 1]] = stream_used[member]
            stream_used[member] += k
        groups.append(CodingGroup(composition=to_global(comp), layer=len(comp), m=m, n=n, k=k,
                                  segment_offsets=segments, code=make_code(n, k, ctx)))

    overflow = {messages[k - 1]: used for k, used in stream_used.items() if used > table.L}
    if overflow:
        raise InternalConsistencyError(f"Interference segments overflow L={table.L}: {overflow}")
    groups.sort(key=lambda g: (g.layer, g.composition))
    return NsLayout(messages=messages, k_star=k_star, L=table.L, groups=tuple(groups),
                    desired_offsets=desired_offsets, sizes=sizes)


def decode_layout(ctx: FieldContext, layout: NsLayout, values: Mapping[RowKey, Any]) -> Matrix:
    """
    Successive cancellation on one NS layout.

    Args:
        ctx: field of the plan
        layout: the retrieval's layout
        values: observed symbol per (composition, index); symbols may be
            scalars or equal-length coefficient vectors

    Returns:
        The desired precoded stream W*_{k*}
    """
    singleton = (layout.k_star,)
    sample = np.asarray(values[(singleton, 0)])
    w_star = ctx.zeros(layout.L, sample.size).reshape((layout.L,) + sample.shape)

    def observed(comp: Composition, count: int) -> Matrix:
        return ctx.asarray([values[(comp, t)] for t in range(count)])

    size = layout.sizes[singleton]
    offset = layout.desired_offsets[singleton]
    w_star[offset:offset + size] = observed(singleton, size)

    for group in layout.groups:
        codeword = complete(group.code, list(enumerate(observed(group.composition, group.m))))
        target = tuple(sorted(group.composition + (layout.k_star,)))
        size = group.n - group.m
        if not size:
            continue
        offset = layout.desired_offsets[target]
        w_star[offset:offset + size] = (observed(target, size) - codeword[group.m:]) % ctx.q
    return w_star


# --- NS scheme entry points -------------------------------------------------


@dataclass(frozen=True)
class NsSecret:
    layout: NsLayout
    precoders: Dict[int, Matrix]


def resolve_reduction(p: SystemParams, natural: int) -> int:
    """The reduction in effect: p.reduction when set (must divide natural), else natural."""
    if p.reduction is None:
        return natural
    if natural % p.reduction:
        raise ParameterError(f"Reduction {p.reduction} does not divide the segment GCD {natural} of {p.label}")
    return p.reduction


def resolve_field(p: SystemParams, max_code_length: int) -> FieldContext:
    if p.q is None:
        return FieldContext(default_modulus(max_code_length))
    if p.q <= max_code_length:
        raise ParameterError(f"Modulus {p.q} must exceed the longest code length {max_code_length}")
    return FieldContext(p.q)


def scaled_table(p: SystemParams) -> NsParameterTable:
    return build_table(p).scaled(divisor=resolve_reduction(p, reduction_factor(p)))


def max_code_length(table: NsParameterTable) -> int:
    lengths = [n for c in table.classes.values() for n in (c.n1, c.n2) if n]
    return max(lengths, default=0)


def message_geometry(p: SystemParams) -> Tuple[int, FieldContext]:
    """(L, field) the NS scheme uses for these parameters, independent of k*."""
    table = scaled_table(p)
    return table.L, resolve_field(p, max_code_length(table))


def expected_download(p: SystemParams) -> Fraction:
    return message_geometry(p)[0] * ns_cost(p)


def build_query(p: SystemParams, k_star: int, rng: SeededRng) -> QueryPlan:
    """
    Build the NS query plan for retrieving message k_star.

    Args:
        p: system parameters (q and reduction default when None)
        k_star: desired message, 1..K2
        rng: randomness source; consumed only for the precoding matrices

    Returns:
        QueryPlan whose pattern depends only on p
    """
    if not 1 <= k_star <= p.K2:
        raise ParameterError(f"Desired message {k_star} outside 1..{p.K2}")
    table = scaled_table(p)
    ctx = resolve_field(p, max_code_length(table))
    layout = build_layout(table, k_star, list(p.messages), ctx)
    precoders = sample_precoders(ctx, list(p.messages), table.L, rng)

    keys, coding = layout.coding_matrix(ctx, p.K2)
    tags = [SymbolTag(server=t % p.N + 1, layer=len(comp), composition=comp, index=t) for comp, t in keys]
    return assemble_plan(p, "NS", k_star, table.L, ctx, tags, coding, precoders,
                         NsSecret(layout=layout, precoders=precoders))


def decode(plan: QueryPlan, answers: Sequence[AnswerVector]) -> Matrix:
    """
    Recover W_{k*} from all N answers of an NS plan.

    Raises ProtocolError on missing or short answers and CorruptionError when
    the over-determined interference sums are inconsistent.
    """
    secret: NsSecret = plan.user_secret
    values = collect_answers(plan, answers)
    by_key = {(comp, index): value for (_, comp, index), value in values.items()}
    w_star = decode_layout(plan.field, secret.layout, by_key)
    return solve_square(plan.field, secret.precoders[plan.k_star], w_star)
