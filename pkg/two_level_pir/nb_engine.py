"""
NB Scheme (Non-uniform Block Cancellation)
==========================================

The messages are split into Table-A (1..K1, privacy T1) and Table-B
(K1+1..K2, privacy T2). The table holding k* is coded as a plain NS code at
its own level (the "active" table); the other is pure interference, where
each composition is coded with an (m̃, T2 m̃ / N) MDS code. Both tables keep
the same sizes m̃ for either role, so the servers cannot tell them apart.

Answers are grouped in three blocks:

    block 1   the first T2/N of every Table-A composition
    block 2   the first T2/N of every Table-B composition
    block 3   the remaining Table-A and Table-B symbols, summed pairwise

The dedicated block of the pure table is exactly enough to complete every
pure codeword, which cancels the pure interference inside block 3 and leaves
the active table's NS code to decode.

Examples:
    p = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)
    plan = build_query(p, k_star=1, rng=SeededRng(42))
    plan.cost              # Fraction(29, 16)
    block_sizes(p)         # (24, 20, 72)
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import comb, gcd
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .algebra import FieldContext, Matrix, SeededRng, solve_square
from .capacity_calc import SystemParams, nb_cost
from .exceptions import InternalConsistencyError, ParameterError, UnsupportedConfigurationError
from .mds_codes import MdsCode, complete, make_code
from .ns_engine import (
    AnswerVector, Composition, NsLayout, QueryPlan, RowKey, SymbolTag, assemble_plan,
    build_layout, collect_answers, decode_layout, lexicographic_subsets, max_code_length,
    resolve_field, resolve_reduction, sample_precoders,
)
from .ns_params import NsParameterTable, build_table

logger = logging.getLogger(__name__)

TABLE_A = "A"
TABLE_B = "B"


def _require_two_tables(p: SystemParams) -> None:
    if p.K1 == p.K2:
        raise UnsupportedConfigurationError(
            f"NB needs at least one T2-level message, {p.label} has none")


def _table_a_system(p: SystemParams) -> SystemParams:
    return SystemParams(N=p.N, T1=p.T1, K1=p.K1, T2=p.T1, K2=p.K1)


def _table_b_system(p: SystemParams) -> SystemParams:
    width = p.K2 - p.K1
    return SystemParams(N=p.N, T1=p.T2, K1=width, T2=p.T2, K2=width)


def table_sizes(p: SystemParams) -> Tuple[Dict[int, int], Dict[int, int]]:
    """
    Unreduced per-composition sizes m̃ of both tables, keyed by composition size.

    m̃1(s) = N^(K2-K1+1) (N-T1)^(s-1) T1^(K1-s)
    m̃2(s) = N^(K1+1) (N-T2)^(s-1) T2^(K2-K1-s)
    """
    _require_two_tables(p)
    N, width = p.N, p.K2 - p.K1
    sizes_a = {s: N ** (width + 1) * (N - p.T1) ** (s - 1) * p.T1 ** (p.K1 - s) for s in range(1, p.K1 + 1)}
    sizes_b = {s: N ** (p.K1 + 1) * (N - p.T2) ** (s - 1) * p.T2 ** (width - s) for s in range(1, width + 1)}
    return sizes_a, sizes_b


def _stacked_tables(p: SystemParams) -> Tuple[NsParameterTable, NsParameterTable]:
    """Active NS tables of both sides, stacked up to the common length N^K2."""
    width = p.K2 - p.K1
    return (build_table(_table_a_system(p)).scaled(multiplier=p.N ** width),
            build_table(_table_b_system(p)).scaled(multiplier=p.N ** p.K1))


def nb_reduction_factor(p: SystemParams) -> int:
    """
    Largest divisor of every NB size that keeps each block evenly split.

    Covers the dedicated and remaining per-server shares of both tables and
    the per-server shares of both stacked active NS codes.
    """
    sizes_a, sizes_b = table_sizes(p)
    N = p.N
    shares = []
    for size in list(sizes_a.values()) + list(sizes_b.values()):
        shares.append(p.T2 * size // N ** 2)
        shares.append((N - p.T2) * size // N ** 2)
    for stacked in _stacked_tables(p):
        shares.extend(stacked.d.values())
    return reduce(gcd, [s for s in shares if s > 0], 0) or 1


@dataclass(frozen=True)
class NbGeometry:
    L: int
    reduction: int
    field: FieldContext
    active_a: NsParameterTable
    active_b: NsParameterTable
    sizes_a: Dict[int, int]
    sizes_b: Dict[int, int]


def nb_geometry(p: SystemParams) -> NbGeometry:
    """Message length, field and reduced table sizes of the NB scheme for p."""
    sizes_a, sizes_b = table_sizes(p)
    reduction = resolve_reduction(p, nb_reduction_factor(p))
    stacked_a, stacked_b = _stacked_tables(p)
    active_a = stacked_a.scaled(divisor=reduction)
    active_b = stacked_b.scaled(divisor=reduction)
    sizes_a = {s: v // reduction for s, v in sizes_a.items()}
    sizes_b = {s: v // reduction for s, v in sizes_b.items()}
    longest = max([max_code_length(active_a), max_code_length(active_b)]
                  + list(sizes_a.values()) + list(sizes_b.values()))
    if active_a.L != active_b.L:
        raise InternalConsistencyError(f"Stacked tables disagree on L: {active_a.L} vs {active_b.L}")
    return NbGeometry(L=active_a.L, reduction=reduction, field=resolve_field(p, longest),
                      active_a=active_a, active_b=active_b, sizes_a=sizes_a, sizes_b=sizes_b)


def message_geometry(p: SystemParams) -> Tuple[int, FieldContext]:
    geometry = nb_geometry(p)
    return geometry.L, geometry.field


def expected_download(p: SystemParams) -> Fraction:
    return nb_geometry(p).L * nb_cost(p)


@dataclass(frozen=True)
class PrecodedTable:
    """
    One table's coded symbols for the retrieval in effect.

    sizes maps each composition to its m̃; row_keys lists (composition,
    coordinate) in lexicographic order and coding holds the matching rows
    over all K2·L precoded columns. An active table keeps its NS layout, a
    pure one its per-composition codes.
    """

    name: str
    messages: Tuple[int, ...]
    active: bool
    sizes: Dict[Composition, int]
    row_keys: Tuple[RowKey, ...]
    coding: Matrix = field(repr=False)
    precoders: Dict[int, Matrix] = field(repr=False)
    layout: Optional[NsLayout] = field(default=None, repr=False)
    codes: Dict[Composition, MdsCode] = field(default_factory=dict, repr=False)

    def row_index(self) -> Dict[RowKey, int]:
        return {key: row for row, key in enumerate(self.row_keys)}


def _pure_table(name: str, messages: Sequence[int], size_by_count: Mapping[int, int], p: SystemParams,
                L: int, ctx: FieldContext, precoders: Dict[int, Matrix]) -> PrecodedTable:
    sizes: Dict[Composition, int] = {}
    codes: Dict[Composition, MdsCode] = {}
    keys: List[RowKey] = []
    used = {k: 0 for k in messages}
    blocks = []
    for comp in lexicographic_subsets(messages):
        size = size_by_count[len(comp)]
        if not size:
            continue
        k = p.T2 * size // p.N
        code = make_code(size, k, ctx)
        sizes[comp], codes[comp] = size, code
        start = len(keys)
        keys.extend((comp, t) for t in range(size))
        for member in comp:
            blocks.append((start, size, (member - 1) * L + used[member], code))
            used[member] += k

    if any(v > L for v in used.values()):
        raise InternalConsistencyError(f"Table-{name} interference segments overflow L={L}: {used}")
    coding = ctx.zeros(len(keys), p.K2 * L)
    for start, size, first, code in blocks:
        coding[start:start + size, first:first + code.k] = np.transpose(code.generator)
    return PrecodedTable(name=name, messages=tuple(messages), active=False, sizes=sizes,
                         row_keys=tuple(keys), coding=coding, precoders=precoders, codes=codes)


def _active_table(name: str, messages: Sequence[int], stacked: NsParameterTable, k_star: int,
                  p: SystemParams, ctx: FieldContext, precoders: Dict[int, Matrix]) -> PrecodedTable:
    layout = build_layout(stacked, k_star, messages, ctx)
    keys, coding = layout.coding_matrix(ctx, p.K2)
    order = sorted(range(len(keys)), key=lambda r: keys[r])
    return PrecodedTable(name=name, messages=tuple(messages), active=True,
                         sizes={comp: layout.sizes[comp] for comp in sorted(layout.sizes)},
                         row_keys=tuple(keys[r] for r in order), coding=coding[np.array(order, dtype=np.int64)],
                         precoders=precoders, layout=layout)


def build_tables(p: SystemParams, k_star: int, rng: SeededRng) -> Tuple[PrecodedTable, PrecodedTable]:
    """
    Code both tables for retrieving k_star.

    Args:
        p: system parameters with K2 > K1
        k_star: desired message, 1..K2
        rng: randomness source for the precoding matrices S_1..S_K2

    Returns:
        (Table-A, Table-B); exactly one of them is active
    """
    _require_two_tables(p)
    if not 1 <= k_star <= p.K2:
        raise ParameterError(f"Desired message {k_star} outside 1..{p.K2}")
    geometry = nb_geometry(p)
    ctx = geometry.field
    precoders = sample_precoders(ctx, list(p.messages), geometry.L, rng)
    high, low = list(p.high_messages), list(p.low_messages)

    if k_star <= p.K1:
        table_a = _active_table(TABLE_A, high, geometry.active_a, k_star, p, ctx, precoders)
        table_b = _pure_table(TABLE_B, low, geometry.sizes_b, p, geometry.L, ctx, precoders)
    else:
        table_a = _pure_table(TABLE_A, high, geometry.sizes_a, p, geometry.L, ctx, precoders)
        table_b = _active_table(TABLE_B, low, geometry.active_b, k_star, p, ctx, precoders)

    for table, by_count in ((table_a, geometry.sizes_a), (table_b, geometry.sizes_b)):
        mismatched = [c for c, size in table.sizes.items() if size != by_count[len(c)]]
        if mismatched:
            raise InternalConsistencyError(f"Table-{table.name} sizes depend on k*: {mismatched}")
    return table_a, table_b


@dataclass(frozen=True)
class Block3Entry:
    composition: Composition
    index: int
    a_key: Optional[RowKey]
    b_key: Optional[RowKey]


@dataclass(frozen=True)
class BlockLayout:
    block1: Tuple[RowKey, ...]
    block2: Tuple[RowKey, ...]
    block3: Tuple[Block3Entry, ...]
    leftover_count: int

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.block1), len(self.block2), len(self.block3)


def _split(table: PrecodedTable, p: SystemParams) -> Tuple[List[RowKey], List[RowKey]]:
    dedicated, remainder = [], []
    for comp, size in table.sizes.items():
        share = p.T2 * size
        if share % p.N or (share // p.N) % p.N:
            raise InternalConsistencyError(f"Table-{table.name} block share of {comp} is not evenly split")
        cut = share // p.N
        dedicated.extend((comp, t) for t in range(cut))
        remainder.extend((comp, t) for t in range(cut, size))
    return sorted(dedicated), sorted(remainder)


def block_layout(p: SystemParams, tables: Tuple[PrecodedTable, PrecodedTable]) -> BlockLayout:
    """Deterministic three-block arrangement; depends only on the table sizes."""
    table_a, table_b = tables
    block1, rest_a = _split(table_a, p)
    block2, rest_b = _split(table_b, p)

    entries: List[Block3Entry] = []
    counters: Dict[Composition, int] = {}
    for pos in range(max(len(rest_a), len(rest_b))):
        a_key = rest_a[pos] if pos < len(rest_a) else None
        b_key = rest_b[pos] if pos < len(rest_b) else None
        comp = tuple(sorted((a_key[0] if a_key else ()) + (b_key[0] if b_key else ())))
        index = counters.get(comp, 0)
        counters[comp] = index + 1
        entries.append(Block3Entry(composition=comp, index=index, a_key=a_key, b_key=b_key))
    return BlockLayout(block1=tuple(block1), block2=tuple(block2), block3=tuple(entries),
                       leftover_count=abs(len(rest_a) - len(rest_b)))


@dataclass(frozen=True)
class NbSecret:
    tables: Tuple[PrecodedTable, PrecodedTable]
    blocks: BlockLayout
    precoders: Dict[int, Matrix]


def assemble_blocks(p: SystemParams, tables: Tuple[PrecodedTable, PrecodedTable],
                    ctx: FieldContext, k_star: int) -> QueryPlan:
    """
    Lay both tables out in the three blocks and build the query plan.

    Every block-b symbol with composition J and running index t goes to
    server t mod N + 1.
    """
    table_a, table_b = tables
    layout = block_layout(p, tables)
    index_a, index_b = table_a.row_index(), table_b.row_index()
    width = table_a.coding.shape[1]

    tags: List[SymbolTag] = []
    rows: List[Matrix] = []
    for block, keys, table, index in ((1, layout.block1, table_a, index_a), (2, layout.block2, table_b, index_b)):
        if keys:
            rows.append(table.coding[np.array([index[key] for key in keys], dtype=np.int64)])
        tags.extend(SymbolTag(server=t % p.N + 1, layer=block, composition=comp, index=t) for comp, t in keys)

    block3 = ctx.zeros(len(layout.block3), width)
    for r, entry in enumerate(layout.block3):
        if entry.a_key is not None:
            block3[r] = table_a.coding[index_a[entry.a_key]]
        if entry.b_key is not None:
            block3[r] = (block3[r] + table_b.coding[index_b[entry.b_key]]) % ctx.q
        tags.append(SymbolTag(server=entry.index % p.N + 1, layer=3, composition=entry.composition,
                              index=entry.index))
    rows.append(block3)

    coding = np.concatenate(rows, axis=0)
    L = width // p.K2
    secret = NbSecret(tables=tables, blocks=layout, precoders=table_a.precoders)
    return assemble_plan(p, "NB", k_star, L, ctx, tags, coding, table_a.precoders, secret)


def build_query(p: SystemParams, k_star: int, rng: SeededRng) -> QueryPlan:
    """
    Build the NB query plan for retrieving message k_star.

    Raises UnsupportedConfigurationError when K1 = K2.
    """
    tables = build_tables(p, k_star, rng)
    ctx = nb_geometry(p).field
    return assemble_blocks(p, tables, ctx, k_star)


def _cancel(plan: QueryPlan, values: Mapping[Tuple[int, Composition, int], Any]) -> Dict[RowKey, Any]:
    """
    Complete every pure codeword from its dedicated block and strip it from
    block 3, returning the active table's symbols keyed by (composition, index).
    """
    secret: NbSecret = plan.user_secret
    table_a, table_b = secret.tables
    ctx = plan.field
    if table_a.active:
        active, active_block, pure, pure_block = table_a, 1, table_b, 2
    else:
        active, active_block, pure, pure_block = table_b, 2, table_a, 1

    pure_words = {}
    for comp, code in pure.codes.items():
        dedicated = plan.params.T2 * pure.sizes[comp] // plan.params.N
        known = [(t, values[(pure_block, comp, t)]) for t in range(dedicated)]
        pure_words[comp] = complete(code, known)

    active_keys = secret.blocks.block1 if active is table_a else secret.blocks.block2
    active_values: Dict[RowKey, Any] = {key: values[(active_block, key[0], key[1])] for key in active_keys}
    for entry in secret.blocks.block3:
        mine, theirs = (entry.a_key, entry.b_key) if active is table_a else (entry.b_key, entry.a_key)
        if mine is None:
            continue
        observed = ctx.asarray(values[(3, entry.composition, entry.index)])
        if theirs is not None:
            observed = (observed - pure_words[theirs[0]][theirs[1]]) % ctx.q
        active_values[mine] = observed
    return active_values


def _active_layout(plan: QueryPlan) -> NsLayout:
    table_a, table_b = plan.user_secret.tables
    return table_a.layout if table_a.active else table_b.layout


def decode(plan: QueryPlan, answers: Sequence[AnswerVector], check_cancellation: bool = False) -> Matrix:
    """
    Recover W_{k*} from all N answers of an NB plan.

    With check_cancellation the coefficient-level cancellation is verified
    first and InternalConsistencyError is raised if any pure interference
    survives.
    """
    if check_cancellation:
        leftovers = residual_interference(plan)
        if leftovers:
            raise InternalConsistencyError(f"{len(leftovers)} active symbols still carry pure interference")
    values = collect_answers(plan, answers)
    active_values = _cancel(plan, values)
    w_star = decode_layout(plan.field, _active_layout(plan), active_values)
    return solve_square(plan.field, plan.user_secret.precoders[plan.k_star], w_star)


def residual_interference(plan: QueryPlan) -> List[RowKey]:
    """
    Run the cancellation on coefficient rows instead of symbols.

    Returns:
        Active-table keys whose cleaned row still has a non-zero coefficient on
        a pure-table message (empty when cancellation is exact)
    """
    values = {}
    for tags, coding in zip(plan.manifest, plan.coding):
        for tag, row in zip(tags, coding):
            values[(tag.layer, tag.composition, tag.index)] = row
    cleaned = _cancel(plan, values)

    table_a, table_b = plan.user_secret.tables
    pure = table_b if table_a.active else table_a
    columns = np.concatenate([np.arange((k - 1) * plan.L, k * plan.L) for k in pure.messages])
    return sorted(key for key, row in cleaned.items() if np.any(np.asarray(row)[columns]))


def block_sizes(p: SystemParams) -> Tuple[int, int, int]:
    """Sizes of the three blocks at the reduced message length."""
    geometry = nb_geometry(p)
    tail_a = sum(size * (p.N - p.T2) // p.N * comb(p.K1, s) for s, size in geometry.sizes_a.items())
    tail_b = sum(size * (p.N - p.T2) // p.N * comb(p.K2 - p.K1, s) for s, size in geometry.sizes_b.items())
    head_a = sum(size * p.T2 // p.N * comb(p.K1, s) for s, size in geometry.sizes_a.items())
    head_b = sum(size * p.T2 // p.N * comb(p.K2 - p.K1, s) for s, size in geometry.sizes_b.items())
    return head_a, head_b, max(tail_a, tail_b)

