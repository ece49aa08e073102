"""
Privacy Audit
=============

Checks that a scheme's queries reveal nothing about k* to any colluding set.

For a protected set S and level T, the audit builds a plan for every k* in S
and every seed, then verifies:

    pattern      the placement manifest (which layer/block and composition
                 every server symbol belongs to) is identical for every k*
    collusion    for every T-subset of servers and every message k, the
                 coefficient block of k's columns seen by that subset is
                 either full row rank with a k*-independent shape, or the
                 very same matrix for every k*

Either collusion criterion makes the observed query distribution independent
of k*, since each W_k is hidden behind its own uniform full-rank precoder.
"""

import itertools
import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import nb_engine, ns_engine
from .algebra import Matrix, SeededRng, rank
from .capacity_calc import SystemParams
from .exceptions import ParameterError
from .integrity import array_digest
from .ns_engine import QueryPlan, SymbolTag

logger = logging.getLogger(__name__)

PlanFactory = Callable[[SystemParams, int, SeededRng], QueryPlan]

CRITERION_FULL_RANK = "full-rank"
CRITERION_IDENTICAL = "identical"


@dataclass(frozen=True)
class AuditTarget:
    """Scheme, system and the (protected set, level) pair to audit."""

    params: SystemParams
    scheme: str
    protected: Tuple[int, ...]
    level: int

    def __post_init__(self):
        if self.scheme not in ("NS", "NB", "broken"):
            raise ParameterError(f"Unknown scheme '{self.scheme}'")
        if not self.protected:
            raise ParameterError("Protected set is empty")
        if any(k < 1 or k > self.params.K2 for k in self.protected):
            raise ParameterError(f"Protected set {self.protected} outside 1..{self.params.K2}")
        if not 1 <= self.level <= self.params.N:
            raise ParameterError(f"Collusion level {self.level} outside 1..{self.params.N}")

    @classmethod
    def high(cls, params: SystemParams, scheme: str) -> "AuditTarget":
        return cls(params, scheme, tuple(params.high_messages), params.T1)

    @classmethod
    def low(cls, params: SystemParams, scheme: str) -> "AuditTarget":
        return cls(params, scheme, tuple(params.messages), params.T2)


@dataclass(frozen=True)
class AuditCheck:
    seed: int
    servers: Tuple[int, ...]
    message: int
    rows: int
    criterion: Optional[str]
    passed: bool

    def to_dict(self) -> Dict[str, object]:
        return {"seed": self.seed, "servers": list(self.servers), "message": self.message,
                "rows": self.rows, "criterion": self.criterion, "passed": self.passed}


@dataclass
class AuditReport:
    target: AuditTarget
    seeds: Tuple[int, ...]
    pattern_ok: bool = True
    pattern_signatures: Dict[int, str] = field(default_factory=dict)
    checks: List[AuditCheck] = field(default_factory=list)

    @property
    def failures(self) -> List[AuditCheck]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return self.pattern_ok and not self.failures

    def criterion_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for check in self.checks:
            if check.criterion:
                counts[check.criterion] = counts.get(check.criterion, 0) + 1
        return counts

    @property
    def verdict(self) -> str:
        return "certified" if self.passed else "leak"

    def to_dict(self) -> Dict[str, object]:
        failures = self.failures
        return {
            "params": self.target.params.label,
            "scheme": self.target.scheme,
            "protected_set": list(self.target.protected),
            "level": self.target.level,
            "pattern_ok": self.pattern_ok,
            "verdict": self.verdict,
            "checks": len(self.checks),
            "counterexample": failures[0].to_dict() if failures else None,
            "justification": self.criterion_counts(),
        }


def pattern_signature(plan: QueryPlan) -> str:
    """Canonical JSON of the sorted (server, layer, composition, count) entries of a plan."""
    counts: Dict[Tuple[int, int, Tuple[int, ...]], int] = {}
    for tags in plan.manifest:
        for tag in tags:
            key = (tag.server, tag.layer, tag.composition)
            counts[key] = counts.get(key, 0) + 1
    entries = [[server, layer, list(comp), count] for (server, layer, comp), count in sorted(counts.items())]
    return json.dumps(entries, separators=(",", ":"))


def collusion_block(plan: QueryPlan, k: int, colluding: Iterable[int]) -> Tuple[List[Tuple[int, int]], Matrix]:
    """
    Coefficient rows involving message k that the colluding servers receive.

    Returns:
        (positions as (server, row) pairs, the rows restricted to k's columns)
    """
    columns = slice((k - 1) * plan.L, k * plan.L)
    positions: List[Tuple[int, int]] = []
    rows: List[Matrix] = []
    for server in sorted(colluding):
        tags: Sequence[SymbolTag] = plan.manifest[server - 1]
        coding = plan.coding[server - 1]
        for r, tag in enumerate(tags):
            if k in tag.composition:
                positions.append((server, r))
                rows.append(coding[r, columns])
    if not rows:
        return positions, plan.field.zeros(0, plan.L)
    return positions, np.stack(rows)


def build_broken_plan(p: SystemParams, k_star: int, rng: SeededRng) -> QueryPlan:
    """
    A deliberately non-private plan: every server sends its share of W_{k*}
    in the clear. Used to confirm that the audit catches leaks.
    """
    L, ctx = ns_engine.message_geometry(p)
    if L % p.N:
        raise ParameterError(f"Message length {L} is not divisible by N={p.N}")
    coding = ctx.zeros(L, p.K2 * L)
    first = (k_star - 1) * L
    coding[np.arange(L), first + np.arange(L)] = 1
    tags = [SymbolTag(server=t % p.N + 1, layer=1, composition=(k_star,), index=t) for t in range(L)]
    precoders = {k: ctx.identity(L) for k in p.messages}
    return ns_engine.assemble_plan(p, "broken", k_star, L, ctx, tags, coding, precoders, None)


def default_factory(scheme: str) -> PlanFactory:
    factories = {"NS": ns_engine.build_query, "NB": nb_engine.build_query, "broken": build_broken_plan}
    return factories[scheme]


def audit(target: AuditTarget, seeds: Sequence[int], plan_factory: Optional[PlanFactory] = None) -> AuditReport:
    """
    Audit one (protected set, level) requirement over the given seeds.

    Args:
        target: scheme, system, protected set and collusion level
        seeds: one plan per (seed, k*) is built
        plan_factory: override for plan construction (tests, broken plans)

    Returns:
        AuditReport listing every collusion check and the criterion that
        certified it
    """
    if not seeds:
        raise ParameterError("Audit needs at least one seed")
    factory = plan_factory or default_factory(target.scheme)
    p = target.params
    report = AuditReport(target=target, seeds=tuple(seeds))
    rank_cache: Dict[str, int] = {}
    subsets = list(itertools.combinations(range(1, p.N + 1), target.level))

    for seed in seeds:
        plans = {k_star: factory(p, k_star, SeededRng(seed)) for k_star in target.protected}
        signatures = {k_star: pattern_signature(plan) for k_star, plan in plans.items()}
        report.pattern_signatures.update(signatures)
        if len(set(signatures.values())) > 1:
            report.pattern_ok = False
            logger.warning(f"Placement pattern depends on k* for {p.label} ({target.scheme}, seed {seed})")

        for servers in subsets:
            for k in p.messages:
                blocks = {k_star: collusion_block(plan, k, servers) for k_star, plan in plans.items()}
                report.checks.append(_judge(seed, servers, k, blocks, plans, rank_cache))

    if report.failures:
        logger.warning(f"Audit of {p.label} ({target.scheme}, level {target.level}): "
                       f"{len(report.failures)} of {len(report.checks)} checks failed")
    else:
        logger.info(f"Audit of {p.label} ({target.scheme}, level {target.level}) passed "
                    f"{len(report.checks)} checks")
    return report


def _judge(seed: int, servers: Tuple[int, ...], k: int,
           blocks: Dict[int, Tuple[List[Tuple[int, int]], Matrix]],
           plans: Dict[int, QueryPlan], rank_cache: Dict[str, int]) -> AuditCheck:
    positions = {k_star: tuple(pos) for k_star, (pos, _) in blocks.items()}
    matrices = {k_star: matrix for k_star, (_, matrix) in blocks.items()}
    rows = len(next(iter(positions.values())))

    if len(set(positions.values())) == 1:
        full_rank = True
        for k_star, matrix in matrices.items():
            key = array_digest(matrix)
            if key not in rank_cache:
                rank_cache[key] = rank(plans[k_star].field, matrix)
            if rank_cache[key] != matrix.shape[0]:
                full_rank = False
                break
        if full_rank:
            return AuditCheck(seed, servers, k, rows, CRITERION_FULL_RANK, True)

        first = next(iter(matrices.values()))
        if all(np.array_equal(first, m) for m in matrices.values()):
            return AuditCheck(seed, servers, k, rows, CRITERION_IDENTICAL, True)

    return AuditCheck(seed, servers, k, rows, None, False)
