"""
NS Coding-Group Parameters
==========================

Every parameter of the successive-cancellation code depends on a group
composition K only through its class (i, j) = (|K ∩ 1:K1|, |K ∩ K1+1:K2|), so the
table is stored per class:

    M       = T2^J + (T1 - T2)/(N - T2) * (N^J - T2^J),   J = K2 - K1
    d(i,0)  = M T1^(K1-i) (N-T1)^(i-1)                                 (i >= 1)
    d(i,j)  = T1^(K1-i) (N-T1)^i T2^(J-j) (N-T2)^(j-1)                 (j >= 1)
    m       = N d(i,j)
    n1, k1  = m(i,j) + m(i+1,j),  T1 n1 / N      (retrieving a T1-level message)
    n2, k2  = m(i,j) + m(i,j+1),  T2 n2 / N      (retrieving a T2-level message)

with message length L = N^K2 before reduction.
"""

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import comb, gcd
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

from .capacity_calc import SystemParams
from .exceptions import InternalConsistencyError, ParameterError

logger = logging.getLogger(__name__)

ClassKey = Tuple[int, int]
Composition = Tuple[int, ...]


@dataclass(frozen=True)
class ClassParams:
    """Sizes for one composition class; n1/k1 or n2/k2 are None where undefined."""

    i: int
    j: int
    m: int
    n1: Optional[int]
    k1: Optional[int]
    n2: Optional[int]
    k2: Optional[int]

    def to_dict(self) -> Dict[str, Any]:
        return {"i": self.i, "j": self.j, "m": self.m,
                "n1": self.n1, "k1": self.k1, "n2": self.n2, "k2": self.k2}


@dataclass(frozen=True)
class NsParameterTable:
    params: SystemParams
    M: int
    d: Dict[ClassKey, int]
    classes: Dict[ClassKey, ClassParams]
    L: int
    multiplier: int = 1
    divisor: int = 1

    def composition_class(self, composition: Iterable[int]) -> ClassKey:
        members = list(composition)
        high = sum(1 for k in members if k <= self.params.K1)
        return high, len(members) - high

    def m_of(self, composition: Iterable[int]) -> int:
        key = self.composition_class(composition)
        return self.classes[key].m if key in self.classes else 0

    def code_for(self, composition: Iterable[int], k_star: int) -> Tuple[int, int]:
        """(n, k) of the group with this composition when k_star is retrieved."""
        entry = self.classes[self.composition_class(composition)]
        if k_star <= self.params.K1:
            return entry.n1, entry.k1
        return entry.n2, entry.k2

    def scaled(self, multiplier: int = 1, divisor: int = 1) -> "NsParameterTable":
        """
        Every size multiplied by multiplier/divisor (stacking and reduction).

        Raises ParameterError when some size is not divisible.
        """
        def resize(value: Optional[int]) -> Optional[int]:
            if value is None:
                return None
            scaled = value * multiplier
            if scaled % divisor:
                raise ParameterError(
                    f"Reduction {divisor} does not divide size {scaled} for {self.params.label}")
            return scaled // divisor

        classes = {
            key: ClassParams(c.i, c.j, resize(c.m), resize(c.n1), resize(c.k1), resize(c.n2), resize(c.k2))
            for key, c in self.classes.items()
        }
        d = {key: resize(value) for key, value in self.d.items()}
        return NsParameterTable(self.params, self.M, d, classes, resize(self.L),
                                self.multiplier * multiplier, self.divisor * divisor)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.label,
            "M": self.M,
            "L": self.L,
            "d": {f"{i},{j}": value for (i, j), value in sorted(self.d.items())},
            "classes": [c.to_dict() for _, c in sorted(self.classes.items())],
        }


def _compute_m(p: SystemParams) -> int:
    width = p.K2 - p.K1
    geometric = sum(p.N ** a * p.T2 ** (width - 1 - a) for a in range(width))
    M = p.T2 ** width + (p.T1 - p.T2) * geometric
    if p.N != p.T2:
        defined = p.T2 ** width + Fraction(p.T1 - p.T2, p.N - p.T2) * (p.N ** width - p.T2 ** width)
        if defined.denominator != 1 or defined != M:
            raise InternalConsistencyError(f"M is not an integer for {p.label}")
    return M


def _compute_d(p: SystemParams, M: int, i: int, j: int) -> int:
    if i == 0 and j == 0:
        return 0
    width = p.K2 - p.K1
    if j == 0:
        return M * p.T1 ** (p.K1 - i) * (p.N - p.T1) ** (i - 1)
    return (p.T1 ** (p.K1 - i) * (p.N - p.T1) ** i
            * p.T2 ** (width - j) * (p.N - p.T2) ** (j - 1))


def _exact_share(level: int, n: int, N: int, label: str) -> int:
    if (level * n) % N:
        raise InternalConsistencyError(f"{level}*{n}/{N} is not an integer for {label}")
    return level * n // N


def build_table(p: SystemParams) -> NsParameterTable:
    """
    Build the full parameter table of the NS code.

    Args:
        p: system parameters

    Returns:
        NsParameterTable with every class (i, j) != (0, 0)
    """
    width = p.K2 - p.K1
    M = _compute_m(p)
    d = {(i, j): _compute_d(p, M, i, j) for i in range(p.K1 + 1) for j in range(width + 1)}

    classes: Dict[ClassKey, ClassParams] = {}
    for (i, j), value in d.items():
        if i == 0 and j == 0:
            continue
        m = p.N * value
        n1 = k1 = n2 = k2 = None
        if i < p.K1:
            n1 = m + p.N * d[(i + 1, j)]
            k1 = _exact_share(p.T1, n1, p.N, p.label)
        if j < width:
            n2 = m + p.N * d[(i, j + 1)]
            k2 = _exact_share(p.T2, n2, p.N, p.label)
        classes[(i, j)] = ClassParams(i, j, m, n1, k1, n2, k2)

    if any(v < 0 for v in d.values()):
        raise InternalConsistencyError(f"Negative d entry for {p.label}")
    return NsParameterTable(params=p, M=M, d=d, classes=classes, L=p.N ** p.K2)


def reduction_factor(p: SystemParams) -> int:
    """
    Largest common divisor of the per-server share of every segment.

    Each layer holds m = N d symbols spread evenly over N servers, so the
    shares are the non-zero d(i, j). Dividing by their GCD keeps every m,
    n - m, k1 and k2 integral and every layer evenly split.
    """
    table = build_table(p)
    shares = [value for value in table.d.values() if value > 0]
    return reduce(gcd, shares, 0) or 1


# --- Group property checks -------------------------------------------------


@dataclass(frozen=True)
class PropertyCheck:
    item: str
    description: str
    lhs: int
    rhs: int
    relation: str
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"item": self.item, "description": self.description, "lhs": self.lhs,
                "rhs": self.rhs, "relation": self.relation, "passed": self.passed}


@dataclass
class GroupPropertyReport:
    params: SystemParams
    checks: List[PropertyCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[PropertyCheck]:
        return [c for c in self.checks if not c.passed]

    def add(self, item: str, description: str, lhs: int, rhs: int, relation: str) -> None:
        outcome = {"==": lhs == rhs, "<": lhs < rhs, "<=": lhs <= rhs, ">=": lhs >= rhs}[relation]
        self.checks.append(PropertyCheck(item, description, lhs, rhs, relation, outcome))

    def to_dict(self) -> Dict[str, Any]:
        return {"params": self.params.label, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks]}


def _weighted_class_sum(p: SystemParams, required: Iterable[int], excluded: Iterable[int],
                        value: Callable[[int, int], int]) -> int:
    """Sum value(i, j) over subsets containing `required` and avoiding `excluded`."""
    required, excluded = list(required), list(excluded)
    fixed_high = sum(1 for k in required if k <= p.K1)
    fixed_low = len(required) - fixed_high
    free_high = p.K1 - fixed_high - sum(1 for k in excluded if k <= p.K1)
    free_low = (p.K2 - p.K1) - fixed_low - sum(1 for k in excluded if k > p.K1)
    total = 0
    for extra_high in range(free_high + 1):
        for extra_low in range(free_low + 1):
            i, j = fixed_high + extra_high, fixed_low + extra_low
            if i == 0 and j == 0:
                continue
            total += comb(free_high, extra_high) * comb(free_low, extra_low) * value(i, j)
    return total


def _enumerated_sum(p: SystemParams, required: Iterable[int], excluded: Iterable[int],
                    value: Callable[[int, int], int]) -> int:
    """Same sum by listing every subset explicitly."""
    required, excluded = set(required), set(excluded)
    pool = [k for k in p.messages if k not in required and k not in excluded]
    total = 0
    for size in range(len(pool) + 1):
        for extra in itertools.combinations(pool, size):
            members = required | set(extra)
            if not members:
                continue
            high = sum(1 for k in members if k <= p.K1)
            total += value(high, len(members) - high)
    return total


def verify_group_properties(p: SystemParams) -> GroupPropertyReport:
    """
    Check the facts the NS construction relies on.

    Reports, with both sides of every relation:
      - k1 = m and k2 <= m for every class
      - the desired-message segments m(K), K containing k*, add up to L
      - the interference segments of any message k != k* fit inside L, and
        match their closed forms
      - the d ratio identities d(i,j):d(i+1,j) = T1:(N-T1) and
        d(i,j):d(i,j+1) >= T2:(N-T2)

    Failures are reported, never raised.
    """
    table = build_table(p)
    report = GroupPropertyReport(params=p)
    N, L = p.N, table.L
    width = p.K2 - p.K1

    for (i, j), c in sorted(table.classes.items()):
        if c.k1 is not None:
            report.add("k1=m", f"class ({i},{j})", c.k1, c.m, "==")
        if c.k2 is not None:
            report.add("k2<=m", f"class ({i},{j})", c.k2, c.m, "<=")

    def m_value(i: int, j: int) -> int:
        return table.classes[(i, j)].m

    def k1_value(i: int, j: int) -> int:
        return table.classes[(i, j)].k1

    def k2_value(i: int, j: int) -> int:
        return table.classes[(i, j)].k2

    desired_choices = [("high", 1)] + ([("low", p.K1 + 1)] if p.K2 > p.K1 else [])
    for label, k_star in desired_choices:
        weighted = _weighted_class_sum(p, [k_star], [], m_value)
        enumerated = _enumerated_sum(p, [k_star], [], m_value)
        report.add("desired-sum", f"k* {label}: weighted sum of m over K containing k*", weighted, L, "==")
        report.add("desired-sum", f"k* {label}: enumerated sum of m over K containing k*", enumerated, L, "==")

        level = p.T1 if label == "high" else p.T2
        relation = "<" if level < N else "<="
        value = k1_value if label == "high" else k2_value
        others = [("high", k) for k in p.high_messages if k != k_star][:1]
        others += [("low", k) for k in p.low_messages if k != k_star][:1]
        for other_label, k in others:
            weighted = _weighted_class_sum(p, [k], [k_star], value)
            enumerated = _enumerated_sum(p, [k], [k_star], value)
            closed = level * N ** (p.K2 - 1)
            context = f"k* {label}, k {other_label}"
            report.add("segments-fit", f"{context}: weighted interference sum vs L", weighted, L, relation)
            report.add("segments-fit", f"{context}: enumerated sum equals weighted sum", enumerated, weighted, "==")
            report.add("segments-fit", f"{context}: weighted sum equals closed form", weighted, closed, "==")
            if label == "low" and other_label == "high":
                loose = p.T2 * N ** (p.K2 - 1) + (N - p.T1) * p.T2 * N ** (p.K2 - 2)
                report.add("segments-fit", f"{context}: within T2 N^(K2-1) + (N-T1) T2 N^(K2-2)",
                           weighted, loose, "<=")

    for i in range(p.K1 + 1):
        for j in range(width + 1):
            if i + j == 0:
                continue
            if i < p.K1:
                report.add("ratio-high", f"d({i},{j})(N-T1) = d({i + 1},{j})T1",
                           table.d[(i, j)] * (N - p.T1), table.d[(i + 1, j)] * p.T1, "==")
            if j < width:
                report.add("ratio-low", f"d({i},{j})(N-T2) >= d({i},{j + 1})T2",
                           table.d[(i, j)] * (N - p.T2), table.d[(i, j + 1)] * p.T2, ">=")

    if not report.passed:
        logger.warning(f"{len(report.failures)} group property checks failed for {p.label}")
    return report
