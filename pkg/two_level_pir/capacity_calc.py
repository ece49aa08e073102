"""
Capacity Calculator
===================

Exact download costs and rates for a two-level PIR system (N, T1:K1, T2:K2):
N replicated servers, messages 1..K1 private against any T1 colluding servers
and every message 1..K2 private against any T2.

All quantities are fractions.Fraction; decimals only appear when rendering.

Examples:
    p = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)
    rate_ns(p)          # Fraction(16, 29)
    best_scheme(p)      # Scheme.TIE
"""

import logging
from dataclasses import asdict, dataclass, field, replace
from decimal import Decimal, localcontext
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence

from .config import DECIMAL_DIGITS
from .exceptions import InternalConsistencyError, ParameterError

logger = logging.getLogger(__name__)

TIGHTENED_BOUND = Fraction(11, 21)
TIGHTENED_BOUND_SYSTEM = (3, 2, 2, 1, 3)


class Scheme(str, Enum):
    NS = "NS"
    NB = "NB"
    TIE = "tie"


@dataclass(frozen=True)
class SystemParams:
    """
    The system (N, T1:K1, T2:K2) plus optional field modulus and
    message-length reduction. q and reduction default to the scheme's choice.
    """

    N: int
    T1: int
    K1: int
    T2: int
    K2: int
    q: Optional[int] = None
    reduction: Optional[int] = None

    def __post_init__(self):
        for name in ("N", "T1", "K1", "T2", "K2"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ParameterError(f"{name} must be an integer, got {value!r}")
        if not 1 <= self.T2 <= self.T1 <= self.N:
            raise ParameterError(f"Need 1 <= T2 <= T1 <= N, got {self.label}")
        if not 1 <= self.K1 <= self.K2:
            raise ParameterError(f"Need 1 <= K1 <= K2, got {self.label}")
        if self.reduction is not None and self.reduction < 1:
            raise ParameterError(f"Reduction must be at least 1, got {self.reduction}")
        if self.q is not None and self.q < 3:
            raise ParameterError(f"Field modulus must be at least 3, got {self.q}")

    @classmethod
    def parse(cls, text: str) -> "SystemParams":
        """Parse the compact notation 'N,T1:K1,T2:K2', with or without brackets."""
        cleaned = text.strip().strip("()").replace(" ", "")
        try:
            n_part, high, low = cleaned.split(",")
            t1, k1 = high.split(":")
            t2, k2 = low.split(":")
            return cls(N=int(n_part), T1=int(t1), K1=int(k1), T2=int(t2), K2=int(k2))
        except ValueError as e:
            raise ParameterError(f"Cannot parse system '{text}': {str(e)}")

    @property
    def label(self) -> str:
        return f"({self.N},{self.T1}:{self.K1},{self.T2}:{self.K2})"

    @property
    def messages(self) -> range:
        return range(1, self.K2 + 1)

    @property
    def high_messages(self) -> range:
        return range(1, self.K1 + 1)

    @property
    def low_messages(self) -> range:
        return range(self.K1 + 1, self.K2 + 1)

    def privacy_level(self, k: int) -> int:
        return self.T1 if k <= self.K1 else self.T2

    def with_overrides(self, **changes: Any) -> "SystemParams":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RateReport:
    params: SystemParams
    r_ns: Fraction
    r_nb: Fraction
    r_upper: Fraction
    r_naive: Fraction
    d_gap: Fraction
    coding_gain: Fraction
    best_scheme: Scheme

    def to_dict(self) -> Dict[str, Any]:
        return {
            "params": self.params.label,
            "r_ns": fraction_string(self.r_ns),
            "r_nb": fraction_string(self.r_nb),
            "r_upper": fraction_string(self.r_upper),
            "r_naive": fraction_string(self.r_naive),
            "gap": fraction_string(self.d_gap),
            "coding_gain": fraction_string(self.coding_gain),
            "best": self.best_scheme.value,
        }


def fraction_string(value: Fraction) -> str:
    return f"{value.numerator}/{value.denominator}"


def decimal_string(value: Fraction, digits: int = DECIMAL_DIGITS) -> str:
    """Render a fraction with the given number of significant digits."""
    with localcontext() as ctx:
        ctx.prec = digits
        return str(Decimal(value.numerator) / Decimal(value.denominator))


def dstar(N: int, K: int, T: int) -> Fraction:
    """Download cost of the optimal T-colluding code: 1 + T/N + ... + (T/N)^(K-1)."""
    if N < 1 or K < 0 or T < 0:
        raise ParameterError(f"dstar needs N >= 1, K >= 0, T >= 0, got ({N}, {K}, {T})")
    ratio = Fraction(T, N)
    return sum((ratio ** i for i in range(K)), Fraction(0))


def lower_cost(p: SystemParams) -> Fraction:
    """Smallest download cost allowed by the converse bound."""
    return (dstar(p.N, p.K1, p.T1)
            + Fraction(p.T2, p.N) * Fraction(p.T1, p.N) ** (p.K1 - 1) * dstar(p.N, p.K2 - p.K1, p.T2))


def ns_cost(p: SystemParams) -> Fraction:
    return dstar(p.N, p.K1, p.T1) + Fraction(p.T1, p.N) ** p.K1 * dstar(p.N, p.K2 - p.K1, p.T2)


def nb_cost(p: SystemParams) -> Fraction:
    high = dstar(p.N, p.K1, p.T1)
    low = dstar(p.N, p.K2 - p.K1, p.T2)
    share = Fraction(p.T2, p.N)
    return max(high + share * low, low + share * high)


def naive_cost(p: SystemParams) -> Fraction:
    """Cost of protecting every message at the higher level T1."""
    return dstar(p.N, p.K2, p.T1)


def rate_upper(p: SystemParams) -> Fraction:
    return 1 / lower_cost(p)


def rate_ns(p: SystemParams) -> Fraction:
    return 1 / ns_cost(p)


def rate_nb(p: SystemParams) -> Fraction:
    return 1 / nb_cost(p)


def rate_naive(p: SystemParams) -> Fraction:
    return 1 / naive_cost(p)


def coding_gain(p: SystemParams) -> Fraction:
    """Download saved by NS over the naive T1-private code."""
    return naive_cost(p) - ns_cost(p)


def coding_gain_closed_form(p: SystemParams) -> Fraction:
    width = p.K2 - p.K1
    return Fraction(p.T1, p.N) ** p.K1 * (dstar(p.N, width, p.T1) - dstar(p.N, width, p.T2))


def ns_gap(p: SystemParams) -> Fraction:
    """Distance between the NS cost and the converse bound."""
    return ns_cost(p) - lower_cost(p)


def gap_closed_form(p: SystemParams) -> Fraction:
    return (Fraction(p.T1 - p.T2, p.N) * Fraction(p.T1, p.N) ** (p.K1 - 1)
            * dstar(p.N, p.K2 - p.K1, p.T2))


def nb_conditions_hold(p: SystemParams) -> bool:
    """
    Closed-form test for NB strictly beating NS. Only meaningful when K2 > K1.

    With A = D*(K1, T1), B = D*(K2-K1, T2), a = T1/N, b = T2/N, NB wins when
    either A >= B and b < a^K1, or A < B and A(1 - b) > B(1 - a^K1).
    """
    high = dstar(p.N, p.K1, p.T1)
    low = dstar(p.N, p.K2 - p.K1, p.T2)
    a_power = Fraction(p.T1, p.N) ** p.K1
    b = Fraction(p.T2, p.N)
    if high >= low:
        return b < a_power
    return high * (1 - b) > low * (1 - a_power)


def best_scheme(p: SystemParams) -> Scheme:
    """
    Compare the exact NS and NB rates, then cross-check the verdict against
    the closed-form conditions.
    """
    ns, nb = rate_ns(p), rate_nb(p)
    if nb > ns:
        verdict = Scheme.NB
    elif ns > nb:
        verdict = Scheme.NS
    else:
        verdict = Scheme.TIE
    if p.K2 > p.K1 and nb_conditions_hold(p) != (verdict is Scheme.NB):
        raise InternalConsistencyError(
            f"Direct comparison ({verdict.value}) disagrees with closed-form conditions for {p.label}")
    return verdict


def tightened_upper_bound() -> Fraction:
    """
    Capacity bound 11/21 for the system (3, 2:2, 1:3), tighter than the
    general converse bound 9/17.
    """
    reference = SystemParams(*TIGHTENED_BOUND_SYSTEM)
    general = rate_upper(reference)
    if not TIGHTENED_BOUND < general:
        raise InternalConsistencyError(f"{TIGHTENED_BOUND} is not below the general bound {general}")
    return TIGHTENED_BOUND


def matches_tightened_system(p: SystemParams) -> bool:
    return (p.N, p.T1, p.K1, p.T2, p.K2) == TIGHTENED_BOUND_SYSTEM


def rate_report(p: SystemParams) -> RateReport:
    report = RateReport(
        params=p,
        r_ns=rate_ns(p),
        r_nb=rate_nb(p),
        r_upper=rate_upper(p),
        r_naive=rate_naive(p),
        d_gap=ns_gap(p),
        coding_gain=coding_gain(p),
        best_scheme=best_scheme(p),
    )
    if not report.r_naive <= max(report.r_ns, report.r_nb) <= report.r_upper:
        raise InternalConsistencyError(f"Rate ordering violated for {p.label}")
    return report


@dataclass(frozen=True)
class SweepSpec:
    """
    One varying coordinate over a list of values, the others fixed.

    k2_offset ties K2 to K1 (K2 = K1 + offset) when set.
    """

    vary: str
    values: Sequence[int]
    base: Dict[str, int] = field(default_factory=dict)
    k2_offset: Optional[int] = None

    def points(self) -> List[SystemParams]:
        if self.vary not in ("N", "T1", "K1", "T2", "K2"):
            raise ParameterError(f"Cannot sweep over '{self.vary}'")
        if not self.values:
            raise ParameterError("Sweep range is empty")
        points = []
        for value in self.values:
            coords = dict(self.base)
            coords[self.vary] = int(value)
            if self.k2_offset is not None:
                coords["K2"] = coords["K1"] + self.k2_offset
            missing = {"N", "T1", "K1", "T2", "K2"} - set(coords)
            if missing:
                raise ParameterError(f"Sweep is missing fixed values for {sorted(missing)}")
            points.append(SystemParams(**{k: coords[k] for k in ("N", "T1", "K1", "T2", "K2")}))
        return points


@dataclass(frozen=True)
class SweepRow:
    params: SystemParams
    report: RateReport


def sweep(spec: SweepSpec) -> List[SweepRow]:
    """One RateReport per parameter point of the sweep."""
    rows = [SweepRow(params=p, report=rate_report(p)) for p in spec.points()]
    logger.debug(f"Sweep over {spec.vary}: {len(rows)} points")
    return rows
