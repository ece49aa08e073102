"""
Prime-Field Arithmetic
======================

Exact arithmetic over F_q for a prime q and dense matrix operations on numpy
arrays whose entries are canonical residues in [0, q).

Arrays use int64 storage while q < 2^31 and Python-int object storage above
that, so every intermediate product stays exact up to the 61-bit modulus cap.

Examples:
    ctx = FieldContext(7)
    ctx.mul(3, 5)                       # 1
    rank(ctx, ctx.identity(4))          # 4
    random_full_rank(ctx, 16, SeededRng(42))
"""

import logging
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple, Union

import numpy as np
from sympy import isprime, nextprime

from .config import MAX_MODULUS, MIN_MODULUS
from .exceptions import DegenerateSystemError, ParameterError

logger = logging.getLogger(__name__)

Matrix = np.ndarray

_INT64_STORAGE_LIMIT = 2 ** 31
_FLOAT_EXACT_LIMIT = 2 ** 53
_INT64_PRODUCT_LIMIT = 2 ** 63


def is_prime(n: int) -> bool:
    return bool(isprime(int(n)))


def next_prime(n: int) -> int:
    """Smallest prime strictly greater than n."""
    return int(nextprime(int(n)))


def default_modulus(max_code_length: int) -> int:
    """
    Default field size for a scheme whose longest MDS code has the given length.

    Args:
        max_code_length: largest codeword length n used by the scheme

    Returns:
        The smallest prime q > max(n, 2)
    """
    return next_prime(max(max_code_length, MIN_MODULUS - 1))


@dataclass(frozen=True)
class FieldContext:
    """The prime field F_q. Immutable and safe to share across threads."""

    q: int

    def __post_init__(self):
        q = int(self.q)
        if q < MIN_MODULUS:
            raise ParameterError(f"Field modulus must be at least {MIN_MODULUS}, got {q}")
        if q >= MAX_MODULUS:
            raise ParameterError(f"Field modulus must be below 2^61, got {q}")
        if not is_prime(q):
            raise ParameterError(f"Field modulus {q} is not prime")
        object.__setattr__(self, "q", q)

    @property
    def dtype(self) -> Any:
        return np.int64 if self.q < _INT64_STORAGE_LIMIT else object

    # Scalar operations on canonical residues

    def add(self, a: Union[int, "FieldElement"], b: Union[int, "FieldElement"]) -> int:
        return (int(a) + int(b)) % self.q

    def sub(self, a: Union[int, "FieldElement"], b: Union[int, "FieldElement"]) -> int:
        return (int(a) - int(b)) % self.q

    def mul(self, a: Union[int, "FieldElement"], b: Union[int, "FieldElement"]) -> int:
        return (int(a) * int(b)) % self.q

    def neg(self, a: Union[int, "FieldElement"]) -> int:
        return (-int(a)) % self.q

    def inv(self, a: Union[int, "FieldElement"]) -> int:
        value = int(a) % self.q
        if value == 0:
            raise DegenerateSystemError("Inversion of zero in F_q")
        return pow(value, self.q - 2, self.q)

    def element(self, value: int) -> "FieldElement":
        return FieldElement(int(value) % self.q, self)

    # Array helpers

    def asarray(self, data: Any) -> Matrix:
        """Copy data into field storage, reducing every entry mod q."""
        if self.dtype is object:
            array = np.array(data, dtype=object)
            return np.vectorize(lambda v: int(v) % self.q, otypes=[object])(array) if array.size else array
        return np.array(data, dtype=np.int64) % self.q

    def zeros(self, rows: int, cols: int) -> Matrix:
        return np.zeros((rows, cols), dtype=np.int64).astype(self.dtype)

    def identity(self, dim: int) -> Matrix:
        return np.eye(dim, dtype=np.int64).astype(self.dtype)

    def matmul(self, a: Matrix, b: Matrix) -> Matrix:
        """
        Exact product a·b over F_q.

        Uses float64 BLAS when every partial sum fits in the 53-bit mantissa,
        int64 when it fits in 63 bits, Python integers otherwise.
        """
        a = np.asarray(a)
        b = np.asarray(b)
        if a.shape[-1] != b.shape[0]:
            raise ParameterError(f"Cannot multiply {a.shape} by {b.shape}")
        bound = (self.q - 1) ** 2 * max(a.shape[-1], 1)
        if bound < _FLOAT_EXACT_LIMIT:
            product = np.rint(a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)
            return (product % self.q).astype(self.dtype)
        if bound < _INT64_PRODUCT_LIMIT:
            product = a.astype(np.int64) @ b.astype(np.int64)
            return (product % self.q).astype(self.dtype)
        return np.dot(a.astype(object), b.astype(object)) % self.q


@dataclass(frozen=True)
class FieldElement:
    """A single symbol of F_q with operator overloads."""

    value: int
    field: FieldContext

    def __post_init__(self):
        if not 0 <= self.value < self.field.q:
            raise ParameterError(f"{self.value} is not a residue mod {self.field.q}")

    def _coerce(self, other: Union[int, "FieldElement"]) -> int:
        if isinstance(other, FieldElement):
            if other.field != self.field:
                raise ParameterError("Cannot combine elements of different fields")
            return other.value
        return int(other) % self.field.q

    def __add__(self, other):
        return FieldElement(self.field.add(self.value, self._coerce(other)), self.field)

    __radd__ = __add__

    def __sub__(self, other):
        return FieldElement(self.field.sub(self.value, self._coerce(other)), self.field)

    def __rsub__(self, other):
        return FieldElement(self.field.sub(self._coerce(other), self.value), self.field)

    def __mul__(self, other):
        return FieldElement(self.field.mul(self.value, self._coerce(other)), self.field)

    __rmul__ = __mul__

    def __neg__(self):
        return FieldElement(self.field.neg(self.value), self.field)

    def __truediv__(self, other):
        return self * self.field.inv(self._coerce(other))

    def inverse(self) -> "FieldElement":
        return FieldElement(self.field.inv(self.value), self.field)

    def __int__(self) -> int:
        return self.value

    def __index__(self) -> int:
        return self.value


class SeededRng:
    """
    The single randomness source of the toolkit: numpy's PCG64 bit generator
    seeded with an explicit 64-bit integer.

    Independent child streams (one per purpose) are derived from the same seed
    through numpy's SeedSequence spawn keys, so results never depend on the
    order in which streams are consumed.
    """

    def __init__(self, seed: int, stream: Optional[int] = None):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise ParameterError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream = stream
        if stream is None:
            sequence = np.random.SeedSequence(seed)
        else:
            sequence = np.random.SeedSequence(seed, spawn_key=(stream,))
        self._generator = np.random.Generator(np.random.PCG64(sequence))

    def child(self, stream: int) -> "SeededRng":
        return SeededRng(self.seed, stream)

    def field_matrix(self, ctx: FieldContext, rows: int, cols: int) -> Matrix:
        """Uniform rows×cols matrix over F_q."""
        values = self._generator.integers(0, ctx.q, size=(rows, cols), dtype=np.int64)
        return values.astype(ctx.dtype)

    def field_vector(self, ctx: FieldContext, length: int) -> Matrix:
        values = self._generator.integers(0, ctx.q, size=length, dtype=np.int64)
        return values.astype(ctx.dtype)


def row_reduce(ctx: FieldContext, matrix: Matrix,
               pivot_cols: Optional[int] = None) -> Tuple[Matrix, List[int]]:
    """
    Gauss-Jordan elimination over F_q.

    Args:
        ctx: field context
        matrix: input matrix (copied, never mutated)
        pivot_cols: only the first pivot_cols columns may hold pivots; the
            remaining columns are carried along (augmented systems)

    Returns:
        (reduced row-echelon form, list of pivot column indices)
    """
    a = _as_matrix(ctx, matrix)
    rows, cols = a.shape
    limit = cols if pivot_cols is None else min(pivot_cols, cols)
    q = ctx.q
    pivots: List[int] = []
    r = 0
    for c in range(limit):
        if r == rows:
            break
        if not _swap_in_pivot(a, r, c):
            continue
        # rows r.. are zero left of column c
        a[r, c:] = (a[r, c:] * ctx.inv(a[r, c])) % q
        column = a[:, c].copy()
        column[r] = 0
        targets = np.nonzero(column)[0]
        if targets.size:
            a[targets, c:] = (a[targets, c:] - np.outer(column[targets], a[r, c:])) % q
        pivots.append(c)
        r += 1
    return a, pivots


def _as_matrix(ctx: FieldContext, matrix: Matrix) -> Matrix:
    a = ctx.asarray(matrix)
    if a.ndim != 2:
        raise ParameterError(f"Expected a 2-D matrix, got shape {a.shape}")
    return a


def _swap_in_pivot(a: Matrix, r: int, c: int) -> bool:
    """Move the first row at or below r with a non-zero entry in column c to row r."""
    candidates = np.nonzero(a[r:, c])[0]
    if candidates.size == 0:
        return False
    p = r + int(candidates[0])
    if p != r:
        a[[r, p]] = a[[p, r]]
    return True


def _forward_rank(ctx: FieldContext, a: Matrix, stop_on_gap: bool) -> int:
    """
    Forward elimination in place; returns the number of pivots found.

    With stop_on_gap the scan ends at the first column without a pivot.
    """
    rows, cols = a.shape
    q = ctx.q
    r = 0
    for c in range(cols):
        if r == rows:
            break
        if not _swap_in_pivot(a, r, c):
            if stop_on_gap:
                break
            continue
        below = np.nonzero(a[r + 1:, c])[0] + r + 1
        if below.size:
            pivot_row = (a[r, c:] * ctx.inv(a[r, c])) % q
            a[below, c:] = (a[below, c:] - np.outer(a[below, c], pivot_row)) % q
        r += 1
    return r


def rank(ctx: FieldContext, matrix: Matrix) -> int:
    """Rank over F_q; 0 for an empty matrix."""
    if np.asarray(matrix).size == 0:
        return 0
    return _forward_rank(ctx, _as_matrix(ctx, matrix), stop_on_gap=False)


def is_invertible(ctx: FieldContext, matrix: Matrix) -> bool:
    a = _as_matrix(ctx, matrix)
    n = a.shape[0]
    if n == 0 or a.shape[1] != n:
        return False
    return _forward_rank(ctx, a, stop_on_gap=True) == n


def solve_square(ctx: FieldContext, a: Matrix, b: Matrix) -> Matrix:
    """
    Solve a·x = b for x.

    Args:
        ctx: field context
        a: square invertible matrix
        b: right-hand side, a vector or a matrix with as many rows as a

    Returns:
        x with the same shape as b
    """
    a = ctx.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ParameterError(f"solve_square needs a square matrix, got shape {a.shape}")
    n = a.shape[0]
    rhs = ctx.asarray(b)
    vector = rhs.ndim == 1
    if vector:
        rhs = rhs.reshape(-1, 1)
    if rhs.shape[0] != n:
        raise ParameterError(f"Right-hand side has {rhs.shape[0]} rows, expected {n}")
    reduced, pivots = row_reduce(ctx, np.concatenate([a, rhs], axis=1), pivot_cols=n)
    if len(pivots) < n:
        raise DegenerateSystemError(f"Singular {n}x{n} system (rank {len(pivots)})")
    x = reduced[:, n:]
    return x.reshape(-1) if vector else x


def inverse(ctx: FieldContext, a: Matrix) -> Matrix:
    a = np.asarray(a)
    return solve_square(ctx, a, ctx.identity(a.shape[0]))


def random_full_rank(ctx: FieldContext, dim: int, rng: SeededRng) -> Matrix:
    """
    Uniform sample from the invertible dim×dim matrices over F_q.

    Rejection sampling of uniform matrices keeps the distribution exactly
    uniform over the full-rank set.
    """
    if dim < 1:
        raise ParameterError(f"Dimension must be positive, got {dim}")
    rejections = 0
    while True:
        candidate = rng.field_matrix(ctx, dim, dim)
        if is_invertible(ctx, candidate):
            if rejections:
                logger.debug(f"Full-rank sample of dimension {dim} after {rejections} rejections")
            return candidate
        rejections += 1
