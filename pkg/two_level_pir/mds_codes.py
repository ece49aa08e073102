"""
MDS Codes
=========

A fixed (n, k) MDS code for every pair with k <= n < q: the systematic generator
[I_k | C] where C is the Cauchy matrix C[i, j] = 1 / (x_i - y_j) on the
evaluation points x = 0..k-1 and y = k..n-1. Every square submatrix of a Cauchy
matrix is invertible, so any k coordinates determine the codeword.

Codes are memoized per (n, k, q) and built at most once per process.
"""

import logging
import threading
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Tuple, Union

import numpy as np

from .algebra import FieldContext, Matrix, solve_square
from .exceptions import CorruptionError, InsufficientInformationError, ParameterError

logger = logging.getLogger(__name__)

KnownSymbols = Union[Mapping[int, object], Iterable[Tuple[int, object]]]

_code_cache: Dict[Tuple[int, int, int], "MdsCode"] = {}
_cache_lock = threading.Lock()


@dataclass(frozen=True, eq=False)
class MdsCode:
    """An (n, k) systematic MDS code over F_q with a read-only k×n generator."""

    n: int
    k: int
    field: FieldContext
    generator: Matrix

    @property
    def q(self) -> int:
        return self.field.q


def _systematic_generator(n: int, k: int, ctx: FieldContext) -> Matrix:
    q = ctx.q
    # x_i - y_j = i - (k + j) depends only on k + j - i, which runs over 1..n-1
    inverse_of_negated = [0] + [pow(q - d, q - 2, q) for d in range(1, n)]
    rows = np.arange(k).reshape(-1, 1)
    cols = np.arange(n - k).reshape(1, -1)
    offsets = k + cols - rows
    lookup = np.array(inverse_of_negated, dtype=object)
    cauchy = lookup[offsets]
    generator = np.concatenate([np.eye(k, dtype=object), cauchy], axis=1)
    generator = ctx.asarray(generator)
    generator.setflags(write=False)
    return generator


def make_code(n: int, k: int, ctx: FieldContext) -> MdsCode:
    """
    Return the fixed (n, k) MDS code over ctx.

    Args:
        n: codeword length
        k: message length, 1 <= k <= n
        ctx: field with q > n

    Returns:
        The memoized MdsCode for (n, k, q)
    """
    if k < 1 or k > n:
        raise ParameterError(f"MDS code needs 1 <= k <= n, got (n, k) = ({n}, {k})")
    if ctx.q <= n:
        raise ParameterError(f"Field modulus {ctx.q} must exceed code length {n}")
    key = (n, k, ctx.q)
    with _cache_lock:
        code = _code_cache.get(key)
        if code is None:
            code = MdsCode(n=n, k=k, field=ctx, generator=_systematic_generator(n, k, ctx))
            _code_cache[key] = code
            logger.debug(f"Built ({n}, {k}) MDS code over F_{ctx.q}")
    return code


def encode(code: MdsCode, message: Matrix) -> Matrix:
    """
    Encode a message of length k into a codeword of length n.

    A 2-D message of shape (k, w) encodes w-wide symbols column by column and
    returns shape (n, w).
    """
    message = code.field.asarray(message)
    if message.shape[0] != code.k:
        raise ParameterError(f"Message length {message.shape[0]} does not match k = {code.k}")
    return code.field.matmul(np.transpose(code.generator), message)


def complete(code: MdsCode, known: KnownSymbols) -> Matrix:
    """
    Erasure-complete a codeword from at least k known coordinates.

    Args:
        code: the MDS code
        known: position -> symbol, as a mapping or as (position, symbol) pairs;
            symbols may be scalars or equal-length vectors

    Returns:
        The unique codeword agreeing with every known coordinate
    """
    pairs = list(known.items()) if isinstance(known, Mapping) else list(known)
    positions = [int(p) for p, _ in pairs]
    if len(set(positions)) != len(positions):
        raise ParameterError("Known positions must be distinct")
    if any(p < 0 or p >= code.n for p in positions):
        raise ParameterError(f"Known positions must lie in [0, {code.n})")
    if len(positions) < code.k:
        raise InsufficientInformationError(
            f"({code.n}, {code.k}) code needs {code.k} coordinates, got {len(positions)}")

    ctx = code.field
    values = ctx.asarray([symbol for _, symbol in pairs])
    basis = positions[:code.k]
    message = solve_square(ctx, np.transpose(code.generator[:, basis]), values[:code.k])
    codeword = encode(code, message)

    if len(positions) > code.k:
        extra = positions[code.k:]
        if not np.array_equal(codeword[extra], values[code.k:]):
            raise CorruptionError(
                f"Known symbols of the ({code.n}, {code.k}) code are not consistent with any codeword")
    return codeword
