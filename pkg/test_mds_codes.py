"""
Tests for the systematic Cauchy MDS codes
"""

import itertools
import threading

import numpy as np
import pytest

from two_level_pir import mds_codes
from two_level_pir.algebra import FieldContext, SeededRng, default_modulus, is_invertible, rank
from two_level_pir.exceptions import CorruptionError, InsufficientInformationError, ParameterError
from two_level_pir.mds_codes import complete, encode, make_code

CTX = FieldContext(7)


def test_generator_is_systematic_and_read_only():
    code = make_code(6, 3, CTX)
    assert code.generator.shape == (3, 6)
    assert np.array_equal(code.generator[:, :3], CTX.identity(3))
    assert not code.generator.flags.writeable


def test_every_k_columns_independent():
    code = make_code(6, 3, CTX)
    for positions in itertools.combinations(range(6), 3):
        assert rank(CTX, code.generator[:, list(positions)]) == 3


def test_complete_from_any_k_positions():
    code = make_code(6, 3, CTX)
    message = SeededRng(4).field_vector(CTX, 3)
    codeword = encode(code, message)
    assert np.array_equal(codeword[:3], message)
    for positions in itertools.combinations(range(6), 3):
        known = {p: codeword[p] for p in positions}
        assert np.array_equal(complete(code, known), codeword)


def test_complete_accepts_consistent_extras():
    code = make_code(8, 3, FieldContext(11))
    codeword = encode(code, [1, 2, 3])
    known = [(p, codeword[p]) for p in (7, 1, 4, 5, 0)]
    assert np.array_equal(complete(code, known), codeword)


def test_vector_symbols():
    ctx = FieldContext(29)
    code = make_code(10, 4, ctx)
    message = SeededRng(2).field_matrix(ctx, 4, 5)
    codeword = encode(code, message)
    assert codeword.shape == (10, 5)
    known = [(p, codeword[p]) for p in (9, 8, 2, 5)]
    assert np.array_equal(complete(code, known), codeword)


def test_inconsistent_extras_rejected():
    code = make_code(6, 3, CTX)
    codeword = encode(code, [1, 2, 3])
    known = {p: int(codeword[p]) for p in range(5)}
    known[4] = (known[4] + 1) % 7
    with pytest.raises(CorruptionError):
        complete(code, known)


def test_too_few_positions():
    code = make_code(6, 3, CTX)
    with pytest.raises(InsufficientInformationError):
        complete(code, {0: 1, 5: 2})


@pytest.mark.parametrize("known", [{6: 1, 0: 1, 1: 1}, [(0, 1), (0, 1), (2, 1)]])
def test_invalid_positions(known):
    with pytest.raises(ParameterError):
        complete(make_code(6, 3, CTX), known)


@pytest.mark.parametrize("n, k", [(7, 3), (4, 0), (3, 4)])
def test_invalid_code_parameters(n, k):
    with pytest.raises(ParameterError):
        make_code(n, k, CTX)


def test_message_length_checked():
    with pytest.raises(ParameterError):
        encode(make_code(6, 3, CTX), [1, 2])


def test_trivial_codes():
    assert np.array_equal(encode(make_code(3, 3, CTX), [4, 5, 6]), [4, 5, 6])
    repetition = make_code(4, 1, CTX)
    assert np.array_equal(encode(repetition, [5]), [5, 2, 1, 3])


def test_codes_are_memoized_across_threads():
    ctx = FieldContext(101)
    results = []

    def build():
        results.append(make_code(40, 17, ctx))

    threads = [threading.Thread(target=build) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert all(code is results[0] for code in results)
    assert make_code(40, 17, FieldContext(101)) is results[0]


@pytest.mark.parametrize("n", range(1, 11))
def test_every_k_subset_invertible_at_default_modulus(n):
    ctx = FieldContext(default_modulus(n))
    for k in range(1, n + 1):
        generator = make_code(n, k, ctx).generator
        for positions in itertools.combinations(range(n), k):
            assert is_invertible(ctx, generator[:, list(positions)]), (n, k, positions)


def test_eight_four_code_over_f11():
    ctx = FieldContext(11)
    code = make_code(8, 4, ctx)
    subsets = list(itertools.combinations(range(8), 4))
    assert len(subsets) == 70
    assert all(is_invertible(ctx, code.generator[:, list(s)]) for s in subsets)

    rng = SeededRng(8)
    for _ in range(3):
        message = rng.field_vector(ctx, 4)
        codeword = encode(code, message)
        for erased in itertools.combinations(range(8), 4):
            kept = [p for p in range(8) if p not in erased]
            recovered = complete(code, {p: codeword[p] for p in kept})
            assert np.array_equal(recovered[:4], message)


def test_encode_is_linear():
    ctx = FieldContext(29)
    code = make_code(9, 5, ctx)
    rng = SeededRng(17)
    for a in (0, 1, 7, 28):
        x = rng.field_vector(ctx, 5)
        y = rng.field_vector(ctx, 5)
        combined = (a * x + y) % 29
        expected = (a * encode(code, x) + encode(code, y)) % 29
        assert np.array_equal(encode(code, combined), expected)


def test_make_code_is_deterministic(monkeypatch):
    ctx = FieldContext(13)
    first = make_code(10, 4, ctx).generator.copy()
    monkeypatch.setattr(mds_codes, "_code_cache", {})
    rebuilt = make_code(10, 4, ctx)
    assert np.array_equal(rebuilt.generator, first)
    assert np.array_equal(rebuilt.generator[:, :4], ctx.identity(4))
