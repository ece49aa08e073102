"""
Tests for the NS coding-group parameter table
"""

import pytest

from two_level_pir.capacity_calc import SystemParams
from two_level_pir.exceptions import ParameterError
from two_level_pir.ns_params import build_table, reduction_factor, verify_group_properties

GOLDEN = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)


def small_systems(max_n=6, max_k=5):
    for N in range(1, max_n + 1):
        for T1 in range(1, N + 1):
            for T2 in range(1, T1 + 1):
                for K2 in range(1, max_k + 1):
                    for K1 in range(1, K2 + 1):
                        yield SystemParams(N=N, T1=T1, K1=K1, T2=T2, K2=K2)


def code_pairs(table):
    pairs = set()
    for c in table.classes.values():
        if c.n1 is not None:
            pairs.add((c.n1, c.k1))
        if c.n2 is not None:
            pairs.add((c.n2, c.k2))
    return pairs


def test_golden_table_entries():
    table = build_table(GOLDEN)
    assert table.M == 6
    assert table.L == 256
    assert table.d == {
        (0, 0): 0, (1, 0): 12, (2, 0): 12,
        (0, 1): 4, (1, 1): 4, (2, 1): 4,
        (0, 2): 12, (1, 2): 12, (2, 2): 12,
    }
    assert table.classes[(1, 0)].m == 48


def test_golden_codes_after_reduction():
    assert reduction_factor(GOLDEN) == 4
    table = build_table(GOLDEN).scaled(divisor=4)
    assert table.L == 64
    assert code_pairs(table) == {(24, 12), (8, 4), (16, 4)}
    assert table.code_for((1,), k_star=2) == (24, 12)
    assert table.code_for((3,), k_star=2) == (8, 4)
    assert table.code_for((1,), k_star=3) == (16, 4)
    assert table.m_of((1, 2)) == 12
    assert table.m_of((3, 4)) == 12
    assert table.m_of(()) == 0


@pytest.mark.parametrize("values, reduction, length", [
    ((4, 2, 2, 1, 4), 4, 64),
    ((4, 2, 2, 2, 2), 2, 8),
    ((6, 3, 2, 1, 4), 9, 144),
    ((3, 2, 2, 1, 3), 1, 27),
])
def test_reduction_factors(values, reduction, length):
    p = SystemParams(*values)
    assert reduction_factor(p) == reduction
    assert build_table(p).scaled(divisor=reduction).L == length


def test_non_dividing_reduction_rejected():
    with pytest.raises(ParameterError):
        build_table(GOLDEN).scaled(divisor=8)


def test_scaled_sizes_split_evenly_over_servers():
    for p in small_systems(max_n=5, max_k=4):
        table = build_table(p).scaled(divisor=reduction_factor(p))
        for c in table.classes.values():
            assert c.m % p.N == 0


def test_table_dict_is_serializable():
    data = build_table(GOLDEN).scaled(divisor=4).to_dict()
    assert data["params"] == "(4,2:2,1:4)"
    assert data["L"] == 64
    assert data["d"]["1,0"] == 3
    assert len(data["classes"]) == 8


def test_single_server_single_message():
    table = build_table(SystemParams(1, 1, 1, 1, 1))
    assert table.L == 1
    assert table.classes[(1, 0)].m == 1
    assert table.classes[(1, 0)].n1 is None
    assert reduction_factor(SystemParams(1, 1, 1, 1, 1)) == 1


def test_group_properties_hold_on_small_grid():
    for p in small_systems():
        report = verify_group_properties(p)
        assert report.passed, [c.to_dict() for c in report.failures]


def test_golden_property_report():
    report = verify_group_properties(GOLDEN)
    items = {c.item for c in report.checks}
    assert items == {"k1=m", "k2<=m", "desired-sum", "segments-fit", "ratio-high", "ratio-low"}
    assert report.to_dict()["passed"] is True
