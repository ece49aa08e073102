"""
Tests for the collusion privacy audit
"""

import pytest

from two_level_pir import ns_engine
from two_level_pir.algebra import SeededRng
from two_level_pir.capacity_calc import SystemParams
from two_level_pir.exceptions import ParameterError
from two_level_pir.privacy_audit import (
    CRITERION_FULL_RANK, CRITERION_IDENTICAL, AuditTarget, audit, build_broken_plan, collusion_block,
    pattern_signature,
)

GOLDEN = SystemParams(N=4, T1=2, K1=2, T2=1, K2=4)

SYSTEMS = [
    (4, 2, 2, 1, 4),
    (3, 2, 2, 1, 3),
    (6, 3, 2, 1, 4),
]


@pytest.mark.parametrize("values", SYSTEMS)
@pytest.mark.parametrize("scheme", ["NS", "NB"])
def test_both_requirements_certified(values, scheme):
    p = SystemParams(*values)
    for target in (AuditTarget.high(p, scheme), AuditTarget.low(p, scheme)):
        report = audit(target, seeds=[1])
        assert report.pattern_ok
        assert report.passed, [c.to_dict() for c in report.failures[:3]]
        assert report.verdict == "certified"


@pytest.mark.parametrize("values", [(4, 2, 2, 2, 2), (4, 1, 2, 1, 2)])
def test_single_level_ns_certified(values):
    p = SystemParams(*values)
    for target in (AuditTarget.high(p, "NS"), AuditTarget.low(p, "NS")):
        assert audit(target, seeds=[3]).passed


def test_golden_ns_audit_over_two_seeds():
    report = audit(AuditTarget.high(GOLDEN, "NS"), seeds=[42, 43])
    # 6 server pairs x 4 messages per seed
    assert len(report.checks) == 48
    assert report.criterion_counts() == {CRITERION_FULL_RANK: 48}


def test_nb_pure_table_certified_by_identical_rows():
    report = audit(AuditTarget.high(GOLDEN, "NB"), seeds=[42])
    counts = report.criterion_counts()
    assert report.passed
    assert counts[CRITERION_IDENTICAL] > 0
    assert all(c.criterion == CRITERION_IDENTICAL for c in report.checks if c.message > GOLDEN.K1)


def test_broken_plan_is_flagged():
    report = audit(AuditTarget.high(GOLDEN, "broken"), seeds=[42], plan_factory=build_broken_plan)
    assert not report.pattern_ok
    assert not report.passed
    data = report.to_dict()
    assert data["verdict"] == "leak"
    assert data["counterexample"] is not None
    assert set(data) == {"params", "scheme", "protected_set", "level", "pattern_ok", "verdict", "checks",
                         "counterexample", "justification"}


def test_broken_plan_is_flagged_by_default_factory():
    report = audit(AuditTarget.low(GOLDEN, "broken"), seeds=[1])
    assert report.verdict == "leak"


def test_pattern_signature_independent_of_desired_message():
    signatures = {pattern_signature(ns_engine.build_query(GOLDEN, k, SeededRng(5))) for k in GOLDEN.messages}
    assert len(signatures) == 1


def test_collusion_block_shape():
    plan = ns_engine.build_query(GOLDEN, 1, SeededRng(5))
    positions, matrix = collusion_block(plan, 1, (1, 2))
    assert matrix.shape == (32, 64)
    assert len(positions) == 32
    assert {server for server, _ in positions} == {1, 2}


def test_target_validation():
    with pytest.raises(ParameterError):
        AuditTarget(GOLDEN, "XX", (1,), 2)
    with pytest.raises(ParameterError):
        AuditTarget(GOLDEN, "NS", (), 2)
    with pytest.raises(ParameterError):
        AuditTarget(GOLDEN, "NS", (5,), 2)
    with pytest.raises(ParameterError):
        AuditTarget(GOLDEN, "NS", (1,), 5)
    with pytest.raises(ParameterError):
        audit(AuditTarget.high(GOLDEN, "NS"), seeds=[])


def test_target_shortcuts():
    assert AuditTarget.high(GOLDEN, "NS") == AuditTarget(GOLDEN, "NS", (1, 2), 2)
    assert AuditTarget.low(GOLDEN, "NB") == AuditTarget(GOLDEN, "NB", (1, 2, 3, 4), 1)
