"""
Tests for the numeric theorem checks
"""

import json

import pytest

from cirlab import theorems
from cirlab.theorems import (
    THEOREMS,
    TheoryParams,
    check_linear_rate,
    check_projected_td,
    check_rank_preservation,
    check_tabular_convergence,
    check_variance_reduction,
    run_check,
    run_checks,
)
from cirlab.theory_lab import TheoryError


def _names(report) -> list[str]:
    return [c.name for c in report.checks]


def test_rank_preservation_passes():
    report = check_rank_preservation(0, TheoryParams())
    assert report.passed
    assert report.primary.name == "preserved_fraction"
    assert report.primary.observed == 1.0
    assert report.parameters["c"] == 0.01


def test_rank_sweep_is_reported_only():
    report = check_rank_preservation(1, TheoryParams(trials=10, sweep=True))
    sweep = [c for c in report.checks if c.name.startswith("sweep_c=")]
    assert [c.name for c in sweep] == ["sweep_c=0.01", "sweep_c=0.1", "sweep_c=1", "sweep_c=10"]
    assert not any(c.asserted for c in sweep)
    assert report.passed


def test_variance_reduction_passes():
    report = check_variance_reduction(0, TheoryParams())
    assert report.passed, report.failures
    assert "variance_tanh_vs_plain" in _names(report)
    assert report.parameters["dim"] == 8


def test_large_scale_does_not_assert_pointwise_gap():
    report = check_variance_reduction(0, TheoryParams(c=5.0, steps=2000))
    gap = next(c for c in report.checks if c.name == "pointwise_bound_gap")
    assert not gap.asserted


def test_projected_td_report_structure():
    """A shortened run keeps every measured quantity and the projection bound."""
    report = check_projected_td(0, TheoryParams(steps=2000, trials=1))
    assert _names(report) == [
        "scaled_fixed_point_distance",
        "max_norm",
        "tail_movement_3T/4",
        "orthogonality_residual",
        "tail_movement_T/2",
        "fixed_point_distance",
    ]
    asserted = [c.name for c in report.checks if c.asserted]
    assert asserted == ["scaled_fixed_point_distance", "max_norm"]
    max_norm = next(c for c in report.checks if c.name == "max_norm")
    assert max_norm.passed
    assert report.parameters["steps"] == 2000
    assert report.parameters["mdps"] == 1
    assert report.parameters["rewards"] == "uniform[-1,1]"
    assert "reward_scale" not in report.parameters


@pytest.mark.slow
def test_projected_td_at_full_step_budget():
    """Unit-scale rewards, 2·10⁵ steps: θ settles near θ* and the 1e-2 lines are recorded."""
    report = check_projected_td(0, TheoryParams(trials=3))
    assert report.parameters["steps"] == 200_000
    assert report.passed, report.failures
    tail = next(c for c in report.checks if c.name == "tail_movement_3T/4")
    assert tail.bound == 1e-2
    assert 0 < tail.observed < 0.1


def test_linear_rate_passes():
    report = check_linear_rate(3, TheoryParams())
    assert report.passed, report.failures
    params = report.parameters
    assert 0 < params["lambda"] < params["beta"] / 2
    assert params["alpha"] == pytest.approx(1.0 / params["beta"])


def test_tabular_report_structure():
    """A short run keeps the exact gap identity and reports the 1e-2 lines."""
    report = check_tabular_convergence(0, TheoryParams(steps=5000))
    assert report.parameters["lambda"] == [0.3, 1.0]
    assert report.parameters["transitions"] == "dirichlet"
    assert report.parameters["schedule"] == "(1+0.1n)^-1"
    assert len(report.checks) == 12
    for c in report.checks:
        if c.name.startswith("gap_identity"):
            assert c.passed
        if c.name.startswith(("qa_error", "qb_error")):
            assert not c.asserted
            assert c.bound == 1e-2


@pytest.mark.slow
def test_tabular_convergence_passes_for_both_lambdas():
    report = check_tabular_convergence(0, TheoryParams())
    assert report.parameters["steps"] == 1_000_000
    assert report.passed, report.failures


@pytest.mark.slow
def test_tabular_single_lambda_override():
    report = check_tabular_convergence(2, TheoryParams(lam=0.5))
    assert report.parameters["lambda"] == [0.5]
    assert _names(report)[0] == "qa_relative_error[lambda=0.5]"
    assert report.passed, report.failures


def test_unknown_theorem():
    with pytest.raises(ValueError, match="unknown theorem"):
        run_check("t9", 0)


def test_internal_failure_becomes_failing_report(monkeypatch):
    def broken(seed, params):
        raise TheoryError("quadratic expansion does not reproduce the regularised TD loss")

    monkeypatch.setitem(theorems.CHECKS, "t4", broken)
    report = run_check("t4", 5, TheoryParams(gamma=0.8))
    assert not report.passed
    assert report.error.startswith("quadratic expansion")
    assert report.parameters == {"gamma": 0.8, "sweep": False}


def test_run_checks_order_and_serialisation():
    reports = run_checks(["t1", "t4"], [0, 1], TheoryParams(trials=5))
    assert [r.name for r in reports] == ["t1-seed0", "t1-seed1", "t4-seed0", "t4-seed1"]
    for report in reports:
        data = json.loads(json.dumps(report.to_dict()))
        assert data["pass"] is True
        assert data["margin"] >= 0


def test_parallel_matches_sequential():
    params = TheoryParams(trials=5)
    sequential = run_checks(["t1"], [0, 1], params, workers=1)
    parallel = run_checks(["t1"], [0, 1], params, workers=2)
    assert [r.to_dict() for r in sequential] == [r.to_dict() for r in parallel]


def test_params_to_dict_drops_unset():
    assert TheoryParams(c=0.1).to_dict() == {"c": 0.1, "sweep": False}


def test_theorem_registry():
    assert THEOREMS == tuple(sorted(theorems.CHECKS))
    assert all(callable(fn) for fn in theorems.CHECKS.values())
