"""
Tests for cirlab result records
"""

import math

from cirlab.models import CheckOutcome, CurvePoint, RunManifest, RunSummary, TheoremReport


def test_upper_bound_margin() -> None:
    check = CheckOutcome("variance", observed=0.2, bound=0.5)
    assert math.isclose(check.margin, 0.3)
    assert check.passed


def test_lower_bound_margin() -> None:
    """Test that lower bounds flip the margin."""
    check = CheckOutcome("visits", observed=0.0, bound=1.0, upper=False)
    assert check.margin == -1.0
    assert not check.passed


def test_check_outcome_round_trip() -> None:
    check = CheckOutcome("gap", 1e-3, 1e-2, upper=True, asserted=False)
    data = check.to_dict()
    assert data["pass"] is True
    assert CheckOutcome.from_dict(data) == check


class TestTheoremReport:
    """Headline selection and serialisation."""

    def test_primary_is_first_failing_asserted_check(self) -> None:
        report = TheoremReport(
            theorem="t3",
            seed=2,
            checks=[
                CheckOutcome("reported", 5.0, 1.0, asserted=False),
                CheckOutcome("ok", 0.1, 1.0),
                CheckOutcome("bad", 2.0, 1.0),
            ],
        )
        assert report.name == "t3-seed2"
        assert not report.passed
        assert report.primary.name == "bad"
        assert report.failures == ["bad"]

    def test_unasserted_failures_do_not_fail_the_report(self) -> None:
        report = TheoremReport(
            theorem="t1",
            seed=0,
            checks=[CheckOutcome("sweep", 5.0, 1.0, asserted=False), CheckOutcome("rank", 6, 6)],
        )
        assert report.passed
        assert report.primary.name == "rank"

    def test_error_fails_the_report(self) -> None:
        report = TheoremReport(theorem="t2", seed=0, error="singular matrix")
        assert not report.passed
        assert report.primary is None
        assert report.failures == ["error"]
        data = report.to_dict()
        assert data["check"] is None
        assert math.isnan(data["margin"])

    def test_to_dict_fields(self) -> None:
        report = TheoremReport(
            theorem="t5",
            seed=1,
            parameters={"lambda": 0.3},
            checks=[CheckOutcome("qa_error", 1e-3, 1e-2)],
        )
        data = report.to_dict()
        assert data["pass"] is True
        assert data["theorem"] == "t5"
        assert data["parameters"] == {"lambda": 0.3}
        assert data["observed"] == 1e-3
        assert math.isclose(data["margin"], 9e-3)
        assert TheoremReport.from_dict(data) == report


def test_curve_row_uses_repr_floats() -> None:
    row = CurvePoint(env_step=10, eval_return=-1.5, alpha=0.1).to_row()
    assert row[:3] == ["10", "-1.5", "nan"]
    assert row[4] == "0.1"


def test_run_summary_round_trip() -> None:
    summary = RunSummary(seed=3, config={"env": "pendulum"}, final_return=-150.0,
                         wall_time=1.5, env_steps=100, clamp_count=2)
    assert RunSummary.from_dict(summary.to_dict()) == summary


def test_manifest_timestamps() -> None:
    """Test that manifests record UTC ISO timestamps."""
    manifest = RunManifest(config={}, seed=0, config_hash="abc")
    data = manifest.to_dict()
    assert data["finished_at"] is None
    assert data["started_at"].endswith("+00:00")
    manifest.finish()
    restored = RunManifest.from_dict(manifest.to_dict())
    assert restored.finished_at == manifest.finished_at
    assert restored.started_at == manifest.started_at
