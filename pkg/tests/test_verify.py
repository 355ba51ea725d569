import time

import pytest

from sailforge.verify import (
    REPORT_HEADER, OracleReport, check_best_worst, check_dpo_loss, check_gaussian_sampler, check_gradients,
    check_reward, check_schedule, format_report, oracle_battery,
)


def test_battery_passes_quickly():
    t0 = time.perf_counter()
    reports = oracle_battery(0)
    assert time.perf_counter() - t0 < 60
    assert [r.check for r in reports] == sorted(r.check for r in reports)
    assert len(reports) == 6
    assert all(r.passed for r in reports), format_report(reports)


def test_reports_are_deterministic():
    assert format_report(oracle_battery(3)) == format_report(oracle_battery(3))


@pytest.mark.parametrize("seed", [1, 2])
def test_tight_checks_hold_for_other_seeds(seed):
    assert check_schedule(seed).discrepancy <= 1e-12
    assert check_reward(seed).discrepancy <= 1e-12
    assert check_dpo_loss(seed).discrepancy <= 1e-12
    assert check_best_worst(seed, n_sets=100).discrepancy == 0
    assert check_gradients(seed, n_models=5).discrepancy <= 1e-5


def test_gaussian_sampler_within_three_standard_errors():
    assert check_gaussian_sampler(7).discrepancy < 3.0


def test_report_judgement_and_format():
    ok, bad = OracleReport.judge("a", 1e-13, 1e-12), OracleReport.judge("b", 2.0, 1.0)
    assert ok.passed and not bad.passed and bad.status == "fail"
    assert format_report([ok, bad]).splitlines() == [REPORT_HEADER, ok.row(), bad.row()]
