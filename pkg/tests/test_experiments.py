from fractions import Fraction

import numpy as np
import pytest

from countcp.experiments import (FrequencyReport, normality_check, reports_from_json, reports_to_csv,
                                 reports_to_json, run_replications)
from countcp.models import inarch1
from countcp.segment import DetectionConfig, PenaltySpec
from countcp.simulate import get_scenario


@pytest.fixture(scope="module")
def small_reports():
    sc = get_scenario("IA1").with_n(200)
    pens = [PenaltySpec("slope"), PenaltySpec("logn"), PenaltySpec("cuberoot")]
    return run_replications(sc, 2, pens, DetectionConfig(u_min=20, k_max=6))


def test_one_report_per_penalty(small_reports):
    assert [r.penalty for r in small_reports] == ["slope", "logn", "cuberoot"]
    for r in small_reports:
        assert r.replications == 2 and len(r.k_hats) == 2
        assert r.freq_equal + r.freq_under + r.freq_over == 1


def test_single_replication_frequencies_are_binary():
    sc = get_scenario("IA0").with_n(150)
    (rep,) = run_replications(sc, 1, [PenaltySpec("cuberoot")], DetectionConfig(u_min=20, k_max=4))
    assert rep.freq_equal in (0, 1) and rep.freq_over in (0, 1)
    assert np.isnan(rep.mean_tau_error)
    with pytest.raises(ValueError):
        run_replications(sc, 0, [PenaltySpec("cuberoot")])


def test_report_round_trip(small_reports):
    back = reports_from_json(reports_to_json(small_reports))
    assert [b.to_dict() for b in back] == [r.to_dict() for r in small_reports]
    csv_text = reports_to_csv(small_reports)
    lines = csv_text.strip().splitlines()
    assert len(lines) == 4
    assert lines[0].startswith("scenario,n,penalty,replications,failures,freq_equal")
    assert lines[0].endswith("mean_tau_error")


def test_replications_do_not_depend_on_worker_count():
    sc = get_scenario("IA1").with_n(150)
    cfg = DetectionConfig(u_min=15, k_max=5)
    pens = [PenaltySpec("logn")]
    a = run_replications(sc, 3, pens, cfg, workers=1)
    b = run_replications(sc, 3, pens, cfg, workers=2)
    assert reports_to_json(a) == reports_to_json(b)


def test_failed_runs_are_excluded():
    rep = FrequencyReport("X", 100, "slope", 3, 2, [0.5], [2, None, 3], [[50], [], [30, 60]],
                          [1.0, None, 2.0])
    assert rep.failures == 1 and rep.completed == 2
    assert rep.freq_equal == Fraction(1, 2) and rep.freq_over == Fraction(1, 2)
    assert rep.tau_mean == [0.5]
    assert rep.mean_tau_error == 0.0


def test_coverage_small():
    cov = normality_check(inarch1(), (0.5, 0.6), 500, 1)
    assert cov.used == 1
    assert set(cov.sandwich.tolist()) <= {0.0, 1.0}
