import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countcp.errors import CalibrationError, ConfigError, DomainError
from countcp.models import inarch1, ingarch11
from countcp.qmle import fit_segment
from countcp.segment import (DetectionConfig, DpTables, LikelihoodMatrix, PenaltySpec, backtrack,
                             build_ml_matrix, candidate_grid, default_u_min, detect, dp_solve,
                             path_cost, penalty_value, segment_from_matrix, select_k, slope_fit,
                             slope_heuristic, unpenalized_curve)
from countcp.simulate import get_scenario, simulate_piecewise

from .oracles import brute_force_segmentation, random_ml_matrix


def _tables(final):
    c = np.full((len(final), 3), np.inf)
    c[:, -1] = final
    return DpTables(c, np.zeros((len(final) - 1, 3), dtype=np.int64), 0.0)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 11), u_min=st.integers(1, 3),
       kappa=st.floats(0, 8), integer=st.booleans())
def test_dp_matches_brute_force(seed, n, u_min, kappa, integer):
    rng = np.random.default_rng(seed)
    V = random_ml_matrix(rng, n, u_min, integer)
    k_hat, breaks, per_k = brute_force_segmentation(V, kappa, 3)
    tables = dp_solve(V, kappa, 3)
    np.testing.assert_array_equal(tables.final_costs(), per_k)
    if k_hat is None:
        with pytest.raises(ConfigError):
            select_k(tables)
        return
    assert select_k(tables) == k_hat
    got = backtrack(tables, k_hat)
    np.testing.assert_array_equal(got, breaks)
    assert path_cost(V, got, kappa) == tables.final_costs()[k_hat - 1]


def test_select_k_examples():
    assert select_k(_tables([5, 3, 4])) == 2
    assert select_k(_tables([3, 3, 9])) == 1
    with pytest.raises(ConfigError):
        select_k(_tables([np.inf, np.inf]))


def test_backtrack_single_segment():
    V = random_ml_matrix(np.random.default_rng(0), 8, 2)
    assert backtrack(dp_solve(V, 1.0, 3), 1).size == 0


def test_rows_without_admissible_segmentation_are_infinite():
    V = random_ml_matrix(np.random.default_rng(0), 5, 2)
    final = dp_solve(V, 0.0, 4).final_costs()
    assert np.isfinite(final[:2]).all() and np.isinf(final[2:]).all()


def test_dp_rejects_bad_arguments():
    V = random_ml_matrix(np.random.default_rng(0), 5, 2)
    with pytest.raises(DomainError):
        dp_solve(V, -1.0, 2)
    with pytest.raises(DomainError):
        dp_solve(V, 1.0, 0)


def test_penalty_monotonicity():
    rng = np.random.default_rng(7)
    for _ in range(30):
        V = random_ml_matrix(rng, int(rng.integers(6, 20)), 2)
        ks = [select_k(dp_solve(V, k, 5)) for k in (1, 2, 4, 8, 16, 32)]
        assert all(a >= b for a, b in zip(ks, ks[1:]))


def test_entry_count_and_grid():
    y = simulate_piecewise(get_scenario("IA2").with_n(60))
    ml = build_ml_matrix(y, inarch1(), DetectionConfig(u_min=10))
    n, u = 60, 10
    assert ml.entries() == (n - u + 1) * (n - u + 2) // 2
    starts, ends = candidate_grid(60, 10, 7)
    assert ends[-1] == 60 and list(ends[:3]) == [7, 14, 21]
    assert starts[0] == 0 and all(s in ends for s in starts[1:])
    coarse = build_ml_matrix(y, inarch1(), DetectionConfig(u_min=10, grid_step=7))
    mask = np.isfinite(coarse.values)
    # warm starts differ between grids, so agreement is to solver tolerance
    np.testing.assert_allclose(coarse.values[mask], ml.values[mask], rtol=0, atol=1e-8)


def test_ml_matrix_agrees_with_segment_fits():
    y = simulate_piecewise(get_scenario("IA1").with_n(120), replication=4)
    ml = build_ml_matrix(y, inarch1(), DetectionConfig(u_min=15))
    rng = np.random.default_rng(0)
    for _ in range(15):
        a = int(rng.integers(0, 100))
        b = int(rng.integers(a + 15, 121))
        fit = fit_segment(y, (a + 1, b), inarch1())
        assert ml.ml(a + 1, b) == pytest.approx(fit.loglik, abs=1e-8)
    with pytest.raises(DomainError):
        ml.fit(1, 5)


def test_slope_examples():
    ks = np.arange(1, 16)
    line = -(10.0 + 2.307 * ks)  # -QLIK(K) = 10 + 2.307 K
    assert slope_heuristic(line) == pytest.approx(4.614, abs=1e-9)
    curved = np.where(ks <= 7, -(50 * np.log(ks) + 3.0), 0.0)
    s = 1.75
    curved[7:] = -(50 * math.log(7) + 3.0 + s * (ks[7:] - 7))
    assert slope_fit(curved).window == (9, 15)
    assert slope_heuristic(curved) == pytest.approx(2 * s, abs=1e-9)
    with pytest.raises(CalibrationError):
        slope_heuristic(line[:3])
    with pytest.raises(CalibrationError):
        slope_heuristic(-line)  # decreasing -QLIK


def test_penalty_values():
    assert penalty_value(PenaltySpec("logn"), 1000) == pytest.approx(6.907755, abs=1e-6)
    assert penalty_value(PenaltySpec("cuberoot"), 1000) == pytest.approx(10.0)
    assert penalty_value(PenaltySpec.parse("fixed=23.04"), 1000) == 23.04
    with pytest.raises(DomainError):
        penalty_value(PenaltySpec("slope"), 1000)
    with pytest.raises(ConfigError):
        penalty_value(PenaltySpec.parse("fixed=50"), 20)
    with pytest.raises(DomainError):
        PenaltySpec.parse("fixed=")
    with pytest.raises(DomainError):
        PenaltySpec.parse("bic")
    assert PenaltySpec.parse("fixed=23.04").name == "fixed=23.04"


def test_default_u_min():
    assert default_u_min(1000) == 47
    assert default_u_min(636) == 41


def test_resolve_clamps_k_max():
    cfg = DetectionConfig(k_max=15, u_min=20)
    assert cfg.resolve(100, 2) == (4, 20)
    with pytest.raises(ConfigError):
        DetectionConfig(u_min=50).resolve(30, 2)
    with pytest.raises(ConfigError):
        DetectionConfig(history="bogus").resolve(100, 2)


def test_short_series_gives_single_segment():
    y = simulate_piecewise(get_scenario("IA0").with_n(40))
    seg = detect(y, inarch1(), DetectionConfig(u_min=40))
    assert seg.k_hat == 1 and seg.breaks.size == 0 and seg.kappa is None


def test_detect_finds_strong_break():
    sc = get_scenario("IA1").with_n(400)
    y = simulate_piecewise(sc, replication=0).copy()
    y[200:] += 4  # make the shift unmistakable
    seg = detect(y, inarch1(), DetectionConfig(penalty=PenaltySpec("cuberoot")))
    assert seg.k_hat == 2
    assert abs(int(seg.breaks[0]) - 200) <= 5
    assert seg.segments == [(1, int(seg.breaks[0])), (int(seg.breaks[0]) + 1, 400)]
    total = sum(-2 * f.loglik for f in seg.per_segment) + seg.kappa * seg.k_hat
    assert seg.total_contrast == pytest.approx(total)
    assert all(c is not None for c in seg.covariances)


def test_detect_is_deterministic():
    y = simulate_piecewise(get_scenario("IG1").with_n(300))
    a = detect(y, ingarch11(), DetectionConfig(penalty=PenaltySpec("logn")))
    b = detect(y, ingarch11(), DetectionConfig(penalty=PenaltySpec("logn")))
    np.testing.assert_array_equal(a.breaks, b.breaks)
    assert a.total_contrast == b.total_contrast


def test_segment_history_mode_runs():
    y = simulate_piecewise(get_scenario("IA1").with_n(300))
    ml = build_ml_matrix(y, inarch1(), DetectionConfig(history="segment"))
    k, breaks, _ = segment_from_matrix(ml, 10.0, 5)
    assert 1 <= k <= 5
    assert unpenalized_curve(ml, 5).size == 5


def test_from_values_masks_short_cells():
    V = np.zeros((5, 5))
    ml = LikelihoodMatrix.from_values(V, u_min=2)
    assert np.isneginf(ml.values[0, 1]) and ml.values[0, 2] == 0.0
