import numpy as np
import pytest

from countcp.errors import ConfigError
from countcp.models import inarch1, ingarch11
from countcp.simulate import (Emission, ScenarioConfig, dump_scenario, get_scenario, load_scenario,
                              parse_scenario, scenario_library, simulate_piecewise, stream)


def test_library_values():
    lib = scenario_library()
    assert len(lib) == 14
    ia2 = lib["IA2"]
    assert ia2.theta_star == ((0.5, 0.6), (1.0, 0.6), (1.0, 0.25))
    assert ia2.tau_star == (0.3, 0.7)
    assert ia2.t_star == (300, 700)
    nb = lib["NB-IG1"]
    assert nb.emission.r == 14 and nb.theta_star[1] == (1.0, 0.45, 0.15)
    assert lib["IA-INF1"].theta_star == ((0.5,), (0.1,))
    assert lib["IA0"].k_star == 1


def test_unknown_scenario_lists_alternatives():
    with pytest.raises(ConfigError, match="IA0"):
        get_scenario("nope")


def test_determinism_and_independent_streams():
    sc = get_scenario("IA2")
    a = simulate_piecewise(sc, replication=3)
    b = simulate_piecewise(sc, replication=3)
    c = simulate_piecewise(sc, replication=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert stream(7, 0).integers(1 << 30) == stream(7, 0).integers(1 << 30)


def test_law_of_large_numbers_inarch1():
    # stationary mean alpha0 / (1 - alpha) = 1.25
    sc = get_scenario("IA0").with_n(100_000)
    y = simulate_piecewise(sc)
    assert y.mean() == pytest.approx(1.25, rel=0.03)


def test_regime_means_follow_the_switch():
    sc = get_scenario("IA1").with_n(40_000)
    y = simulate_piecewise(sc)
    assert y[:20_000].mean() == pytest.approx(1.25, rel=0.05)
    assert y[20_000:].mean() == pytest.approx(2.5, rel=0.05)


def test_negbin_overdispersion():
    sc = get_scenario("NB-IG0").with_n(50_000)
    y, lam = simulate_piecewise(sc, return_means=True)
    # conditional variance lam + lam^2 / r against the Poisson lam
    resid = (y - lam) ** 2
    ratio = resid.mean() / lam.mean()
    expected = 1.0 + (lam ** 2).mean() / (14.0 * lam.mean())
    assert ratio == pytest.approx(expected, rel=0.05)
    assert y.var() / y.mean() > 1.0


def test_bernoulli_support():
    y = simulate_piecewise(get_scenario("BIN-IA2"))
    assert set(np.unique(y)) <= {0, 1}


def test_config_validation():
    fam = inarch1()
    P = Emission("poisson")
    with pytest.raises(ConfigError):
        ScenarioConfig(fam, P, 100, (0.5,), ((0.5, 0.6),))
    with pytest.raises(ConfigError):
        ScenarioConfig(fam, P, 100, (0.7, 0.3), ((0.5, 0.6), (1.0, 0.6), (1.0, 0.2)))
    with pytest.raises(ConfigError):
        ScenarioConfig(fam, P, 100, (0.5,), ((0.5, 0.6), (0.5, 0.6)))
    with pytest.raises(ConfigError):
        ScenarioConfig(fam, Emission("bernoulli"), 100, (), ((0.5, 0.3),))
    with pytest.raises(ConfigError):
        Emission("negbin")
    with pytest.raises(ConfigError):
        Emission("gamma")


def test_scenario_round_trip(tmp_path):
    for sc in scenario_library().values():
        back = parse_scenario(dump_scenario(sc.with_seed(9)))
        assert back == sc.with_seed(9)
    p = tmp_path / "s.ini"
    p.write_text(dump_scenario(get_scenario("NB-IG2")))
    assert load_scenario(p) == get_scenario("NB-IG2")


def test_malformed_scenario_file():
    with pytest.raises(ConfigError):
        parse_scenario("[scenario]\nfamily = inarch1\n")
    with pytest.raises(ConfigError):
        parse_scenario("[scenario]\nfamily = inarch1\nn = 10\ntheta_star = a, b\n")


def test_custom_ingarch_scenario_means():
    sc = ScenarioConfig(ingarch11(), Emission("poisson"), 200, (), ((1.0, 0.2, 0.15),), burn_in=0)
    y, lam = simulate_piecewise(sc, return_means=True)
    assert lam[0] == pytest.approx(1.0 / 0.85)
    np.testing.assert_allclose(lam[1:], 1.0 + 0.2 * y[:-1] + 0.15 * lam[:-1])
