import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from countcp.errors import DomainError
from countcp.models import (bininarch1, inarch1, inarch_inf, ingarch11, make_family,
                            mean_gradient_path, truncated_mean_path)

FAMILIES = [inarch1(), ingarch11(), bininarch1(), inarch_inf()]
counts = st.lists(st.integers(0, 30), min_size=1, max_size=40)


def random_theta(family, rng):
    while True:
        lo, hi = family.space.lower_array, family.space.upper_array
        th = lo + rng.uniform(0.05, 0.95, family.dim) * (hi - lo)
        if family.space.contains(th):
            return th


def test_inarch1_path():
    lam = truncated_mean_path(inarch1(), (0.5, 0.6), [2, 1, 3])
    np.testing.assert_allclose(lam, [0.5, 1.7, 1.1])


def test_ingarch11_first_mean_is_stationary_seed():
    lam = truncated_mean_path(ingarch11(), (1.0, 0.2, 0.15), [0, 0, 0])
    assert lam[0] == pytest.approx(1.0 / 0.85, abs=1e-6)
    grad = mean_gradient_path(ingarch11(), (1.0, 0.2, 0.15), [0, 0, 0])
    assert grad[0, 0] == pytest.approx(1.0 / 0.85, abs=1e-6)


def test_inarch_inf_zero_history():
    lam = truncated_mean_path(inarch_inf(), (0.5,), np.zeros(25, dtype=int))
    np.testing.assert_allclose(lam, 0.5)


def test_bininarch1_probability():
    lam = truncated_mean_path(bininarch1(), (0.15, 0.75), [1, 0])
    np.testing.assert_allclose(lam, [0.15, 0.90])


def test_inarch_inf_decay_sum_below_one():
    fam = inarch_inf()
    assert 0.0 < fam.decay_sum() < 1.0
    assert fam.decay(5)[0] == pytest.approx(1 / 2.2)


@pytest.mark.parametrize("theta", [(0.0, 0.5), (0.5, 1.0), (0.5, -0.1), (21.0, 0.2)])
def test_outside_box_is_domain_error(theta):
    with pytest.raises(DomainError):
        truncated_mean_path(inarch1(), theta, [1, 2])


def test_ingarch11_sum_constraint():
    with pytest.raises(DomainError):
        truncated_mean_path(ingarch11(), (1.0, 0.6, 0.5), [1, 2])


def test_empty_or_invalid_series():
    with pytest.raises(DomainError):
        truncated_mean_path(inarch1(), (0.5, 0.5), [])
    with pytest.raises(DomainError):
        truncated_mean_path(inarch1(), (0.5, 0.5), [1, -2])
    with pytest.raises(DomainError):
        make_family("inarch7")


def test_projection_lands_inside():
    rng = np.random.default_rng(0)
    for fam in FAMILIES:
        for _ in range(50):
            p = rng.normal(0, 3, fam.dim)
            assert fam.space.contains(fam.space.project(p))


@settings(max_examples=60, deadline=None)
@given(y=counts, seed=st.integers(0, 10_000))
def test_mean_respects_floor(y, seed):
    rng = np.random.default_rng(seed)
    for fam in FAMILIES:
        lam = truncated_mean_path(fam, random_theta(fam, rng), y)
        assert np.all(lam >= fam.space.mean_floor - 1e-12)
        assert np.all(np.isfinite(lam))


@settings(max_examples=60, deadline=None)
@given(y=counts, seed=st.integers(0, 10_000), cut=st.integers(1, 40))
def test_causality(y, seed, cut):
    """lambda_t depends only on y_1..y_{t-1}."""
    rng = np.random.default_rng(seed)
    cut = min(cut, len(y))
    y2 = list(y[:cut]) + [int(v) + 3 for v in y[cut:]]
    for fam in FAMILIES:
        th = random_theta(fam, rng)
        a = truncated_mean_path(fam, th, y)
        b = truncated_mean_path(fam, th, y2)
        np.testing.assert_array_equal(a[:cut + 1][:len(y)], b[:cut + 1][:len(y)])


@settings(max_examples=40, deadline=None)
@given(y=counts, seed=st.integers(0, 10_000))
def test_affine_families_are_affine(y, seed):
    rng = np.random.default_rng(seed)
    for fam in (inarch1(), inarch_inf()):
        t1, t2 = random_theta(fam, rng), random_theta(fam, rng)
        w = rng.uniform()
        mid = truncated_mean_path(fam, w * t1 + (1 - w) * t2, y)
        lin = w * truncated_mean_path(fam, t1, y) + (1 - w) * truncated_mean_path(fam, t2, y)
        np.testing.assert_allclose(mid, lin, rtol=1e-12, atol=1e-12)


def test_mean_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    h = 1e-6
    for fam in FAMILIES:
        for _ in range(20):
            y = rng.poisson(1.5, 30)
            if fam.variant == "bininarch1":
                y = np.minimum(y, 1)
            th = random_theta(fam, rng)
            g = mean_gradient_path(fam, th, y)
            for k in range(fam.dim):
                e = np.zeros(fam.dim)
                e[k] = h
                fd = (truncated_mean_path(fam, th + e, y) - truncated_mean_path(fam, th - e, y)) / (2 * h)
                rel = np.abs(g[:, k] - fd) / np.maximum(1.0, np.abs(g[:, k]))
                assert rel.max() <= 1e-4
