import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.stats import kstest, ks_2samp, norm

from coalflow.lp_fixtures import brute_force_lp, random_monotone_paths
from coalflow.metrics import (
    DegenerateInput,
    LengthMismatch,
    MonotonePath,
    ks_statistic,
    ks_threshold,
    ks_two_sample,
    levy_prokhorov,
    normal_cdf,
    order_violation_probability,
    quadratic_covariation,
    rate_fit,
    stable_mean,
    sup_norm,
    total_variation,
)

FIXTURES = random_monotone_paths(20, seed=1)


@st.composite
def monotone_paths(draw, n=6):
    gaps = draw(st.lists(st.floats(0.05, 1.0), min_size=n - 1, max_size=n - 1))
    b = np.concatenate([[0.0], np.cumsum(gaps)])
    b = b / b[-1]
    inc = draw(st.lists(st.floats(0.0, 0.5), min_size=n, max_size=n))
    v = np.cumsum(inc) + draw(st.floats(-0.5, 0.5))
    return MonotonePath(b, v)


def test_monotone_path_validation():
    with pytest.raises(ValueError):
        MonotonePath([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        MonotonePath([0.1, 1.0], [0.0, 1.0])
    p = MonotonePath([0.0, 0.5, 1.0], [0.0, 1.0, 1.0], kind="step")
    assert p(0.49) == 0.0 and p(0.5) == 1.0
    q = MonotonePath([0.0, 1.0], [0.0, 1.0], extension="affine")
    assert q(-0.5) == -0.5 and q(1.5) == 1.5
    assert MonotonePath([0.0, 1.0], [0.0, 1.0])(1.5) == 1.0
    r = MonotonePath.from_samples([0, 0.5, 1], [0.0, 2.0, 1.0], rearrange=True)
    assert r.values.tolist() == [0.0, 1.0, 2.0]


def test_lp_identity_and_shift():
    u = np.linspace(0, 1, 11)
    f = MonotonePath(u, u)
    assert levy_prokhorov(f, f) == 0.0
    fa = MonotonePath(u, u, extension="affine")
    ga = MonotonePath(u, u + 0.1, extension="affine")
    assert levy_prokhorov(fa, ga) == pytest.approx(0.05, abs=1e-6)
    # with constant extension the boundary pins the answer to the full shift
    assert levy_prokhorov(f, MonotonePath(u, u + 0.1)) == pytest.approx(0.1, abs=1e-6)


def test_lp_step_functions():
    f = MonotonePath([0.0, 0.5, 1.0], [0.0, 1.0, 1.0], kind="step")
    g = MonotonePath([0.0, 0.6, 1.0], [0.0, 1.0, 1.0], kind="step")
    # a jump displaced horizontally by 0.1 costs 0.1
    assert levy_prokhorov(f, g) == pytest.approx(0.1, abs=1e-6)
    assert sup_norm(f, g) == 1.0


def test_lp_agrees_with_brute_force_on_fixtures():
    for f, g in zip(FIXTURES, FIXTURES[1:] + FIXTURES[:1]):
        rho = levy_prokhorov(f, g)
        assert abs(rho - brute_force_lp(f, g)) <= 1e-3
        assert rho <= sup_norm(f, g) + 1e-9


def test_lp_metric_axioms_on_fixtures():
    for i, f in enumerate(FIXTURES):
        for g in FIXTURES[i + 1 :]:
            assert levy_prokhorov(f, g) == pytest.approx(levy_prokhorov(g, f), abs=1e-9)
    for f in FIXTURES[:8]:
        for g in FIXTURES[:8]:
            for h in FIXTURES[:8]:
                assert levy_prokhorov(f, h) <= levy_prokhorov(f, g) + levy_prokhorov(g, h) + 2e-9


@settings(max_examples=60, deadline=None)
@given(monotone_paths(), monotone_paths())
def test_lp_properties(f, g):
    rho = levy_prokhorov(f, g)
    assert 0.0 <= rho <= sup_norm(f, g) + 1e-9
    assert rho == pytest.approx(levy_prokhorov(g, f), abs=1e-8)
    # the returned eps is feasible and anything a bit smaller is not (unless rho = 0)
    from coalflow.metrics import _envelope_ok
    assert _envelope_ok(f, g, rho + 1e-9)
    if rho > 1e-6:
        assert not _envelope_ok(f, g, rho - 1e-6)


def test_sup_norm_kind_mismatch():
    a = MonotonePath([0.0, 1.0], [0.0, 1.0])
    b = MonotonePath([0.0, 1.0], [0.0, 1.0], kind="step")
    with pytest.raises(ValueError):
        sup_norm(a, b)


def test_quadratic_covariation():
    a = np.array([0.0, 1.0, 3.0])
    b = np.array([0.0, 2.0, 1.0])
    assert quadratic_covariation(a, b) == 1 * 2 + 2 * -1
    with pytest.raises(LengthMismatch):
        quadratic_covariation(a, b[:2])
    with pytest.raises(LengthMismatch):
        quadratic_covariation(a[:1], b[:1])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10**6))
def test_quadratic_covariation_bilinear_symmetric(n, s, t, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.standard_normal((3, n))
    q = quadratic_covariation
    assert q(a, b) == pytest.approx(q(b, a), abs=1e-12)
    assert q(s * a + t * c, b) == pytest.approx(s * q(a, b) + t * q(c, b), abs=1e-9)


def test_ks_statistic_against_scipy():
    x = np.random.default_rng(0).standard_normal(5000)
    assert ks_statistic(x, norm.cdf) == pytest.approx(kstest(x, "norm").statistic, abs=1e-12)
    assert ks_statistic(x, norm.cdf) < 1.63 / math.sqrt(5000)
    y = np.random.default_rng(1).standard_normal(3000) + 0.1
    assert ks_two_sample(x, y) == pytest.approx(ks_2samp(x, y).statistic, abs=1e-12)


def test_ks_degenerate_cases():
    c = 0.3
    assert ks_statistic(np.full(10, c), norm.cdf) == pytest.approx(max(norm.cdf(c), 1 - norm.cdf(c)))
    assert ks_two_sample([0.0, 1.0], [5.0, 6.0]) == 1.0
    assert ks_statistic(np.array([100.0]), norm.cdf) == pytest.approx(1.0)


def test_normal_cdf_and_threshold():
    assert normal_cdf(1.0, 2.0)(1.0) == pytest.approx(0.5)
    assert normal_cdf()(1.96) == pytest.approx(norm.cdf(1.96), abs=1e-12)
    assert ks_threshold(5000, safety=1.0) == pytest.approx(1.6276 / math.sqrt(5000), rel=1e-3)


def test_rate_fit():
    ns = [8, 16, 32, 64]
    assert rate_fit(ns, [3 / math.sqrt(n) for n in ns]).slope == pytest.approx(-0.5)
    assert rate_fit(ns, [2.0 / n for n in ns]).slope == pytest.approx(-1.0)
    with pytest.raises(DegenerateInput):
        rate_fit([1, 2], [1.0, 0.5])
    with pytest.raises(DegenerateInput):
        rate_fit([1, 2, 3], [1.0, 0.0, 0.5])


def test_order_violation_probability():
    ordered = np.stack([np.zeros(5), np.ones(5)], axis=1)
    assert order_violation_probability(ordered, 0.01) == 0.0
    assert order_violation_probability(ordered, math.inf) == 0.0
    crossed = ordered.copy()
    crossed[3, 1] = -0.5
    assert order_violation_probability(np.stack([ordered, crossed]), 0.1) == 0.5


def test_total_variation_and_stable_mean():
    assert total_variation([1, 1, 2, 2], [1, 1, 2, 2]) == 0.0
    assert total_variation([1, 1], [3, 3]) == 1.0
    assert stable_mean([1e16, 1.0, -1e16, 1.0]) == 0.5
