import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnews.distortion import make_builtin
from dnews.risk import (
    DiscreteLaw,
    Market,
    RiskError,
    distortion_risk_discrete,
    distortion_risk_empirical,
    distortion_risk_quantile,
    loss_function,
)

CVAR_HALF = make_builtin("cvar", alpha=0.5)
SHAPES = [make_builtin("gini", a=0.6), make_builtin("wang", {"lambda": 0.7}), make_builtin("mean-cvar", {"lambda": 0.3, "alpha": 0.6})]


def test_market_validation_and_beta():
    assert Market(1, 0.7).beta == pytest.approx(0.7)
    assert Market(10, 7).beta == pytest.approx(0.7)
    assert Market(1, 0.6, 0.2).beta == pytest.approx(0.5)
    for bad in [(1, 1), (1, 1.2), (1, 0.5, 0.6), (1, 0.5, -0.1), (float("nan"), 0.5)]:
        with pytest.raises(RiskError):
            Market(*bad)


def test_loss_examples():
    m = Market(1, 0.25)
    assert loss_function(0, m, 57.0) == 0.0
    assert loss_function(100, m, 120) == pytest.approx(-75)
    assert loss_function(100, m, 40) == pytest.approx(-15)
    # salvage shifts both price and cost
    assert loss_function(10, Market(2, 1, 0.5), 4) == pytest.approx(1.5 * -4 + 0.5 * 10)
    assert np.allclose(loss_function(100, m, np.array([40.0, 120.0])), [-15, -75])
    with pytest.raises(RiskError):
        loss_function(-1, m, 3)


def test_discrete_law_validation():
    with pytest.raises(RiskError):
        DiscreteLaw([(1.0, 0.5), (2.0, 0.4)])
    with pytest.raises(RiskError):
        DiscreteLaw([(1.0, 0.0), (2.0, 1.0)])
    with pytest.raises(RiskError):
        DiscreteLaw([])
    assert DiscreteLaw.uniform([1, 2, 3]).mean() == pytest.approx(2)


def test_discrete_examples():
    law = DiscreteLaw([(1, 0.2), (5, 0.5), (-3, 0.3)])
    assert distortion_risk_discrete(make_builtin("risk-neutral"), law) == pytest.approx(law.mean())
    assert distortion_risk_discrete(CVAR_HALF, DiscreteLaw.uniform([1, 2, 3, 4])) == pytest.approx(3.5)
    assert distortion_risk_discrete(make_builtin("wang", {"lambda": 2.0}), DiscreteLaw([(7.5, 1.0)])) == 7.5


def test_discrete_merges_ties():
    a = DiscreteLaw([(1, 0.25), (1, 0.25), (3, 0.5)])
    b = DiscreteLaw([(1, 0.5), (3, 0.5)])
    for h in SHAPES:
        assert distortion_risk_discrete(h, a) == pytest.approx(distortion_risk_discrete(h, b), abs=1e-14)


@st.composite
def laws(draw):
    values = draw(st.lists(st.floats(-100, 100), min_size=1, max_size=8))
    weights = np.array(draw(st.lists(st.floats(0.01, 1.0), min_size=len(values), max_size=len(values))))
    probs = weights / weights.sum()
    probs[-1] = 1.0 - probs[:-1].sum()
    return DiscreteLaw(zip(values, probs))


@given(laws(), st.floats(-50, 50), st.floats(0.1, 10))
@settings(max_examples=80, deadline=None)
def test_translation_homogeneity_loading(law, c, k):
    for h in SHAPES:
        base = distortion_risk_discrete(h, law)
        scale = 1 + abs(base)
        assert distortion_risk_discrete(h, law.map(lambda v: v + c)) == pytest.approx(base + c, abs=1e-10 * (scale + abs(c)))
        assert distortion_risk_discrete(h, law.map(lambda v: k * v)) == pytest.approx(k * base, abs=1e-10 * k * scale)
        assert base >= law.mean() - 1e-10 * scale


@given(st.lists(st.floats(-20, 20), min_size=2, max_size=10, unique=True))
@settings(max_examples=60, deadline=None)
def test_comonotonic_additivity(grid):
    xs = np.sort(np.array(grid))
    law_f = DiscreteLaw.uniform(list(xs**3 / 100))
    law_g = DiscreteLaw.uniform(list(np.exp(xs / 10)))
    law_sum = DiscreteLaw.uniform(list(xs**3 / 100 + np.exp(xs / 10)))
    for h in SHAPES:
        lhs = distortion_risk_discrete(h, law_sum)
        rhs = distortion_risk_discrete(h, law_f) + distortion_risk_discrete(h, law_g)
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1 + abs(lhs)))


def test_quantile_examples():
    assert distortion_risk_quantile(make_builtin("gini", a=0.3), lambda a: 4.2) == pytest.approx(4.2)
    assert distortion_risk_quantile(make_builtin("risk-neutral"), lambda a: a) == pytest.approx(0.5, abs=1e-12)
    for alpha in (0.0, 0.3, 0.9):
        h = make_builtin("cvar", alpha=alpha)
        assert distortion_risk_quantile(h, lambda a: a) == pytest.approx((1 + alpha) / 2, abs=1e-12)


def test_quantile_matches_discrete_for_step_quantile():
    law = DiscreteLaw([(0.0, 0.2), (2.0, 0.5), (5.0, 0.3)])

    def q(a):
        return 0.0 if a <= 0.2 else (2.0 if a <= 0.7 else 5.0)

    for h in SHAPES:
        val = distortion_risk_quantile(h, q, breakpoints=[0.2, 0.7])
        assert val == pytest.approx(distortion_risk_discrete(h, law), abs=1e-10)


def test_quantile_rejects_decreasing():
    with pytest.raises(RiskError):
        distortion_risk_quantile(CVAR_HALF, lambda a: -a)


def test_empirical_examples():
    assert distortion_risk_empirical(make_builtin("risk-neutral"), [1, 2, 6]) == pytest.approx(3)
    assert distortion_risk_empirical(SHAPES[0], [2.5]) == 2.5
    assert distortion_risk_empirical(CVAR_HALF, [4, 1, 3, 2]) == pytest.approx(3.5)
    with pytest.raises(RiskError):
        distortion_risk_empirical(CVAR_HALF, [])


def test_empirical_shift():
    x = np.random.default_rng(3).normal(size=500)
    for h in SHAPES:
        assert distortion_risk_empirical(h, x + 2.0) == pytest.approx(distortion_risk_empirical(h, x) + 2.0, abs=1e-12)


def test_empirical_converges_to_quantile():
    from scipy.stats import norm

    h = make_builtin("gini", a=0.6)
    q = lambda a: float(norm.ppf(a))  # noqa: E731
    exact = distortion_risk_quantile(h, lambda a: a**2)
    errs = []
    for n in (100, 1000, 10000):
        mids = ((np.arange(n) + 0.5) / n) ** 2
        errs.append(abs(distortion_risk_empirical(h, mids) - exact))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] * 10000 < 1.0
    assert np.isfinite(distortion_risk_quantile(h, q, breakpoints=[]))
