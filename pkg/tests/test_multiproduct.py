import json

import numpy as np
import pytest

from dnews.core import DemandMoments, Regime
from dnews.distortion import make_builtin
from dnews.multiproduct import (
    MultiProductError,
    ProductSpec,
    comonotonic_sample,
    independent_sample,
    load_scenario,
    parse_scenario,
    solve_multi,
    verify_additivity,
)
from dnews.risk import Market
from dnews.solver import solve_single

GINI = make_builtin("gini", a=0.5)
PRODUCTS = [
    ProductSpec(Market(1, 0.25), DemandMoments(100, 30), "a"),
    ProductSpec(Market(2, 1.1, 0.1), DemandMoments(65, 45.5), "b"),
    ProductSpec(Market(1, 0.6), DemandMoments(50, 20), "c"),
]


def test_identical_products_double_the_value():
    one = solve_single(GINI, PRODUCTS[0].market, PRODUCTS[0].moments, with_worst_case=False)
    rep = solve_multi(GINI, [PRODUCTS[0]] * 2, with_worst_case=False)
    assert rep.total_value == pytest.approx(2 * one.value, rel=1e-15)
    assert rep.orders == (one.x_star, one.x_star)


def test_single_product_matches_solver():
    rep = solve_multi(GINI, PRODUCTS[:1], with_worst_case=False)
    assert rep.per_product[0] == solve_single(GINI, PRODUCTS[0].market, PRODUCTS[0].moments, with_worst_case=False)


def test_mixed_regimes():
    h = make_builtin("cvar", alpha=0.5)
    rep = solve_multi(h, PRODUCTS, with_worst_case=False)
    regimes = [r.regime for r in rep.per_product]
    assert Regime.NO_ORDER in regimes and len(set(regimes)) > 1
    assert rep.total_value == pytest.approx(sum(r.value for r in rep.per_product))


def test_permutation_invariance():
    a = solve_multi(GINI, PRODUCTS, with_worst_case=False)
    b = solve_multi(GINI, PRODUCTS[::-1], with_worst_case=False)
    assert a.total_value == pytest.approx(b.total_value, rel=1e-14)
    assert a.orders == b.orders[::-1]


def test_empty_input():
    with pytest.raises(MultiProductError):
        solve_multi(GINI, [])


def test_comonotonic_sample_has_no_discordant_pairs():
    rep = solve_multi(GINI, PRODUCTS)
    d = comonotonic_sample(rep.per_product, 20_000, 3)
    order = np.argsort(d[:, 0], kind="stable")
    for k in (1, 2):
        assert np.all(np.diff(d[order, k]) >= 0)
    twin = comonotonic_sample(solve_multi(GINI, [PRODUCTS[0]] * 2).per_product, 1000, 3)
    assert np.array_equal(twin[:, 0], twin[:, 1])


def test_samples_match_marginal_moments():
    rep = solve_multi(GINI, PRODUCTS)
    for draw in (comonotonic_sample, independent_sample):
        d = draw(rep.per_product, 400_000, 11)
        for k, p in enumerate(PRODUCTS):
            se = p.moments.sigma / np.sqrt(d.shape[0])
            assert abs(d[:, k].mean() - p.moments.mu) < 5 * se


def test_samples_need_worst_case():
    rep = solve_multi(GINI, PRODUCTS, with_worst_case=False)
    with pytest.raises(MultiProductError):
        comonotonic_sample(rep.per_product, 10, 0)


def test_additivity_comonotonic():
    diag = verify_additivity(GINI, PRODUCTS, n=200_000, seed=4)
    assert diag.passed, diag.as_dict()
    assert diag.standard_error > 0


def test_independent_coupling_is_not_above_total():
    diag = verify_additivity(GINI, PRODUCTS, n=200_000, seed=4, coupling="independent")
    assert diag.passed
    assert diag.estimate < diag.total_value


def test_additivity_argument_errors():
    with pytest.raises(MultiProductError):
        verify_additivity(GINI, PRODUCTS, n=50)
    with pytest.raises(MultiProductError):
        verify_additivity(GINI, PRODUCTS, n=1000, coupling="gaussian")


def test_scenario_round_trip(tmp_path):
    data = {
        "distortion": "gini(a=0.5)",
        "products": [{"label": "x", "price": 1, "cost": 0.25, "mu": 100, "sigma": 30}],
    }
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    h, products = load_scenario(path)
    assert h.spec() == GINI.spec()
    assert products[0] == ProductSpec(Market(1, 0.25), DemandMoments(100, 30), "x")
    with pytest.raises(MultiProductError):
        parse_scenario({"distortion": "gini(a=0.5)", "products": []})
    with pytest.raises(MultiProductError, match="sigma"):
        parse_scenario({"distortion": "gini(a=0.5)", "products": [{"price": 1, "cost": 0.5, "mu": 3}]})
    path.write_text("{")
    with pytest.raises(MultiProductError):
        load_scenario(path)
