import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dnews.core import DemandMoments, Regime, SolverError, delta, sigma_t
from dnews.distortion import PiecewiseLinear, make_builtin
from dnews.risk import Market
from dnews.solver import (
    classify_regime,
    effective_ratio,
    feasible_t,
    solve_single,
    t_star,
    t_star_literal,
)

NEUTRAL = make_builtin("risk-neutral")
MCV = make_builtin("mean-cvar", {"lambda": 0.5, "alpha": 0.8})


def scarf(mu, sigma, beta):
    return mu + sigma * (1 - 2 * beta) / (2 * math.sqrt(beta * (1 - beta)))


def test_effective_ratio():
    assert effective_ratio(Market(1, 0.7)) == pytest.approx(0.7)
    assert effective_ratio(Market(10, 7)) == pytest.approx(0.7)
    assert effective_ratio(Market(1, 0.6, 0.2)) == pytest.approx(0.5)


def test_demand_moments():
    dm = DemandMoments.from_cv(65, 0.7)
    assert dm.sigma == pytest.approx(45.5) and dm.cv == pytest.approx(0.7)
    assert dm.t_low == pytest.approx(1 / 1.49)
    for bad in [(0, 1), (-1, 1), (1, -0.1), (float("inf"), 1)]:
        with pytest.raises(SolverError):
            DemandMoments(*bad)


def test_sigma_t():
    dm = DemandMoments(100, 30)
    assert sigma_t(dm, 1.0) == pytest.approx(30)
    assert sigma_t(dm, 1 / 1.09) == pytest.approx(0.0, abs=1e-6)
    assert sigma_t(dm, 0.95) == pytest.approx(math.sqrt(355))
    with pytest.raises(SolverError):
        sigma_t(dm, 0.5)


def test_delta():
    assert delta(NEUTRAL, 0.25, 0.25, 1.0) == pytest.approx(math.sqrt(0.1875))
    h = make_builtin("gini", a=0.4)
    s = h.inverse(0.3)
    assert delta(h, s, 0.3, s) == 0.0
    dm_h = make_builtin("dev-median", a=0.2)
    s = dm_h.inverse(0.5)
    assert s == pytest.approx(0.7 / 1.2)
    assert delta(dm_h, s, 0.5, 1.0) == pytest.approx(math.sqrt(0.35), rel=1e-12)
    # Delta_{s,1} vanishes only when h is linear from zero on
    assert delta(NEUTRAL, 0.0, 0.0, 1.0) == pytest.approx(0.0, abs=1e-7)


def test_classify_examples():
    assert classify_regime(make_builtin("cvar", alpha=0.9), 0.7, DemandMoments.from_cv(100, 0.3)) is Regime.NO_ORDER
    assert classify_regime(NEUTRAL, 0.25, DemandMoments.from_cv(100, 0.3)) is Regime.FULL_SUPPORT
    assert classify_regime(make_builtin("wang", {"lambda": 1.0}), 0.25, DemandMoments.from_cv(100, 0.3)) is Regime.TRUNCATED
    assert classify_regime(make_builtin("wang", {"lambda": 1.0}), 0.25, DemandMoments(100, 0)) is Regime.FULL_SUPPORT


def test_no_order_boundary_tie():
    # h(1/(1+r^2)) == beta exactly is no-order
    dm = DemandMoments(1.0, 1.0)
    assert classify_regime(NEUTRAL, 0.5, dm) is Regime.NO_ORDER


def test_feasible_t_examples():
    dm = DemandMoments(100, 30)
    ok, cert = feasible_t(NEUTRAL, 0.25, 0.25, dm, dm.t_low)
    assert ok and cert.sigma_t == 0.0
    ok, cert = feasible_t(NEUTRAL, 0.25, 0.25, dm, 1.0)
    assert ok and cert.delta_val == pytest.approx(math.sqrt(0.1875))
    dm = DemandMoments(65, 45.5)
    ok, cert = feasible_t(MCV, MCV.inverse(0.3), 0.3, dm, 0.9)
    assert not ok and cert.slope_condition > 0
    with pytest.raises(SolverError):
        feasible_t(NEUTRAL, 0.25, 0.25, DemandMoments(100, 30), 0.5)


@pytest.mark.parametrize("fam,params", [("gini", {"a": 0.5}), ("wang", {"lambda": 0.5}), ("mean-cvar", {"lambda": 0.5, "alpha": 0.8})])
def test_certificate_sign_matches_predicate(fam, params):
    h = make_builtin(fam, params)
    for beta, r in [(0.1, 0.7), (0.25, 1.2), (0.4, 0.7)]:
        dm = DemandMoments.from_cv(65, r)
        if float(h.value(dm.t_low)) <= beta:
            continue
        s = h.inverse(beta)
        for t in np.linspace(dm.t_low, 1.0, 40):
            ok, cert = feasible_t(h, s, beta, dm, float(t))
            assert ok == (cert.slope_condition <= 1e-12)
            assert cert.k_coeff >= 0


def test_feasible_set_is_an_interval():
    h = make_builtin("prop-hazards", a=0.7)
    dm = DemandMoments.from_cv(65, 0.9)
    s = h.inverse(0.25)
    flags = [feasible_t(h, s, 0.25, dm, float(t))[0] for t in np.linspace(dm.t_low, 1.0, 400)]
    first_bad = flags.index(False)
    assert not any(flags[first_bad:])


def test_t_star_examples():
    assert t_star(MCV, 0.3, DemandMoments(65, 45.5)) == 0.8
    # t* = 1/2 branch of the deviation-from-median family
    h = make_builtin("dev-median", a=0.2)
    assert t_star(h, 0.1, DemandMoments.from_cv(65, 1.5)) == 0.5
    assert t_star(NEUTRAL, 0.25, DemandMoments(100, 30)) == 1.0
    with pytest.raises(SolverError):
        t_star(make_builtin("cvar", alpha=0.9), 0.7, DemandMoments(100, 30))


def test_literal_tstar_is_only_a_diagnostic():
    h = make_builtin("wang", {"lambda": 0.5})
    dm = DemandMoments.from_cv(65, 0.7)
    lit = t_star_literal(h, 0.25, dm)
    assert lit is not None and abs(lit - t_star(h, 0.25, dm)) > 0.05


def test_scarf_rule():
    rep = solve_single(NEUTRAL, Market(1, 0.25), DemandMoments(100, 30))
    assert rep.regime is Regime.FULL_SUPPORT
    assert rep.x_star == pytest.approx(117.32050807568878, abs=1e-9)
    assert rep.value == pytest.approx(-62.0096189432, abs=1e-9)
    assert solve_single(NEUTRAL, Market(1, 0.5), DemandMoments(80, 20)).x_star == pytest.approx(80, abs=1e-12)
    for beta in (0.1, 0.3, 0.45):
        x = solve_single(NEUTRAL, Market(1, beta), DemandMoments(100, 30)).x_star
        assert x == pytest.approx(scarf(100, 30, beta), abs=1e-12 * 100)


def test_cvar_example():
    rep = solve_single(make_builtin("cvar", alpha=0.5), Market(1, 0.7), DemandMoments(100, 30))
    assert rep.x_star == pytest.approx(100 + 30 * (0.3 - 1) / (2 * math.sqrt(0.15 * 0.85)), abs=1e-9)
    assert rep.x_star == pytest.approx(70.595, abs=1e-3)


def test_degenerate_sigma():
    rep = solve_single(make_builtin("gini", a=0.5), Market(2, 0.5), DemandMoments(40, 0))
    assert rep.x_star == 40 and rep.value == pytest.approx(-40 * 1.5)
    assert rep.worst_case.atoms == [(40.0, 1.0)]


def test_no_order_report():
    rep = solve_single(make_builtin("cvar", alpha=0.9), Market(1, 0.7), DemandMoments(100, 30))
    assert rep.regime is Regime.NO_ORDER and rep.x_star == 0 and rep.value == 0
    assert rep.tie_interval == (0.0, 0.0)


def test_tie_policies_at_kink():
    # beta = lambda * alpha puts s* on the knot alpha
    h = make_builtin("mean-cvar", {"lambda": 0.5, "alpha": 0.6})
    m, dm = Market(1, 0.3), DemandMoments(100, 30)
    reps = {p: solve_single(h, m, dm, tie_policy=p) for p in ("left", "right", "mid")}
    lo, hi = reps["mid"].tie_interval
    assert lo < hi
    assert {reps["left"].x_star, reps["right"].x_star} == {lo, hi}
    assert lo < reps["mid"].x_star < hi
    assert reps["left"].value == reps["right"].value
    with pytest.raises(SolverError):
        solve_single(h, m, dm, tie_policy="up")


def test_validate_flag_rejects_nonconvex():
    bad = PiecewiseLinear([0.0, 0.5, 1.0], [1.4, 0.6])
    with pytest.raises(SolverError):
        solve_single(bad, Market(1, 0.3), DemandMoments(10, 3), validate=True)


def test_regime_consistency(family):
    h = make_builtin(*family)
    for beta in (0.1, 0.4, 0.7):
        for r in (0.2, 0.6, 1.0, 1.6):
            rep = solve_single(h, Market(1, beta), DemandMoments.from_cv(50, r), with_worst_case=False)
            lo, hi = rep.tie_interval
            assert lo <= rep.x_star <= hi
            assert (rep.t_star == 1.0) == (rep.regime is Regime.FULL_SUPPORT)
            if rep.regime is Regime.NO_ORDER:
                assert rep.x_star == 0 and rep.value == 0
            else:
                assert rep.value < 0 or rep.x_star > 0


@given(st.floats(0.05, 0.95), st.floats(0.05, 2.0), st.floats(0.1, 50), st.sampled_from(["gini", "wang", "dev-median"]))
@settings(max_examples=60, deadline=None)
def test_scale_equivariance(beta, r, k, fam):
    h = make_builtin(fam, {"gini": {"a": 0.5}, "wang": {"lambda": 0.5}, "dev-median": {"a": 0.3}}[fam])
    dm = DemandMoments.from_cv(60, r)
    base = solve_single(h, Market(1, beta), dm, with_worst_case=False)
    scaled = solve_single(h, Market(1, beta), DemandMoments(k * dm.mu, k * dm.sigma), with_worst_case=False)
    assert scaled.x_star == pytest.approx(k * base.x_star, rel=1e-9, abs=1e-9)
    assert scaled.value == pytest.approx(k * base.value, rel=1e-9, abs=1e-9)
    priced = solve_single(h, Market(k, k * beta), dm, with_worst_case=False)
    assert priced.x_star == pytest.approx(base.x_star, rel=1e-9, abs=1e-9)
    assert priced.value == pytest.approx(k * base.value, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("fam,params,beta", [("mean-cvar", {"lambda": 0.5, "alpha": 0.8}, 0.3), ("dev-median", {"a": 0.3}, 0.15)])
def test_fine_continuity_across_truncation_boundary(fam, params, beta):
    h = make_builtin(fam, params)
    m = Market(1, beta)
    rs = np.linspace(0.2, 1.6, 4001)
    regimes = [classify_regime(h, beta, DemandMoments.from_cv(65, r)) for r in rs]
    k = next(i for i in range(len(rs) - 1) if regimes[i] is Regime.FULL_SUPPORT and regimes[i + 1] is Regime.TRUNCATED)
    lo, hi = rs[k], rs[k + 1]
    # bisect the boundary, then step 1e-7 across it
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if classify_regime(h, beta, DemandMoments.from_cv(65, mid)) is Regime.FULL_SUPPORT:
            lo = mid
        else:
            hi = mid
    path = lo + 1e-7 * np.arange(-20, 21)
    reps = [solve_single(h, m, DemandMoments.from_cv(65, r), with_worst_case=False) for r in path]
    assert {r.regime for r in reps} == {Regime.FULL_SUPPORT, Regime.TRUNCATED}
    # jumps measured in units of mu: the curves themselves move ~1e-7 mu per step
    assert max(abs(a.x_star - b.x_star) for a, b in zip(reps, reps[1:])) <= 1e-6 * 65
    assert max(abs(a.value - b.value) for a, b in zip(reps, reps[1:])) <= 1e-6 * 65


def test_solve_is_fast():
    import time

    m, dm = Market(1, 0.25), DemandMoments(100, 30)
    solve_single(NEUTRAL, m, dm, with_worst_case=False)
    n = 200
    t0 = time.perf_counter()
    for _ in range(n):
        solve_single(NEUTRAL, m, dm, with_worst_case=False)
    assert (time.perf_counter() - t0) / n < 1e-3
