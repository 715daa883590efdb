"""Distribution-free optimal order under a convex distortion risk measure.

Given the cost ratio ``beta``, the coefficient of variation ``r`` and ``h``,
the optimum falls in one of three regimes:

* ``NO_ORDER`` when ``h(1/(1+r^2)) <= beta``; order nothing, risk 0.
* ``FULL_SUPPORT`` when ``r (h'(1) - (1 - beta)) <= Delta_{s*,1}``; the worst
  case keeps all its mass on positive demand.
* ``TRUNCATED`` otherwise; the worst case puts mass ``1 - t*`` at zero demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DemandMoments, Regime, SolverError, delta, sigma_t
from .distortion import Conditional, Distortion, PiecewiseLinear, validate_distortion
from .risk import Market
from .worstcase import WorstCaseDistribution, build_worst_case

__all__ = [
    "FeasibilityCertificate",
    "SolveReport",
    "effective_ratio",
    "classify_regime",
    "feasible_t",
    "feasibility_margin",
    "t_star",
    "t_star_literal",
    "solve_single",
    "order_for",
    "TIE_POLICIES",
]

TSTAR_TOL = 1e-10
SNAP_RADIUS = 1e-8
TIE_POLICIES = ("left", "right", "mid")


@dataclass(frozen=True)
class FeasibilityCertificate:
    """Coefficients ``(k, l)`` of the candidate law ``-S = k h_s'(u) + l`` on ``u <= t``."""

    s_star: float
    t: float
    k_coeff: float
    ell_coeff: float
    delta_val: float
    sigma_t: float
    hs_slope: float

    @property
    def slope_condition(self) -> float:
        """``k h_s'(t) + l``; non-positive exactly when ``t`` is feasible."""
        if self.k_coeff == 0.0:
            return self.ell_coeff
        return self.k_coeff * self.hs_slope + self.ell_coeff


@dataclass(frozen=True)
class SolveReport:
    regime: Regime
    beta: float
    s_star: float
    t_star: float
    delta: float
    x_star: float
    value: float
    tie_interval: tuple[float, float]
    worst_case: WorstCaseDistribution | None = None

    def as_dict(self) -> dict:
        return {
            "regime": str(self.regime),
            "beta": self.beta,
            "sStar": self.s_star,
            "tStar": self.t_star,
            "delta": self.delta,
            "xStar": self.x_star,
            "value": self.value,
            "tieInterval": list(self.tie_interval),
        }


def effective_ratio(m: Market) -> float:
    """``beta = (c - s) / (p - s)``."""
    return m.beta


def _s_star(h: Distortion, beta: float) -> float:
    if not 0.0 < beta < 1.0:
        raise SolverError(f"beta must lie in (0, 1), got {beta}")
    return float(h.inverse(beta))


def feasibility_margin(h: Distortion, s: float, hs: float, dm: DemandMoments, t: float) -> tuple[float, float]:
    """Both sides of ``sigma_t (t h'(t) - h(t) + h(s)) <= mu Delta_{s,t}``.

    ``hs`` is ``h(s)`` (``beta`` when ``s = s*``). The left derivative is used.
    """
    st = sigma_t(dm, t)
    slope_term = t * float(h.left_derivative(t)) - float(h.value(t)) + hs
    lhs = st * slope_term if st > 0.0 else 0.0
    rhs = dm.mu * delta(h, s, hs, t)
    return lhs, rhs


def feasible_t(
    h: Distortion, s_star: float, beta: float, dm: DemandMoments, t: float
) -> tuple[bool, FeasibilityCertificate]:
    """Membership of ``(s*, t)`` in the feasible set, with its ``(k, l)`` certificate."""
    t0 = dm.t_low
    if not (t0 - 1e-15 <= t <= 1.0):
        raise SolverError(f"t = {t} outside [{t0}, 1]")
    if s_star > t0 + 1e-12:
        raise SolverError("s* exceeds 1/(1+r^2): the instance is in the no-order regime")
    lhs, rhs = feasibility_margin(h, s_star, beta, dm, t)
    ok = lhs <= rhs
    st = sigma_t(dm, t)
    d = delta(h, s_star, beta, t)
    hc = Conditional(h, s_star)
    hs_t = float(hc.value(t))
    hs_slope = float(hc.left_derivative(t))
    if st == 0.0:
        k = 0.0
    else:
        denom = t * float(hc.sq_slope_cumulative(t)) - hs_t * hs_t
        k = st / math.sqrt(denom) if denom > 0 else math.inf
    ell = -dm.mu / t - (k * hs_t / t if k else 0.0)
    cert = FeasibilityCertificate(s_star, t, k, ell, d, st, hs_slope)
    return ok, cert


def classify_regime(h: Distortion, beta: float, dm: DemandMoments) -> Regime:
    if dm.sigma == 0.0:
        return Regime.FULL_SUPPORT
    if float(h.value(dm.t_low)) <= beta:
        return Regime.NO_ORDER
    s = _s_star(h, beta)
    hp1 = float(h.left_derivative(1.0))
    if not math.isfinite(hp1):
        return Regime.TRUNCATED
    d1 = delta(h, s, beta, 1.0)
    return Regime.FULL_SUPPORT if dm.cv * (hp1 - (1.0 - beta)) <= d1 else Regime.TRUNCATED


def t_star(
    h: Distortion, beta: float, dm: DemandMoments, snap: bool = True, regime: Regime | None = None
) -> float:
    """Largest feasible ``t`` in ``[1/(1+r^2), 1]``, by bisection.

    The feasible set is an interval starting at ``1/(1+r^2)``. For piecewise
    linear ``h`` the result is snapped onto the nearest knot within ``1e-8``.
    """
    regime = regime or classify_regime(h, beta, dm)
    if regime is Regime.NO_ORDER:
        raise SolverError("t* is undefined in the no-order regime")
    if regime is Regime.FULL_SUPPORT:
        return 1.0
    s = _s_star(h, beta)

    def ok(t: float) -> bool:
        lhs, rhs = feasibility_margin(h, s, beta, dm, t)
        return lhs <= rhs

    lo, hi = dm.t_low, 1.0
    assert ok(lo), "lower endpoint must be feasible"
    while hi - lo > TSTAR_TOL:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if snap and isinstance(h, PiecewiseLinear):
        knots = h.knots
        j = int(np.argmin(np.abs(knots - lo)))
        if abs(knots[j] - lo) <= SNAP_RADIUS and knots[j] >= dm.t_low:
            return float(knots[j])
    return lo


def _literal_w(h: Distortion, beta: float, dm: DemandMoments, t: float) -> float:
    c = float(h.value(t)) - beta
    lhs = (1.0 + dm.cv**2) * (t * float(h.left_derivative(t)) - c) ** 2
    # int_0^1 (h'(u) - c)^2 du with int_0^1 h' = 1
    rhs = float(h.sq_slope_cumulative(1.0)) - 2.0 * c + c * c
    return lhs - rhs


def t_star_literal(h: Distortion, beta: float, dm: DemandMoments, points: int = 20_000) -> float | None:
    """Largest grid ``t`` with ``(1+r^2)(t h'(t) - c)^2 <= int_0^1 (h' - c)^2``, ``c = h(t) - beta``.

    Diagnostic only: this variant integrates over ``(0, 1)`` rather than
    ``(s*, t)`` and does not match the feasibility condition used by
    :func:`t_star`. Returns ``None`` when no grid point qualifies.
    """
    ts = np.linspace(dm.t_low, 1.0, points)
    good = [t for t in ts if _literal_w(h, beta, dm, float(t)) <= 0.0]
    return float(max(good)) if good else None


def order_for(
    h: Distortion, beta: float, dm: DemandMoments, s: float, t: float, slope: float
) -> float:
    """Order quantity for a given ``t`` and supporting slope ``h^tau(s*)``."""
    if t >= 1.0:
        d = delta(h, s, beta, 1.0)
        return dm.mu - dm.sigma * (slope - 2.0 * (1.0 - beta)) / (2.0 * d)
    st = sigma_t(dm, t)
    d = delta(h, s, beta, t)
    c = float(h.value(t)) - beta
    return dm.mu / t - (st / t) * (t * slope - 2.0 * c) / (2.0 * d)


def solve_single(
    h: Distortion,
    m: Market,
    dm: DemandMoments,
    tie_policy: str = "mid",
    with_worst_case: bool = True,
    validate: bool = False,
) -> SolveReport:
    """Optimal order, worst-case risk and worst-case law for one product.

    ``tie_policy`` picks ``h^tau(s*)`` from ``[h'_-(s*), h'_+(s*)]`` when ``h``
    has a kink at ``s*``: ``left``, ``right`` or their midpoint ``mid``.
    ``tie_interval`` always spans the orders given by the two endpoints.
    """
    if tie_policy not in TIE_POLICIES:
        raise SolverError(f"tie policy must be one of {TIE_POLICIES}, got {tie_policy!r}")
    if validate:
        rep = validate_distortion(h)
        if not rep.passed:
            raise SolverError("invalid distortion: " + "; ".join(rep.issues))
    beta = m.beta
    p, c = m.effective_price, m.effective_cost
    s = _s_star(h, beta)
    regime = classify_regime(h, beta, dm)

    if dm.sigma == 0.0:
        d1 = delta(h, s, beta, 1.0)
        wc = build_worst_case(h, beta, dm, s, 1.0, regime) if with_worst_case else None
        return SolveReport(regime, beta, s, 1.0, d1, dm.mu, -dm.mu * (p - c), (dm.mu, dm.mu), wc)

    if regime is Regime.NO_ORDER:
        wc = build_worst_case(h, beta, dm, s, dm.t_low, regime) if with_worst_case else None
        return SolveReport(regime, beta, s, dm.t_low, 0.0, 0.0, 0.0, (0.0, 0.0), wc)

    t = t_star(h, beta, dm, regime=regime)
    left = float(h.left_derivative(s)) if s > 0 else float(h.right_derivative(s))
    right = float(h.right_derivative(s))
    slope = {"left": left, "right": right, "mid": 0.5 * (left + right)}[tie_policy]
    x_left = max(order_for(h, beta, dm, s, t, left), 0.0)
    x_right = max(order_for(h, beta, dm, s, t, right), 0.0)
    x = max(order_for(h, beta, dm, s, t, slope), 0.0)

    if regime is Regime.FULL_SUPPORT:
        d = delta(h, s, beta, 1.0)
        value = -dm.mu * (p - c) + p * dm.sigma * d
    else:
        d = delta(h, s, beta, t)
        value = (p / t) * (-dm.mu * (float(h.value(t)) - beta) + sigma_t(dm, t) * d)

    wc = build_worst_case(h, beta, dm, s, t, regime) if with_worst_case else None
    return SolveReport(regime, beta, s, t, d, x, value, (min(x_left, x_right), max(x_left, x_right)), wc)
