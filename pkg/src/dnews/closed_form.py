"""Family-specific closed forms for cvar, mean-cvar and dev-median.

These are written out by hand from the piecewise-linear structure of each
family and share no code with :mod:`dnews.solver`, so they serve as an
independent cross-check of the general rule.
"""

from __future__ import annotations

import math

from .core import DemandMoments, Regime, SolverError
from .risk import Market
from .solver import SolveReport

__all__ = ["solve_closed_form_family", "CLOSED_FORM_FAMILIES"]

CLOSED_FORM_FAMILIES = ("cvar", "mean-cvar", "dev-median")


def _no_order(beta: float, s: float, t0: float) -> SolveReport:
    return SolveReport(Regime.NO_ORDER, beta, s, t0, 0.0, 0.0, 0.0, (0.0, 0.0))


def _full(beta, s, d, x, m: Market, dm: DemandMoments) -> SolveReport:
    p, c = m.effective_price, m.effective_cost
    value = -dm.mu * (p - c) + p * dm.sigma * d
    x = max(x, 0.0)
    return SolveReport(Regime.FULL_SUPPORT, beta, s, 1.0, d, x, value, (x, x))


def _top_slope_case(k: float, beta: float, s: float, m: Market, dm: DemandMoments) -> SolveReport:
    """``s*`` on the last linear piece with slope ``k``: always ``t* = 1``."""
    q = k / (1.0 - beta)
    d = (1.0 - beta) * math.sqrt(q - 1.0)
    x = dm.mu - dm.sigma * (q - 2.0) / (2.0 * math.sqrt(q - 1.0))
    return _full(beta, s, d, x, m, dm)


def _cvar(alpha: float, m: Market, dm: DemandMoments) -> SolveReport:
    beta = m.beta
    eta = (1.0 - alpha) * (1.0 - beta)
    s = alpha + beta * (1.0 - alpha)
    t0 = dm.t_low
    if eta <= dm.sigma**2 / dm.second_moment:
        return _no_order(beta, s, t0)
    p, c = m.effective_price, m.effective_cost
    x = dm.mu + dm.sigma * (2.0 * eta - 1.0) / (2.0 * math.sqrt(eta * (1.0 - eta)))
    value = (p - c) * (-dm.mu + dm.sigma * math.sqrt((1.0 - eta) / eta))
    d = (1.0 - beta) * math.sqrt(1.0 / eta - 1.0)
    return SolveReport(Regime.FULL_SUPPORT, beta, s, 1.0, d, max(x, 0.0), value, (max(x, 0.0),) * 2)


def _mean_cvar(lam: float, alpha: float, m: Market, dm: DemandMoments) -> SolveReport:
    beta = m.beta
    t0 = dm.t_low
    k = (1.0 - lam * alpha) / (1.0 - alpha)
    h_t0 = lam * t0 + (1.0 - lam) / (1.0 - alpha) * max(t0 - alpha, 0.0)
    if beta >= lam * alpha:
        s = (alpha * (1.0 - lam) + beta * (1.0 - alpha)) / (1.0 - lam * alpha)
        if h_t0 <= beta:
            return _no_order(beta, s, t0)
        return _top_slope_case(k, beta, s, m, dm)
    s = beta / lam
    if h_t0 <= beta:
        return _no_order(beta, s, t0)
    d1_sq = 1.0 - beta * lam + (1.0 - lam) ** 2 * alpha / (1.0 - alpha) - (1.0 - beta) ** 2
    lead = beta + alpha * (1.0 - lam) / (1.0 - alpha)  # h'(1) - (1 - beta)
    if dm.sigma**2 * lead**2 <= dm.mu**2 * d1_sq:
        d = math.sqrt(d1_sq)
        x = dm.mu - dm.sigma * (lam - 2.0 * (1.0 - beta)) / (2.0 * d)
        return _full(beta, s, d, x, m, dm)
    # truncated at t* = alpha
    p = m.effective_price
    gap = alpha * lam - beta
    s_a = math.sqrt(alpha * dm.second_moment - dm.mu**2)
    d = math.sqrt(beta * gap)
    x = dm.mu / alpha + s_a / (2.0 * alpha) * (math.sqrt(gap / beta) - math.sqrt(beta / gap))
    value = (p / alpha) * (-dm.mu * gap + s_a * d)
    return SolveReport(Regime.TRUNCATED, beta, s, alpha, d, max(x, 0.0), value, (max(x, 0.0),) * 2)


def _dev_median(a: float, m: Market, dm: DemandMoments) -> SolveReport:
    beta = m.beta
    t0 = dm.t_low
    h_t0 = (1.0 - a) * t0 if t0 < 0.5 else (1.0 + a) * t0 - a
    if beta >= 0.5 * (1.0 - a):
        s = (a + beta) / (1.0 + a)
        if h_t0 <= beta:
            return _no_order(beta, s, t0)
        return _top_slope_case(1.0 + a, beta, s, m, dm)
    s = beta / (1.0 - a)
    if h_t0 <= beta:
        return _no_order(beta, s, t0)
    d1 = math.sqrt(a * a + a * beta + beta * (1.0 - beta))
    if (a + beta) * dm.sigma <= d1 * dm.mu:
        x = dm.mu - dm.sigma * (2.0 * beta - a - 1.0) / (2.0 * d1)
        return _full(beta, s, d1, x, m, dm)
    p = m.effective_price
    c0 = (1.0 - a) / (2.0 * beta)
    s_half = math.sqrt((dm.sigma**2 - dm.mu**2) / 2.0)
    d = beta * math.sqrt(c0 - 1.0)
    x = 2.0 * dm.mu + s_half * (c0 - 2.0) / math.sqrt(c0 - 1.0)
    value = 2.0 * p * (-dm.mu * (0.5 * (1.0 - a) - beta) + s_half * d)
    return SolveReport(Regime.TRUNCATED, beta, s, 0.5, d, max(x, 0.0), value, (max(x, 0.0),) * 2)


def solve_closed_form_family(family: str, params: dict, m: Market, dm: DemandMoments) -> SolveReport:
    """Hand-derived solution for ``cvar``, ``mean-cvar`` or ``dev-median``.

    ``params`` uses the same keys as :func:`dnews.distortion.make_builtin`.
    No worst-case law is attached.
    """
    if dm.sigma == 0.0:
        raise SolverError("closed forms assume sigma > 0")
    if family == "cvar":
        alpha = float(params["alpha"])
        if not 0.0 <= alpha < 1.0:
            raise SolverError("alpha must lie in [0, 1)")
        return _cvar(alpha, m, dm)
    if family == "mean-cvar":
        lam = float(params.get("lambda", params.get("lam")))
        alpha = float(params["alpha"])
        if not (0.0 < lam <= 1.0 and 0.0 <= alpha < 1.0):
            raise SolverError("mean-cvar closed form needs lambda in (0, 1] and alpha in [0, 1)")
        return _mean_cvar(lam, alpha, m, dm)
    if family == "dev-median":
        a = float(params["a"])
        if not 0.0 <= a < 1.0:
            raise SolverError("dev-median closed form needs a in [0, 1)")
        return _dev_median(a, m, dm)
    raise SolverError(f"no closed form for family {family!r}; choose from {CLOSED_FORM_FAMILIES}")
