"""Brute-force verification of the closed-form rule.

For a fixed order ``x`` the worst-case risk reduces to maximising the
two-variable objective

    g_x(s, t) = -h(s) x - (mu/t)(h(t) - h(s))
                + (sigma_t/t) sqrt(t int_s^t h'^2 - (h(t) - h(s))^2)

over feasible pairs ``0 <= s <= 1/(1+r^2) <= t <= 1``. The oracle scans that
set on a grid, minimises ``T(x) = p sup g_x + c x`` over an ``x`` grid, and
refines once around each incumbent. Nothing here calls the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DemandMoments
from .distortion import Distortion
from .risk import Market

__all__ = [
    "GridSpec",
    "OracleResult",
    "OracleError",
    "g_objective",
    "feasible_mask",
    "inner_sup_grid",
    "outer_min_grid",
    "random_feasible_search",
]

RADICAND_CLAMP = 1e-12
REFINE = 10


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    s_points: int = 1500
    t_points: int = 1500
    x_points: int = 1500
    x_max: float | None = None

    def __post_init__(self):
        if min(self.s_points, self.t_points, self.x_points) < 2:
            raise OracleError("grid counts must be >= 2")
        if self.x_max is not None and not self.x_max > 0:
            raise OracleError("x_max must be positive")

    def resolved_x_max(self, dm: DemandMoments) -> float:
        return self.x_max if self.x_max is not None else 4.0 * dm.mu


@dataclass(frozen=True)
class OracleResult:
    x_hat: float
    value_hat: float
    arg_s: float
    arg_t: float
    gap_bound: float
    x_pitch: float


def _pieces(h: Distortion, dm: DemandMoments, s, t):
    """Shared terms of the objective on broadcast arrays ``s``, ``t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    hs, ht = np.asarray(h.value(s), dtype=float), np.asarray(h.value(t), dtype=float)
    ks = np.asarray(h.sq_slope_cumulative(s), dtype=float)
    kt = np.asarray(h.sq_slope_cumulative(t), dtype=float)
    gap = ht - hs
    rad = t * (kt - ks) - gap * gap
    rad = np.where(rad < 0.0, np.where(rad > -RADICAND_CLAMP * np.maximum(1.0, t * (kt - ks)), 0.0, rad), rad)
    st = np.sqrt(np.maximum(t * dm.second_moment - dm.mu**2, 0.0))
    return s, t, hs, ht, gap, rad, st


def g_objective(h: Distortion, x, s, t, dm: DemandMoments):
    """``g_x(s, t)``; broadcasts over array arguments."""
    s_, t_, hs, ht, gap, rad, st = _pieces(h, dm, s, t)
    if np.any(s_ > t_ + 1e-15) or np.any(s_ < 0) or np.any(t_ > 1):
        raise OracleError("need 0 <= s <= t <= 1")
    if np.any(t_ < dm.t_low - 1e-12):
        raise OracleError("t below 1/(1+r^2)")
    if np.any(rad < 0):
        raise OracleError("negative radicand beyond clamp tolerance")
    out = -hs * np.asarray(x, dtype=float) - dm.mu * gap / t_ + (st / t_) * np.sqrt(rad)
    return float(out) if np.ndim(out) == 0 else out


def _objective_and_mask(h: Distortion, dm: DemandMoments, s: np.ndarray, t: np.ndarray):
    """``g_0`` on the product grid ``s[:, None] x t[None, :]`` and the feasibility mask."""
    s2, t2 = s[:, None], t[None, :]
    s_, t_, hs, ht, gap, rad, st = _pieces(h, dm, s2, t2)
    root = np.sqrt(np.maximum(rad, 0.0))
    with np.errstate(invalid="ignore"):
        g0 = -dm.mu * gap / t_ + (st / t_) * root
        hp = np.asarray(h.left_derivative(t), dtype=float)[None, :]
        slope_term = t_ * hp - ht + hs
        lhs = np.where(st > 0.0, st * slope_term, 0.0)
    mask = (lhs <= dm.mu * root) & (s2 <= t2) & (rad >= 0.0)
    g0 = np.where(mask, g0, -np.inf)
    return g0, mask, hs[:, 0] if hs.ndim == 2 else hs


def feasible_mask(h: Distortion, dm: DemandMoments, s, t) -> np.ndarray:
    """Membership in the feasible set on the product grid of ``s`` and ``t``."""
    _, mask, _ = _objective_and_mask(h, dm, np.atleast_1d(np.asarray(s, float)), np.atleast_1d(np.asarray(t, float)))
    return mask


def _grids(dm: DemandMoments, grid: GridSpec):
    t0 = dm.t_low
    return np.linspace(0.0, t0, grid.s_points), np.linspace(t0, 1.0, grid.t_points)


def _local(center: float, pitch: float, lo: float, hi: float) -> np.ndarray:
    return np.clip(center + pitch * np.arange(-REFINE, REFINE + 1) / REFINE, lo, hi)


def _best(g0: np.ndarray, hs: np.ndarray, x: float):
    vals = g0 - hs[:, None] * x
    k = int(np.argmax(vals))
    i, j = divmod(k, vals.shape[1])
    return float(vals[i, j]), i, j, vals


def inner_sup_grid(h: Distortion, x: float, dm: DemandMoments, grid: GridSpec = GridSpec()):
    """Grid maximum of ``g_x`` over the feasible set, refined once.

    Returns ``(value, arg_s, arg_t)``. Being a maximum over a subset, it never
    exceeds the exact supremum beyond rounding.
    """
    s, t = _grids(dm, grid)
    g0, mask, hs = _objective_and_mask(h, dm, s, t)
    if not mask.any():
        raise OracleError("empty feasible grid")
    val, i, j, _ = _best(g0, hs, x)
    ds = s[1] - s[0] if s.size > 1 else 0.0
    dt = t[1] - t[0] if t.size > 1 else 0.0
    s_loc = _local(s[i], ds, 0.0, dm.t_low)
    t_loc = _local(t[j], dt, dm.t_low, 1.0)
    g_loc, m_loc, hs_loc = _objective_and_mask(h, dm, s_loc, t_loc)
    if m_loc.any():
        v2, i2, j2, _ = _best(g_loc, hs_loc, x)
        if v2 > val:
            return v2, float(s_loc[i2]), float(t_loc[j2])
    return val, float(s[i]), float(t[j])


def _envelope(g0: np.ndarray, hs: np.ndarray, xs: np.ndarray):
    """``max_{s,t} g_0 - h(s) x`` for each ``x``, with the arg indices."""
    best_t = np.argmax(g0, axis=1)
    G = g0[np.arange(g0.shape[0]), best_t]
    vals = G[None, :] - xs[:, None] * hs[None, :]
    best_s = np.argmax(vals, axis=1)
    return vals[np.arange(xs.size), best_s], best_s, best_t[best_s]


def _lipschitz(g_loc: np.ndarray, hs_loc: np.ndarray, x: float, i: int, j: int, ds: float, dt: float):
    vals = g_loc - hs_loc[:, None] * x
    ls = lt = 0.0
    for di in (-1, 1):
        ii = i + di
        if 0 <= ii < vals.shape[0] and np.isfinite(vals[ii, j]) and ds > 0:
            ls = max(ls, abs(vals[ii, j] - vals[i, j]) / ds)
    for dj in (-1, 1):
        jj = j + dj
        if 0 <= jj < vals.shape[1] and np.isfinite(vals[i, jj]) and dt > 0:
            lt = max(lt, abs(vals[i, jj] - vals[i, j]) / dt)
    return ls, lt


def outer_min_grid(h: Distortion, m: Market, dm: DemandMoments, grid: GridSpec = GridSpec()) -> OracleResult:
    """Minimise ``T(x) = p sup g_x + c x`` on an ``x`` grid over ``[0, x_max]``.

    ``gap_bound`` combines the ``x`` pitch times the slope bound
    ``max(c, p - c)`` with the local ``(s, t)`` Lipschitz estimates times the
    refined pitches (each doubled for safety).

    Raises:
        OracleError: the incumbent sits at ``x_max`` (range too small).
    """
    p, c = m.effective_price, m.effective_cost
    x_max = grid.resolved_x_max(dm)
    xs = np.linspace(0.0, x_max, grid.x_points)
    dx = xs[1] - xs[0]
    s, t = _grids(dm, grid)
    ds = s[1] - s[0]
    dt = t[1] - t[0]
    g0, mask, hs = _objective_and_mask(h, dm, s, t)
    if not mask.any():
        raise OracleError("empty feasible grid")
    sup, bs, bt = _envelope(g0, hs, xs)
    T = p * sup + c * xs
    k = int(np.argmin(T))
    if k == xs.size - 1:
        raise OracleError("incumbent at x_max; enlarge the x range")

    # refine x around the incumbent, and (s, t) around the arguments seen there
    lo_k, hi_k = max(k - 1, 0), min(k + 1, xs.size - 1)
    xs_f = np.linspace(xs[lo_k], xs[hi_k], 2 * REFINE * (hi_k - lo_k) // 2 + 1)
    s_idx = bs[lo_k:hi_k + 1]
    t_idx = bt[lo_k:hi_k + 1]
    s_lo, s_hi = s[max(s_idx.min() - 1, 0)], s[min(s_idx.max() + 1, s.size - 1)]
    t_lo, t_hi = t[max(t_idx.min() - 1, 0)], t[min(t_idx.max() + 1, t.size - 1)]
    s_f = np.linspace(s_lo, s_hi, max(2, int(round((s_hi - s_lo) / ds * REFINE)) + 1))
    t_f = np.linspace(t_lo, t_hi, max(2, int(round((t_hi - t_lo) / dt * REFINE)) + 1))
    g_f, m_f, hs_f = _objective_and_mask(h, dm, s_f, t_f)

    sup_c, bs_c, bt_c = _envelope(g0, hs, xs_f)
    if m_f.any():
        sup_r, bs_r, bt_r = _envelope(g_f, hs_f, xs_f)
    else:
        sup_r = np.full_like(sup_c, -np.inf)
        bs_r = bt_r = np.zeros(xs_f.size, dtype=int)
    use_r = sup_r > sup_c
    T_f = p * np.maximum(sup_c, sup_r) + c * xs_f
    kf = int(np.argmin(T_f))
    x_hat = float(xs_f[kf])
    if use_r[kf]:
        arg_s, arg_t = float(s_f[bs_r[kf]]), float(t_f[bt_r[kf]])
        ls, lt = _lipschitz(g_f, hs_f, x_hat, int(bs_r[kf]), int(bt_r[kf]), s_f[1] - s_f[0], t_f[1] - t_f[0])
        ds_eff, dt_eff = s_f[1] - s_f[0], t_f[1] - t_f[0]
    else:
        arg_s, arg_t = float(s[bs_c[kf]]), float(t[bt_c[kf]])
        ls, lt = _lipschitz(g0, hs, x_hat, int(bs_c[kf]), int(bt_c[kf]), ds, dt)
        ds_eff, dt_eff = ds, dt
    dx_f = xs_f[1] - xs_f[0] if xs_f.size > 1 else dx
    gap = 2.0 * (max(c, p - c) * dx_f + p * (ls * ds_eff + lt * dt_eff)) + 1e-9 * p * dm.mu
    return OracleResult(
        x_hat=x_hat,
        value_hat=float(T_f[kf]),
        arg_s=arg_s,
        arg_t=arg_t,
        gap_bound=float(gap),
        x_pitch=float(dx),
    )


def _three_point_laws(rng: np.random.Generator, n: int, dm: DemandMoments):
    m_hi = 3.0 * dm.mu * (1.0 + dm.cv**2)
    logs = rng.uniform(math.log(m_hi * 1e-4), math.log(m_hi), size=(n, 3))
    pts = np.sort(np.exp(logs), axis=1)
    pts[rng.random(n) < 1.0 / 3.0, 0] = 0.0
    # Vandermonde system for (1, mu, mu^2 + sigma^2)
    a = np.stack([np.ones_like(pts), pts, pts**2], axis=1)
    b = np.array([1.0, dm.mu, dm.second_moment])
    ok = np.abs(np.linalg.det(a)) > 1e-12 * m_hi**3
    probs = np.full((n, 3), -1.0)
    probs[ok] = np.linalg.solve(a[ok], np.broadcast_to(b, (int(ok.sum()), 3))[..., None])[..., 0]
    keep = np.all(probs >= 0.0, axis=1)
    return pts[keep], probs[keep]


def _discrete_risk_rows(h: Distortion, values: np.ndarray, probs: np.ndarray) -> np.ndarray:
    order = np.argsort(values, axis=1)
    v = np.take_along_axis(values, order, axis=1)
    p = np.take_along_axis(probs, order, axis=1)
    cum = np.clip(np.cumsum(p, axis=1), 0.0, 1.0)
    cum[:, -1] = 1.0
    hv = np.asarray(h.value(cum), dtype=float)
    w = np.diff(np.concatenate([np.zeros((hv.shape[0], 1)), hv], axis=1), axis=1)
    return np.sum(v * w, axis=1)


def random_feasible_search(
    h: Distortion, x: float, m: Market, dm: DemandMoments, trials: int, seed: int
) -> tuple[float, int]:
    """Largest loss risk found over random moment-matched laws at order ``x``.

    Trial 0 is the two-point law on ``{0, (mu^2+sigma^2)/mu}``; the rest are
    three-point laws whose probabilities solve the moment equations. Returns
    ``(max_found, laws_evaluated)``.
    """
    if trials < 1:
        raise OracleError("need at least one trial")
    p, c = m.effective_price, m.effective_cost
    t0 = dm.t_low
    two = np.array([[0.0, dm.second_moment / dm.mu]])
    two_p = np.array([[1.0 - t0, t0]])
    loss = lambda d: p * np.maximum(-d, -x) + c * x  # noqa: E731
    best = float(_discrete_risk_rows(h, loss(two), two_p)[0])
    done = 1
    rng = np.random.default_rng(seed)
    attempts = 0
    while done < trials and attempts < 1000 * trials:
        batch = min(max(4 * (trials - done), 64), 200_000)
        pts, probs = _three_point_laws(rng, batch, dm)
        attempts += batch
        if pts.shape[0] == 0:
            continue
        pts, probs = pts[: trials - done], probs[: trials - done]
        risks = _discrete_risk_rows(h, loss(pts), probs)
        best = max(best, float(risks.max()))
        done += pts.shape[0]
    return best, done
