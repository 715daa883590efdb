"""Worst-case demand laws attaining the robust risk value.

The law is stored through its quantile function on ``(0, 1)`` as an ordered
list of pieces: an atom at zero (mass ``1 - t*``), a middle part shaped by
``h'`` on ``[1 - t*, 1 - s*)``, and a top atom of mass ``s*``. When ``h`` is
piecewise linear the middle part is itself a set of atoms.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .core import DemandMoments, Regime, delta, sigma_t
from .distortion import Distortion, PiecewiseLinear
from .risk import Market, distortion_risk_quantile, loss_function

__all__ = [
    "WorstCaseError",
    "Piece",
    "WorstCaseDistribution",
    "build_worst_case",
    "quantile",
    "moments_of",
    "sample",
    "loss_risk",
    "literal_constant_diagnostic",
    "write_csv",
]

MOMENT_RTOL = 1e-8
CLAMP_TOL = 1e-9
ATOM_MIN_WIDTH = 1e-12


class WorstCaseError(ValueError):
    pass


@dataclass(frozen=True)
class Piece:
    """Quantile on ``[lo, hi)``: the constant ``value``, or the shaped segment if ``None``."""

    lo: float
    hi: float
    value: float | None = None

    @property
    def width(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class WorstCaseDistribution:
    regime: Regime
    mu: float
    sigma: float
    zero_atom_prob: float
    top_atom_value: float
    top_atom_prob: float
    pieces: tuple[Piece, ...]
    # segment quantile: offset - scale * h'_+(1 - u), floored at zero
    h: Distortion | None = None
    offset: float = 0.0
    scale: float = 0.0
    s_star: float = math.nan
    t_star: float = math.nan
    checked_moments: tuple[float, float] = field(default=(math.nan, math.nan))

    @property
    def segment(self) -> tuple[float, float] | None:
        """``(u_lo, u_hi)`` of the non-atomic part, if any."""
        for p in self.pieces:
            if p.value is None:
                return (p.lo, p.hi)
        return None

    @property
    def atoms(self) -> list[tuple[float, float]]:
        """Atoms ``(value, probability)`` in increasing value, equal values merged."""
        out: dict[float, float] = {}
        for p in self.pieces:
            if p.value is not None and p.width > 0:
                out[p.value] = out.get(p.value, 0.0) + p.width
        return sorted(out.items())

    def _segment_value(self, u):
        hp = np.asarray(self.h.right_derivative(1.0 - np.asarray(u, dtype=float)), dtype=float)
        return np.maximum(self.offset - self.scale * hp, 0.0)

    def _q(self, u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        bounds = np.array([p.hi for p in self.pieces])
        idx = np.clip(np.searchsorted(bounds, u, side="right"), 0, len(self.pieces) - 1)
        for k, piece in enumerate(self.pieces):
            mask = idx == k
            if not np.any(mask):
                continue
            out[mask] = piece.value if piece.value is not None else self._segment_value(u[mask])
        return out

    def quantile(self, u):
        return quantile(self, u)

    def moments(self) -> tuple[float, float]:
        return moments_of(self)

    def sample(self, n: int, seed: int):
        return sample(self, n, seed)


def _pieces_for_segment(h: Distortion, s: float, t: float, offset: float, scale: float) -> list[Piece]:
    """The middle part ``v in (s, t]`` mapped to ``u = 1 - v``, listed in increasing ``u``."""
    if isinstance(h, PiecewiseLinear):
        out = []
        a = h.knots
        for j in range(len(h.slopes) - 1, -1, -1):
            vlo, vhi = max(a[j], s), min(a[j + 1], t)
            if vhi - vlo <= ATOM_MIN_WIDTH:
                continue
            val = offset - scale * h.slopes[j]
            out.append(Piece(1.0 - vhi, 1.0 - vlo, val))
        return out
    return [Piece(1.0 - t, 1.0 - s, None)]


def build_worst_case(
    h: Distortion,
    beta: float,
    dm: DemandMoments,
    s_star: float,
    t_star: float,
    regime: Regime | None = None,
    check: bool = True,
    constant: float | None = None,
) -> WorstCaseDistribution:
    """Construct the extremal demand law for a solved instance.

    ``constant`` overrides the shift ``C = h(t*) - beta`` of the middle part;
    it exists for diagnostics only and disables the moment check.

    Raises:
        WorstCaseError: negative quantile beyond rounding, or moments off by
            more than ``1e-8`` relative.
    """
    mu, sig = dm.mu, dm.sigma
    if sig == 0.0:
        return WorstCaseDistribution(
            Regime.FULL_SUPPORT, mu, 0.0, 0.0, mu, 1.0, (Piece(0.0, 1.0, mu),),
            s_star=s_star, t_star=1.0, checked_moments=(mu, 0.0),
        )
    if regime is None:
        regime = Regime.NO_ORDER if float(h.value(dm.t_low)) <= beta else (
            Regime.FULL_SUPPORT if t_star >= 1.0 else Regime.TRUNCATED
        )

    if regime is Regime.NO_ORDER:
        t0 = dm.t_low
        top = dm.second_moment / mu
        pieces = (Piece(0.0, 1.0 - t0, 0.0), Piece(1.0 - t0, 1.0, top))
        wc = WorstCaseDistribution(regime, mu, sig, 1.0 - t0, top, t0, pieces, s_star=s_star, t_star=t0)
        return _checked(wc) if check else wc

    t = 1.0 if regime is Regime.FULL_SUPPORT else float(t_star)
    st = sig if t == 1.0 else sigma_t(dm, t)
    d = delta(h, s_star, beta, t)
    if d == 0.0:
        # degenerate middle part: fall back to the two-point law on [0, mu/t]
        pieces = tuple(p for p in (Piece(0.0, 1.0 - t, 0.0), Piece(1.0 - t, 1.0, mu / t)) if p.width > 0)
        wc = WorstCaseDistribution(regime, mu, sig, 1.0 - t, mu / t, t, pieces, s_star=s_star, t_star=t)
        return _checked(wc) if check else wc

    c_shift = float(h.value(t)) - beta if constant is None else constant
    top = mu / t + st * c_shift / (t * d)
    scale = st / d

    lowest = top - scale * float(h.left_derivative(t))
    tol = CLAMP_TOL * max(1.0, mu)
    if check and lowest < -tol:
        raise WorstCaseError(
            f"worst-case quantile dips to {lowest:.6g} < 0: regime/t* inconsistent with the moments"
        )

    pieces: list[Piece] = []
    if 1.0 - t > 0.0:
        pieces.append(Piece(0.0, 1.0 - t, 0.0))
    for p in _pieces_for_segment(h, s_star, t, top, scale):
        if p.value is not None and -tol <= p.value < 0.0:
            p = Piece(p.lo, p.hi, 0.0)
        pieces.append(p)
    pieces.append(Piece(1.0 - s_star, 1.0, top))
    wc = WorstCaseDistribution(
        regime, mu, sig, 1.0 - t, top, s_star, tuple(pieces), h=h, offset=top, scale=scale,
        s_star=s_star, t_star=t,
    )
    return _checked(wc) if check else wc


def _checked(wc: WorstCaseDistribution) -> WorstCaseDistribution:
    mean, var = moments_of(wc)
    mu, sig2 = wc.mu, wc.sigma**2
    bad_mean = abs(mean - mu) > MOMENT_RTOL * mu
    bad_var = abs(var - sig2) > MOMENT_RTOL * max(sig2, 1e-300)
    if bad_mean or bad_var:
        raise WorstCaseError(
            f"moment check failed: mean {mean:.12g} vs {mu:.12g}, variance {var:.12g} vs {sig2:.12g}"
        )
    object.__setattr__(wc, "checked_moments", (mean, var))
    return wc


def quantile(wc: WorstCaseDistribution, u):
    """Left-continuous quantile ``F^{-1}(u)`` for ``u`` in (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise WorstCaseError("u must lie in (0, 1)")
    out = wc._q(arr)
    return float(out) if np.ndim(u) == 0 else out


def moments_of(wc: WorstCaseDistribution) -> tuple[float, float]:
    """Mean and variance, summed piece by piece.

    On the shaped part ``q(u) = offset - scale h'(1 - u)``, so its moments
    follow from the primitives ``h`` and ``K = int h'^2`` without quadrature
    (``h'`` can be singular near ``u = 0``).
    """
    first, central = [], []
    mu = wc.mu
    h = wc.h
    for p in wc.pieces:
        if p.width <= 0:
            continue
        if p.value is not None:
            first.append(p.value * p.width)
            central.append((p.value - mu) ** 2 * p.width)
            continue
        vlo, vhi = 1.0 - p.hi, 1.0 - p.lo
        dh = float(h.value(vhi)) - float(h.value(vlo))
        dk = float(h.sq_slope_cumulative(vhi)) - float(h.sq_slope_cumulative(vlo))
        if not math.isfinite(dk):
            raise WorstCaseError("divergent moment integral")
        shift = wc.offset - mu
        first.append(wc.offset * p.width - wc.scale * dh)
        central.append(shift * shift * p.width - 2.0 * shift * wc.scale * dh + wc.scale**2 * dk)
    mean = math.fsum(first)
    var = math.fsum(central) - (mean - mu) ** 2
    return mean, var


def sample(wc: WorstCaseDistribution, n: int, seed: int) -> np.ndarray:
    """``n`` inverse-transform draws from a seeded PCG64 generator."""
    if n < 1:
        raise WorstCaseError("need n >= 1 draws")
    u = np.random.default_rng(seed).random(n)
    return wc._q(u)


def loss_risk(wc: WorstCaseDistribution, h: Distortion, market: Market, x: float, tol: float = 1e-10) -> float:
    """``rho_h`` of the newsvendor loss at order ``x`` when demand follows ``wc``."""
    # loss is non-increasing in demand, so its a-quantile sits at demand level 1 - a
    def loss_q(a: float) -> float:
        return loss_function(x, market, float(wc._q(1.0 - a)))

    cuts = [1.0 - p.hi for p in wc.pieces] + [1.0 - p.lo for p in wc.pieces]
    if wc.h is not None:
        cuts += list(wc.h.kinks)
    # the loss has a kink where demand crosses x
    for p in wc.pieces:
        if p.value is None and p.width > 0:
            lo, hi = float(wc._q(p.lo + 1e-15 * p.width)), float(wc._q(p.hi))
            if lo < x < hi:
                u = optimize.brentq(lambda v: float(wc._q(v)) - x, p.lo, p.hi, xtol=1e-15)
                cuts.append(1.0 - u)
    return distortion_risk_quantile(h, loss_q, tol=tol, breakpoints=cuts)


def literal_constant_diagnostic(
    h: Distortion, beta: float, dm: DemandMoments, s_star: float, t_star: float
) -> dict:
    """Mean error of the middle-part shift ``h(t*) - (1 - beta)`` versus ``h(t*) - beta``.

    Returns the mean under each constant, the
    deviation from ``mu`` and its closed form ``-(sigma_t/Delta)(1 - 2 beta)``.
    """
    t = float(t_star)
    literal = float(h.value(t)) - (1.0 - beta)
    corrected = float(h.value(t)) - beta
    regime = Regime.FULL_SUPPORT if t >= 1.0 else Regime.TRUNCATED
    w_lit = build_worst_case(h, beta, dm, s_star, t, regime=regime, check=False, constant=literal)
    w_cor = build_worst_case(h, beta, dm, s_star, t, regime=regime, check=False, constant=corrected)
    m_lit, v_lit = moments_of(w_lit)
    m_cor, v_cor = moments_of(w_cor)
    st = dm.sigma if t == 1.0 else sigma_t(dm, t)
    d = delta(h, s_star, beta, t)
    return {
        "constant_literal": literal,
        "constant_used": corrected,
        "mean_literal": m_lit,
        "mean_used": m_cor,
        "mean_error_literal": m_lit - dm.mu,
        "mean_error_used": m_cor - dm.mu,
        "mean_error_literal_closed_form": -(st / d) * (1.0 - 2.0 * beta) if d > 0 else 0.0,
        "variance_literal": v_lit,
        "variance_used": v_cor,
    }


def write_csv(wc: WorstCaseDistribution, points: int, fh: io.TextIOBase | None = None) -> str:
    """Quantile table ``u,quantile`` on the midpoints grid, then a ``value,probability`` section."""
    if points < 1:
        raise WorstCaseError("need at least one grid point")
    u = (np.arange(points) + 0.5) / points
    qs = wc._q(u)
    lines = ["u,quantile"]
    lines += [f"{a:.12g},{b:.12g}" for a, b in zip(u, qs)]
    lines.append("")
    lines.append("value,probability")
    lines += [f"{v:.12g},{p:.12g}" for v, p in wc.atoms]
    text = "\n".join(lines) + "\n"
    if fh is not None:
        fh.write(text)
    return text
