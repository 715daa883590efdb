"""Distortion risk functionals and the newsvendor loss.

``rho_h(X) = int_0^1 VaR_a(X) dh(a)`` evaluated three ways: exactly on a
discrete law, by quadrature on a quantile function, and as an L-statistic on
a sample.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import integrate

from .distortion import Distortion

__all__ = [
    "Market",
    "DiscreteLaw",
    "RiskError",
    "loss_function",
    "distortion_risk_discrete",
    "distortion_risk_quantile",
    "distortion_risk_empirical",
]


class RiskError(ValueError):
    pass


@dataclass(frozen=True)
class Market:
    """Unit price, cost and salvage value; ``price > cost > salvage >= 0``."""

    price: float
    cost: float
    salvage: float = 0.0

    def __post_init__(self):
        p, c, s = self.price, self.cost, self.salvage
        if not all(math.isfinite(v) for v in (p, c, s)):
            raise RiskError("market values must be finite")
        if not (p > c > s >= 0.0):
            raise RiskError(f"need price > cost > salvage >= 0, got p={p}, c={c}, s={s}")

    @property
    def effective_price(self) -> float:
        return self.price - self.salvage

    @property
    def effective_cost(self) -> float:
        return self.cost - self.salvage

    @property
    def beta(self) -> float:
        """Effective cost-to-price ratio ``(c - s) / (p - s)``."""
        return self.effective_cost / self.effective_price


@dataclass(frozen=True)
class DiscreteLaw:
    """Finite law given as ``(value, probability)`` atoms."""

    atoms: tuple[tuple[float, float], ...]

    def __init__(self, atoms: Iterable[tuple[float, float]]):
        atoms = tuple((float(v), float(p)) for v, p in atoms)
        if not atoms:
            raise RiskError("a discrete law needs at least one atom")
        if any(not math.isfinite(v) for v, _ in atoms):
            raise RiskError("atom values must be finite")
        if any(not p > 0.0 for _, p in atoms):
            raise RiskError("atom probabilities must be positive")
        if abs(math.fsum(p for _, p in atoms) - 1.0) > 1e-12:
            raise RiskError("atom probabilities must sum to 1")
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "DiscreteLaw":
        n = len(values)
        return cls((v, 1.0 / n) for v in values)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.atoms)

    def map(self, f: Callable[[float], float]) -> "DiscreteLaw":
        return DiscreteLaw((f(v), p) for v, p in self.atoms)


def loss_function(x, market: Market, demand):
    """Salvage-adjusted newsvendor loss ``(p-s) max(-D, -x) + (c-s) x`` (minus profit)."""
    if np.any(np.asarray(x) < 0) or np.any(np.asarray(demand) < 0):
        raise RiskError("order quantity and demand must be non-negative")
    out = market.effective_price * np.maximum(-np.asarray(demand, dtype=float), -np.asarray(x, dtype=float))
    out = out + market.effective_cost * np.asarray(x, dtype=float)
    return float(out) if np.ndim(out) == 0 else out


def distortion_risk_discrete(h: Distortion, law: DiscreteLaw) -> float:
    """Exact ``rho_h`` of a discrete law. Equal atom values are merged first."""
    vals, inv = np.unique(law.values, return_inverse=True)
    probs = np.bincount(inv, weights=law.probs)
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    hv = np.asarray(h.value(cum), dtype=float)
    w = np.diff(np.concatenate([[0.0], hv]))
    return float(np.dot(vals, w))


def distortion_risk_empirical(h: Distortion, samples) -> float:
    """L-statistic estimate ``sum_i x_(i) (h(i/n) - h((i-1)/n))``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n == 0:
        raise RiskError("empty sample")
    grid = np.arange(n + 1, dtype=float) / n
    hv = np.asarray(h.value(grid), dtype=float)
    hv[0], hv[-1] = 0.0, 1.0
    return float(np.dot(x, np.diff(hv)))


def _quad(f, lo: float, hi: float, tol: float, scale: float) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        val, _ = integrate.quad(f, lo, hi, epsabs=tol * 1e-3 * scale, epsrel=tol, limit=500)
    return val


def distortion_risk_quantile(
    h: Distortion,
    q: Callable[[float], float],
    tol: float = 1e-10,
    breakpoints: Sequence[float] = (),
    probe: int = 257,
) -> float:
    """``int_0^1 q(a) dh(a)`` for a non-decreasing quantile function ``q``.

    The interval is split at ``breakpoints`` (kinks or jumps of ``q``) and at
    the kinks of ``h``. Pieces on which ``q`` is constant are integrated
    exactly as ``q * (h(b) - h(a))``; the rest by adaptive quadrature against
    ``h'``.
    """
    grid = (np.arange(probe) + 0.5) / probe
    qs = np.array([q(float(a)) for a in grid])
    if not np.all(np.isfinite(qs)):
        raise RiskError("quantile function is not finite on (0, 1)")
    scale = max(1.0, float(np.max(np.abs(qs))))
    if np.any(np.diff(qs) < -1e-12 * scale):
        raise RiskError("quantile function is not non-decreasing")

    cuts = sorted({0.0, 1.0, *(float(b) for b in breakpoints if 0.0 < b < 1.0), *h.kinks})
    total = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= 0.0:
            continue
        inner = lo + (hi - lo) * np.array([1e-9, 0.25, 0.5, 0.75, 1 - 1e-9])
        vals = [q(float(a)) for a in inner]
        weight = float(h.value(hi)) - float(h.value(lo))
        if hi - lo <= 1e-12 or max(vals) - min(vals) <= 1e-15 * max(1.0, abs(vals[2])):
            total.append(vals[2] * weight)
            continue
        try:
            val = _quad(lambda a: q(a) * float(h.left_derivative(a)), lo, hi, tol, scale)
        except integrate.IntegrationWarning:
            # h' singular at an end: substitute w = h(a), which leaves a bounded integrand
            hl, hh = float(h.value(lo)), float(h.value(hi))
            try:
                val = _quad(lambda w: q(min(max(float(h.inverse(w)), lo), hi)), hl, hh, tol, 1e3 * scale)
            except integrate.IntegrationWarning as exc:
                raise RiskError(f"quadrature failed on [{lo:g}, {hi:g}]: {exc}") from None
        if not math.isfinite(val):
            raise RiskError("divergent risk integral")
        total.append(val)
    return math.fsum(total)
