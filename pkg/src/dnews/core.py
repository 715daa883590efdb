"""Shared building blocks of the ordering rule: moments, regimes, sigma_t, Delta."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .distortion import Distortion, DistortionError

__all__ = ["Regime", "DemandMoments", "SolverError", "sigma_t", "delta", "RADICAND_TOL"]

RADICAND_TOL = 1e-12


class SolverError(ValueError):
    pass


class Regime(str, enum.Enum):
    NO_ORDER = "no-order"
    FULL_SUPPORT = "full-support"
    TRUNCATED = "truncated"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DemandMoments:
    """Demand mean ``mu > 0`` and standard deviation ``sigma >= 0``."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.mu) and self.mu > 0.0):
            raise SolverError(f"mu must be finite and positive, got {self.mu}")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise SolverError(f"sigma must be finite and non-negative, got {self.sigma}")

    @classmethod
    def from_cv(cls, mu: float, cv: float) -> "DemandMoments":
        return cls(mu, cv * mu)

    @property
    def cv(self) -> float:
        return self.sigma / self.mu

    @property
    def second_moment(self) -> float:
        return self.mu * self.mu + self.sigma * self.sigma

    @property
    def t_low(self) -> float:
        """``1 / (1 + r^2) = mu^2 / (mu^2 + sigma^2)``."""
        return self.mu * self.mu / self.second_moment


def sigma_t(dm: DemandMoments, t: float) -> float:
    """``sqrt(t (mu^2 + sigma^2) - mu^2)`` on ``[1/(1+r^2), 1]``."""
    if t > 1.0 + 1e-15:
        raise SolverError(f"t must be <= 1, got {t}")
    rad = t * dm.second_moment - dm.mu * dm.mu
    if rad < 0.0:
        if rad < -RADICAND_TOL * dm.second_moment:
            raise SolverError(f"t = {t} lies below 1/(1+r^2) = {dm.t_low}")
        return 0.0
    return math.sqrt(rad)


def delta(h: Distortion, s_star: float, beta: float, t: float) -> float:
    """``sqrt(t int_{s*}^t h'^2 - (h(t) - beta)^2)``, tiny negative radicands clamped."""
    if t < s_star - 1e-15:
        raise SolverError("delta needs t >= s*")
    if t <= s_star:
        return 0.0
    integral = float(h.sq_slope_cumulative(t)) - float(h.sq_slope_cumulative(s_star))
    if not math.isfinite(integral):
        raise DistortionError(f"int h'^2 diverges on [{s_star:g}, {t:g}]")
    gap = float(h.value(t)) - beta
    rad = t * integral - gap * gap
    if rad < 0.0:
        if rad < -RADICAND_TOL * max(1.0, t * integral):
            raise SolverError(f"negative radicand {rad:.3g} in delta: inconsistent s*, beta")
        return 0.0
    return math.sqrt(rad)
