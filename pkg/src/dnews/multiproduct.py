"""Several products under one risk measure.

The robust problem separates: each product is solved on its own and the
worst-case values add up. The joint law attaining the sum couples the
per-product worst cases comonotonically (one common uniform drives them all).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import DemandMoments
from .distortion import Distortion, parse_distortion
from .risk import Market, distortion_risk_empirical, loss_function
from .solver import SolveReport, solve_single

__all__ = [
    "ProductSpec",
    "MultiReport",
    "AdditivityDiagnostics",
    "MultiProductError",
    "solve_multi",
    "comonotonic_sample",
    "independent_sample",
    "verify_additivity",
    "load_scenario",
    "parse_scenario",
]

BATCHES = 100
SE_BAND = 4.0


class MultiProductError(ValueError):
    pass


@dataclass(frozen=True)
class ProductSpec:
    market: Market
    moments: DemandMoments
    label: str = ""

    @classmethod
    def from_dict(cls, d: Mapping) -> "ProductSpec":
        try:
            market = Market(float(d["price"]), float(d["cost"]), float(d.get("salvage", 0.0)))
            moments = DemandMoments(float(d["mu"]), float(d["sigma"]))
        except KeyError as exc:
            raise MultiProductError(f"product entry lacks field {exc.args[0]!r}") from None
        return cls(market, moments, str(d.get("label", "")))


@dataclass(frozen=True)
class MultiReport:
    per_product: tuple[SolveReport, ...]
    total_value: float
    labels: tuple[str, ...] = ()

    @property
    def orders(self) -> tuple[float, ...]:
        return tuple(r.x_star for r in self.per_product)

    def as_dict(self) -> dict:
        return {
            "totalValue": self.total_value,
            "products": [
                {"label": lab, **r.as_dict()} for lab, r in zip(self.labels or [""] * len(self.per_product), self.per_product)
            ],
        }


def solve_multi(
    h: Distortion, products: Sequence[ProductSpec], tie_policy: str = "mid", with_worst_case: bool = True
) -> MultiReport:
    if not products:
        raise MultiProductError("need at least one product")
    reports = tuple(solve_single(h, p.market, p.moments, tie_policy, with_worst_case=with_worst_case) for p in products)
    total = 0.0
    for r in reports:
        total += r.value
    return MultiReport(reports, total, tuple(p.label for p in products))


def _worst_cases(reports: Sequence[SolveReport]):
    if any(r.worst_case is None for r in reports):
        raise MultiProductError("reports must carry their worst-case law")
    return [r.worst_case for r in reports]


def comonotonic_sample(reports: Sequence[SolveReport], n: int, seed: int) -> np.ndarray:
    """``n x k`` demand draws; every column is the quantile of one shared uniform."""
    if n < 1:
        raise MultiProductError("need n >= 1")
    u = np.random.default_rng(seed).random(n)
    return np.column_stack([w._q(u) for w in _worst_cases(reports)])


def independent_sample(reports: Sequence[SolveReport], n: int, seed: int) -> np.ndarray:
    """Same marginals as :func:`comonotonic_sample`, drawn independently per column."""
    if n < 1:
        raise MultiProductError("need n >= 1")
    rng = np.random.default_rng(seed)
    return np.column_stack([w._q(rng.random(n)) for w in _worst_cases(reports)])


@dataclass(frozen=True)
class AdditivityDiagnostics:
    estimate: float
    total_value: float
    standard_error: float
    coupling: str
    n: int

    @property
    def deviation(self) -> float:
        return self.estimate - self.total_value

    @property
    def passed(self) -> bool:
        band = SE_BAND * self.standard_error
        if self.coupling == "comonotonic":
            return abs(self.deviation) <= band
        # other couplings can only lower the risk of the total
        return self.deviation <= band

    def as_dict(self) -> dict:
        return {
            "coupling": self.coupling,
            "n": self.n,
            "estimate": self.estimate,
            "totalValue": self.total_value,
            "standardError": self.standard_error,
            "passed": self.passed,
        }


def verify_additivity(
    h: Distortion,
    products: Sequence[ProductSpec],
    n: int = 1_000_000,
    seed: int = 42,
    coupling: str = "comonotonic",
    tie_policy: str = "mid",
) -> AdditivityDiagnostics:
    """Monte Carlo check that ``rho_h`` of the summed loss matches the summed values.

    The standard error comes from ``100`` batch estimates of equal size.
    """
    if coupling not in ("comonotonic", "independent"):
        raise MultiProductError(f"unknown coupling {coupling!r}")
    if n < BATCHES:
        raise MultiProductError(f"need n >= {BATCHES}")
    rep = solve_multi(h, products, tie_policy)
    draw = comonotonic_sample if coupling == "comonotonic" else independent_sample
    demand = draw(rep.per_product, n, seed)
    total_loss = np.zeros(n)
    for k, (p, r) in enumerate(zip(products, rep.per_product)):
        total_loss += loss_function(r.x_star, p.market, demand[:, k])
    estimate = distortion_risk_empirical(h, total_loss)
    m = n // BATCHES
    batch = np.array([distortion_risk_empirical(h, total_loss[i * m:(i + 1) * m]) for i in range(BATCHES)])
    se = float(np.std(batch, ddof=1) / math.sqrt(BATCHES))
    return AdditivityDiagnostics(estimate, rep.total_value, se, coupling, n)


def parse_scenario(data: Mapping) -> tuple[Distortion, list[ProductSpec]]:
    """``{"distortion": "<spec>", "products": [{label, price, cost, salvage, mu, sigma}, ...]}``."""
    if "distortion" not in data or "products" not in data:
        raise MultiProductError("scenario needs 'distortion' and 'products'")
    products = [ProductSpec.from_dict(d) for d in data["products"]]
    if not products:
        raise MultiProductError("scenario has no products")
    return parse_distortion(str(data["distortion"])), products


def load_scenario(path: str | Path) -> tuple[Distortion, list[ProductSpec]]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MultiProductError(f"scenario is not valid JSON: {exc}") from None
    return parse_scenario(data)
