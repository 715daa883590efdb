"""Convex distortion functions and the numeric primitives built on them.

A distortion ``h`` maps quantile levels ``[0, 1] -> [0, 1]`` with ``h(0) = 0``,
``h(1) = 1``. Applied to losses, a convex ``h`` puts more weight on the upper
quantiles, i.e. it encodes risk aversion.

Every distortion exposes its value, left/right derivatives, a generalized
inverse, and the cumulative squared slope ``K(u) = int_0^u h'(v)^2 dv``.
All methods accept floats or numpy arrays.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr, ndtri

__all__ = [
    "DistortionError",
    "DivergentIntegralError",
    "Distortion",
    "PiecewiseLinear",
    "Wang",
    "PropHazards",
    "Gini",
    "Custom",
    "Conditional",
    "ValidationReport",
    "make_builtin",
    "parse_distortion",
    "parse_spec",
    "evaluate_distortion",
    "validate_distortion",
    "inverse_at",
    "squared_slope_integral",
    "piecewise_linearize",
    "FAMILIES",
]

INVERSE_TOL = 1e-12
QUAD_RTOL = 1e-10


class DistortionError(ValueError):
    """Bad family tag, bad parameters, or a distortion outside the admissible class."""


class DivergentIntegralError(DistortionError):
    """The squared-slope integral is infinite on the requested interval."""


def _scalar_or_array(x, scalar: bool):
    if scalar:
        return float(x)
    return x


def _check_unit(u, name: str = "u") -> None:
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise DistortionError(f"{name} must lie in [0, 1], got {u!r}")


class Distortion:
    """Base class. Subclasses provide closed forms where they exist.

    The generic fallbacks are bisection for the inverse and adaptive
    quadrature (split at ``kinks``) for the squared-slope integral.
    """

    kind: str = "custom"
    kinks: tuple[float, ...] = ()

    # --- to be provided by subclasses -------------------------------------------------
    def value(self, u):
        raise NotImplementedError

    def left_derivative(self, u):
        raise NotImplementedError

    def right_derivative(self, u):
        return self.left_derivative(u)

    @property
    def params(self) -> dict:
        return {}

    # --- generic machinery ------------------------------------------------------------
    def __call__(self, u):
        return self.value(u)

    def inverse(self, beta):
        """Smallest ``u`` with ``h(u) = beta`` (``beta`` in (0, 1))."""
        if np.ndim(beta):
            return np.array([self.inverse(b) for b in np.ravel(beta)]).reshape(np.shape(beta))
        lo, hi = 0.0, 1.0
        while hi - lo > INVERSE_TOL:
            mid = 0.5 * (lo + hi)
            if self.value(mid) < beta:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def sq_slope_cumulative(self, u):
        """``int_0^u h'(v)^2 dv``; may be ``inf`` at ``u = 1``."""
        if np.ndim(u):
            return np.array([self.sq_slope_cumulative(v) for v in np.ravel(u)]).reshape(np.shape(u))
        return _quad_sq_slope(self, 0.0, float(u))

    def spec(self) -> str:
        """Textual form accepted by :func:`parse_distortion`."""
        if not self.params:
            return self.kind
        inner = ",".join(f"{k}={_fmt_param(v)}" for k, v in self.params.items())
        return f"{self.kind}({inner})"

    def __repr__(self) -> str:
        return f"<Distortion {self.spec()}>"


def _fmt_param(v) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_fmt_param(x) for x in v) + "]"
    return f"{float(v):.12g}"


def _quad_sq_slope(h: Distortion, a: float, b: float) -> float:
    if b <= a:
        return 0.0
    pts = [a] + [k for k in h.kinks if a < k < b] + [b]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(
            lambda v: float(h.left_derivative(v)) ** 2, lo, hi, epsabs=0.0, epsrel=QUAD_RTOL, limit=400
        )
        total += val
    if not math.isfinite(total):
        return math.inf
    return total


# ----------------------------------------------------------------------------------------
# Piecewise linear (covers risk-neutral, CVaR, mean-CVaR, deviation from the median)
# ----------------------------------------------------------------------------------------


class PiecewiseLinear(Distortion):
    """Piecewise linear distortion with knots ``0 = a_0 < ... < a_n = 1``.

    ``slopes[j]`` is the slope on ``(a_j, a_{j+1}]``. Only structural checks
    happen here; convexity is checked by :func:`validate_distortion` and
    enforced by :func:`make_builtin`.
    """

    def __init__(self, knots: Sequence[float], slopes: Sequence[float], kind: str = "pl", params=None):
        a = np.asarray(knots, dtype=float)
        lam = np.asarray(slopes, dtype=float)
        if a.ndim != 1 or a.size < 2 or lam.size != a.size - 1:
            raise DistortionError("need n+1 knots and n slopes, n >= 1")
        if a[0] != 0.0 or a[-1] != 1.0 or np.any(np.diff(a) <= 0):
            raise DistortionError("knots must increase strictly from 0 to 1")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise DistortionError("slopes must be finite and non-negative")
        cum = np.concatenate([[0.0], np.cumsum(lam * np.diff(a))])
        if abs(cum[-1] - 1.0) > 1e-9:
            raise DistortionError(f"slopes integrate to {cum[-1]:.12g}, not 1")
        cum[-1] = 1.0
        self.knots = a
        self.slopes = lam
        self._cum = cum
        self._cumsq = np.concatenate([[0.0], np.cumsum(lam**2 * np.diff(a))])
        self.kind = kind
        self._params = dict(params) if params is not None else {
            "knots": a.tolist(),
            "slopes": lam.tolist(),
        }
        self.kinks = tuple(float(k) for k in a[1:-1])

    @property
    def params(self) -> dict:
        return dict(self._params)

    def value(self, u):
        return _scalar_or_array(np.interp(u, self.knots, self._cum), np.ndim(u) == 0)

    def left_derivative(self, u):
        idx = np.clip(np.searchsorted(self.knots, u, side="left"), 1, self.slopes.size)
        return _scalar_or_array(self.slopes[idx - 1], np.ndim(u) == 0)

    def right_derivative(self, u):
        idx = np.clip(np.searchsorted(self.knots, u, side="right"), 1, self.slopes.size)
        return _scalar_or_array(self.slopes[idx - 1], np.ndim(u) == 0)

    def inverse(self, beta):
        j = np.clip(np.searchsorted(self._cum, beta, side="left"), 1, self.slopes.size)
        out = self.knots[j - 1] + (beta - self._cum[j - 1]) / self.slopes[j - 1]
        return _scalar_or_array(out, np.ndim(beta) == 0)

    def sq_slope_cumulative(self, u):
        return _scalar_or_array(np.interp(u, self.knots, self._cumsq), np.ndim(u) == 0)


# ----------------------------------------------------------------------------------------
# Smooth families
# ----------------------------------------------------------------------------------------


class Wang(Distortion):
    """Wang transform ``h(u) = Phi(Phi^{-1}(u) - lam)``, convex for ``lam >= 0``."""

    kind = "wang"

    def __init__(self, lam: float):
        if not lam >= 0:
            raise DistortionError("wang requires lambda >= 0")
        self.lam = float(lam)

    @property
    def params(self) -> dict:
        return {"lambda": self.lam}

    def value(self, u):
        return _scalar_or_array(ndtr(ndtri(u) - self.lam), np.ndim(u) == 0)

    def left_derivative(self, u):
        if self.lam == 0.0:
            return _scalar_or_array(np.ones_like(np.asarray(u, dtype=float)), np.ndim(u) == 0)
        z = ndtri(u)
        with np.errstate(over="ignore"):
            out = np.exp(self.lam * z - 0.5 * self.lam**2)
        return _scalar_or_array(out, np.ndim(u) == 0)

    def inverse(self, beta):
        return _scalar_or_array(ndtr(ndtri(beta) + self.lam), np.ndim(beta) == 0)

    def sq_slope_cumulative(self, u):
        # Gaussian integral of exp(2 lam z - lam^2) against phi(z) up to Phi^{-1}(u)
        out = math.exp(self.lam**2) * ndtr(ndtri(u) - 2.0 * self.lam)
        return _scalar_or_array(out, np.ndim(u) == 0)


class PropHazards(Distortion):
    """Proportional hazards ``h(u) = 1 - (1 - u)^a`` for ``0 < a <= 1``.

    Square-integrable slope only for ``a > 1/2``; smaller ``a`` is allowed
    here so the diagnostics can flag it.
    """

    kind = "prop-hazards"

    def __init__(self, a: float):
        if not 0.0 < a <= 1.0:
            raise DistortionError("prop-hazards requires 0 < a <= 1")
        self.a = float(a)

    @property
    def params(self) -> dict:
        return {"a": self.a}

    def value(self, u):
        return _scalar_or_array(1.0 - np.power(1.0 - np.asarray(u, dtype=float), self.a), np.ndim(u) == 0)

    def left_derivative(self, u):
        with np.errstate(divide="ignore"):
            out = self.a * np.power(1.0 - np.asarray(u, dtype=float), self.a - 1.0)
        return _scalar_or_array(out, np.ndim(u) == 0)

    def inverse(self, beta):
        return _scalar_or_array(1.0 - np.power(1.0 - np.asarray(beta, dtype=float), 1.0 / self.a), np.ndim(beta) == 0)

    def sq_slope_cumulative(self, u):
        a = self.a
        w = 1.0 - np.asarray(u, dtype=float)
        with np.errstate(divide="ignore"):
            if a == 0.5:
                out = -0.25 * np.log(w)
            else:
                out = a * a * (1.0 - np.power(w, 2 * a - 1)) / (2 * a - 1)
        out = np.where(np.isnan(out), np.inf, out)
        return _scalar_or_array(out, np.ndim(u) == 0)


class Gini(Distortion):
    """Gini distortion ``h(u) = (1 - a) u + a u^2``, ``0 < a <= 1``."""

    kind = "gini"

    def __init__(self, a: float):
        if not 0.0 < a <= 1.0:
            raise DistortionError("gini requires 0 < a <= 1")
        self.a = float(a)

    @property
    def params(self) -> dict:
        return {"a": self.a}

    def value(self, u):
        u = np.asarray(u, dtype=float) if np.ndim(u) else float(u)
        return _scalar_or_array((1.0 - self.a) * u + self.a * u * u, np.ndim(u) == 0)

    def left_derivative(self, u):
        u = np.asarray(u, dtype=float) if np.ndim(u) else float(u)
        return _scalar_or_array(1.0 - self.a + 2.0 * self.a * u, np.ndim(u) == 0)

    def inverse(self, beta):
        a = self.a
        b = 1.0 - a
        beta = np.asarray(beta, dtype=float) if np.ndim(beta) else float(beta)
        # stable root of a u^2 + b u - beta = 0
        out = 2.0 * beta / (b + np.sqrt(b * b + 4.0 * a * beta))
        return _scalar_or_array(out, np.ndim(beta) == 0)

    def sq_slope_cumulative(self, u):
        a = self.a
        u = np.asarray(u, dtype=float) if np.ndim(u) else float(u)
        b = 1.0 - a
        # expanded form of ((b + 2au)^3 - b^3) / (6a), exact at a -> 0
        out = b * b * u + 2.0 * a * b * u * u + (4.0 / 3.0) * a * a * u**3
        return _scalar_or_array(out, np.ndim(u) == 0)


class Custom(Distortion):
    """User-supplied distortion: a value callable and a left-derivative callable."""

    kind = "custom"

    def __init__(
        self,
        func: Callable[[float], float],
        derivative: Callable[[float], float],
        kinks: Sequence[float] = (),
        right_derivative: Callable[[float], float] | None = None,
        name: str = "custom",
    ):
        self._f = func
        self._df = derivative
        self._dfr = right_derivative
        self.kinks = tuple(sorted(float(k) for k in kinks))
        self.name = name

    def value(self, u):
        if np.ndim(u):
            return np.array([self._f(float(v)) for v in np.ravel(u)]).reshape(np.shape(u))
        return float(self._f(float(u)))

    def left_derivative(self, u):
        if np.ndim(u):
            return np.array([self._df(float(v)) for v in np.ravel(u)]).reshape(np.shape(u))
        return float(self._df(float(u)))

    def right_derivative(self, u):
        if self._dfr is None:
            return self.left_derivative(u)
        if np.ndim(u):
            return np.array([self._dfr(float(v)) for v in np.ravel(u)]).reshape(np.shape(u))
        return float(self._dfr(float(u)))

    def spec(self) -> str:
        return self.name


class Conditional(Distortion):
    """Conditional distortion ``h_s(u) = (h(u) - h(s))_+ / (1 - h(s))``."""

    kind = "conditional"

    def __init__(self, base: Distortion, s: float):
        if not 0.0 <= s < 1.0:
            raise DistortionError("threshold s must lie in [0, 1)")
        self.base = base
        self.s = float(s)
        self._hs = float(base.value(self.s))
        if self._hs >= 1.0:
            raise DistortionError("h(s) = 1, conditional distortion undefined")
        self._scale = 1.0 / (1.0 - self._hs)
        self._ks = float(base.sq_slope_cumulative(self.s))
        self.kinks = tuple(sorted({self.s, *base.kinks}))

    @property
    def params(self) -> dict:
        return {"s": self.s}

    def value(self, u):
        out = np.clip((np.asarray(self.base.value(u)) - self._hs) * self._scale, 0.0, None)
        out = np.where(np.asarray(u) <= self.s, 0.0, out)
        out = np.where(np.asarray(u) >= 1.0, 1.0, out)
        return _scalar_or_array(out, np.ndim(u) == 0)

    def left_derivative(self, u):
        out = np.where(np.asarray(u) <= self.s, 0.0, np.asarray(self.base.left_derivative(u)) * self._scale)
        return _scalar_or_array(out, np.ndim(u) == 0)

    def right_derivative(self, u):
        out = np.where(np.asarray(u) < self.s, 0.0, np.asarray(self.base.right_derivative(u)) * self._scale)
        return _scalar_or_array(out, np.ndim(u) == 0)

    def sq_slope_cumulative(self, u):
        k = np.asarray(self.base.sq_slope_cumulative(np.maximum(u, self.s))) - self._ks
        return _scalar_or_array(k * self._scale**2, np.ndim(u) == 0)

    def spec(self) -> str:
        return f"conditional({self.base.spec()},s={self.s:.12g})"


# ----------------------------------------------------------------------------------------
# Construction and parsing
# ----------------------------------------------------------------------------------------

FAMILIES = ("risk-neutral", "cvar", "mean-cvar", "dev-median", "wang", "prop-hazards", "gini", "pl")
_ALIASES = {"piecewise-linear": "pl", "neutral": "risk-neutral", "mean": "risk-neutral", "lam": "lambda"}


def _get(params: Mapping, name: str, family: str) -> float:
    if name not in params:
        raise DistortionError(f"{family} requires parameter {name!r}")
    try:
        return float(params[name])
    except (TypeError, ValueError):
        raise DistortionError(f"{family}: parameter {name!r} must be a number") from None


def make_builtin(family: str, params: Mapping | None = None, **kwargs) -> Distortion:
    """Build one of the convex families in the standard table.

    Parameter names: ``cvar(alpha)``, ``mean-cvar(lambda, alpha)``,
    ``dev-median(a)``, ``wang(lambda)``, ``prop-hazards(a)``, ``gini(a)``,
    ``pl(knots, slopes)``; ``risk-neutral`` takes none. ``lam`` is accepted
    for ``lambda``.

    Raises:
        DistortionError: unknown family, parameter out of its domain, or a
            result that is not a square-integrable convex distortion.
    """
    p = dict(params or {})
    p.update(kwargs)
    p = {_ALIASES.get(k, k): v for k, v in p.items()}
    fam = _ALIASES.get(family.strip().lower(), family.strip().lower())
    known = {
        "risk-neutral": set(),
        "cvar": {"alpha"},
        "mean-cvar": {"lambda", "alpha"},
        "dev-median": {"a"},
        "wang": {"lambda"},
        "prop-hazards": {"a"},
        "gini": {"a"},
        "pl": {"knots", "slopes"},
    }
    if fam not in known:
        raise DistortionError(f"unknown distortion family {family!r}")
    extra = set(p) - known[fam]
    if extra:
        raise DistortionError(f"{fam}: unexpected parameter(s) {sorted(extra)}")

    if fam == "risk-neutral":
        return PiecewiseLinear([0.0, 1.0], [1.0], kind="risk-neutral", params={})
    if fam == "cvar":
        alpha = _get(p, "alpha", fam)
        if not 0.0 <= alpha < 1.0:
            raise DistortionError("cvar requires alpha in [0, 1)")
        return _mean_cvar(0.0, alpha, kind="cvar", params={"alpha": alpha})
    if fam == "mean-cvar":
        lam = _get(p, "lambda", fam)
        alpha = _get(p, "alpha", fam)
        if not 0.0 <= lam <= 1.0:
            raise DistortionError("mean-cvar requires lambda in [0, 1]")
        if not 0.0 <= alpha < 1.0:
            raise DistortionError("mean-cvar requires alpha in [0, 1)")
        return _mean_cvar(lam, alpha, kind="mean-cvar", params={"lambda": lam, "alpha": alpha})
    if fam == "dev-median":
        a = _get(p, "a", fam)
        if not 0.0 <= a <= 1.0:
            raise DistortionError("dev-median requires a in [0, 1]")
        return PiecewiseLinear([0.0, 0.5, 1.0], [1.0 - a, 1.0 + a], kind="dev-median", params={"a": a})
    if fam == "wang":
        lam = _get(p, "lambda", fam)
        if not lam >= 0.0:
            raise DistortionError("wang requires lambda >= 0")
        return Wang(lam)
    if fam == "prop-hazards":
        a = _get(p, "a", fam)
        if not 0.0 < a <= 1.0:
            raise DistortionError("prop-hazards requires a in (0, 1]")
        if a <= 0.5:
            raise DistortionError(f"prop-hazards(a={a:g}) is not in H2: int h'^2 diverges for a <= 1/2")
        return PropHazards(a)
    if fam == "gini":
        a = _get(p, "a", fam)
        if not 0.0 < a <= 1.0:
            raise DistortionError("gini requires a in (0, 1]")
        return Gini(a)

    # pl
    if "knots" not in p or "slopes" not in p:
        raise DistortionError("pl requires knots=[...] and slopes=[...]")
    h = PiecewiseLinear(p["knots"], p["slopes"], kind="pl")
    if np.any(np.diff(h.slopes) < 0):
        raise DistortionError("pl slopes must be non-decreasing (convexity)")
    return h


def _mean_cvar(lam: float, alpha: float, kind: str, params: dict) -> PiecewiseLinear:
    upper = lam + (1.0 - lam) / (1.0 - alpha)
    if alpha == 0.0:
        return PiecewiseLinear([0.0, 1.0], [1.0], kind=kind, params=params)
    return PiecewiseLinear([0.0, alpha, 1.0], [lam, upper], kind=kind, params=params)


_SPEC_RE = re.compile(r"^\s*([A-Za-z][A-Za-z0-9_-]*)\s*(?:\((.*)\))?\s*$", re.S)


def _split_args(body: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in body:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur))
    return parts


def parse_spec(text: str) -> tuple[str, dict]:
    """Split ``family(name=value,...)`` into the family tag and a parameter dict.

    >>> parse_spec("mean-cvar(lambda=0.5,alpha=0.8)")
    ('mean-cvar', {'lambda': 0.5, 'alpha': 0.8})
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise DistortionError(f"malformed distortion spec {text!r}")
    family, body = m.group(1).lower(), m.group(2)
    params: dict = {}
    for item in _split_args(body or ""):
        if "=" not in item:
            raise DistortionError(f"malformed parameter {item.strip()!r} in {text!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            raise DistortionError(f"cannot parse value {raw!r} for {key!r}") from None
        if isinstance(val, list):
            val = [float(v) for v in val]
        elif isinstance(val, (int, float)) and not isinstance(val, bool):
            val = float(val)
        else:
            raise DistortionError(f"parameter {key!r} must be a number or a list of numbers")
        params[_ALIASES.get(key, key)] = val
    return _ALIASES.get(family, family), params


def parse_distortion(text: str) -> Distortion:
    """Parse the textual grammar, e.g. ``pl(knots=[0,0.5,1],slopes=[0.6,1.4])``."""
    family, params = parse_spec(text)
    return make_builtin(family, params)


# ----------------------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------------------


def evaluate_distortion(h: Distortion, u: float) -> tuple[float, float, float]:
    """Return ``(h(u), h'_-(u), h'_+(u))``.

    At ``u = 0`` the left derivative is defined as the right one. The right
    derivative at ``u = 1`` may be ``inf``.
    """
    _check_unit(u)
    u = float(u)
    value = float(h.value(u))
    if u == 0.0:
        right = float(h.right_derivative(0.0))
        return value, right, right
    left = float(h.left_derivative(u))
    if u == 1.0 and not isinstance(h, PiecewiseLinear):
        right = math.inf if not math.isfinite(left) else float(h.right_derivative(u))
    else:
        right = float(h.right_derivative(u))
    return value, left, max(left, right)


def inverse_at(h: Distortion, beta: float) -> float:
    """``s* = h^{-1}(beta)``: the left edge of the level set, strictly inside (0, 1)."""
    if not 0.0 < beta < 1.0:
        raise DistortionError(f"beta must lie in (0, 1), got {beta!r}")
    return float(h.inverse(float(beta)))


def squared_slope_integral(h: Distortion, a: float, b: float) -> float:
    """``int_a^b h'(u)^2 du`` for ``0 <= a <= b <= 1``."""
    _check_unit(a, "a")
    _check_unit(b, "b")
    if a > b:
        raise DistortionError("need a <= b")
    if a == b:
        return 0.0
    val = float(h.sq_slope_cumulative(b)) - float(h.sq_slope_cumulative(a))
    if not math.isfinite(val):
        raise DivergentIntegralError(f"int h'^2 diverges on [{a:g}, {b:g}] for {h.spec()}")
    return val


@dataclass(frozen=True)
class ValidationReport:
    h0: float
    h1: float
    monotone: bool
    convexity_violations: int
    max_convexity_violation: float
    slope_violations: int
    sq_slope_integral: float
    sq_slope_finite: bool
    issues: tuple[str, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return not self.issues


def validate_distortion(h: Distortion, n: int = 10_000, tol: float = 1e-10) -> ValidationReport:
    """Check boundary values, monotonicity, convexity and ``int h'^2 < inf``.

    Never raises on a bad distortion; problems are listed in ``issues``.
    """
    u = np.linspace(0.0, 1.0, n + 1)
    hv = np.asarray(h.value(u), dtype=float)
    h0, h1 = float(hv[0]), float(hv[-1])
    issues = []
    if abs(h0) > tol:
        issues.append(f"h(0) = {h0:.3g} != 0")
    if abs(h1 - 1.0) > tol:
        issues.append(f"h(1) = {h1:.12g} != 1")
    monotone = bool(np.all(np.diff(hv) >= -tol))
    if not monotone:
        issues.append("h is not non-decreasing")
    second = hv[2:] - 2.0 * hv[1:-1] + hv[:-2]
    bad = second < -tol
    n_conv = int(bad.sum())
    max_conv = float(-second.min()) if second.size and second.min() < 0 else 0.0
    if n_conv:
        issues.append(f"convexity violated at {n_conv} grid points (max defect {max_conv:.3g})")
    with np.errstate(invalid="ignore"):
        d = np.asarray(h.left_derivative(u[1:-1]), dtype=float)
    finite = d[np.isfinite(d)]
    n_slope = int(np.sum(np.diff(finite) < -tol * np.maximum(1.0, np.abs(finite[1:]))))
    if n_slope:
        issues.append(f"left derivative decreases at {n_slope} grid points")
    k1 = float(h.sq_slope_cumulative(1.0))
    finite_k = math.isfinite(k1)
    if not finite_k:
        issues.append("int_0^1 h'(u)^2 du is infinite (not in H2)")
    return ValidationReport(
        h0=h0,
        h1=h1,
        monotone=monotone,
        convexity_violations=n_conv,
        max_convexity_violation=max_conv,
        slope_violations=n_slope,
        sq_slope_integral=k1,
        sq_slope_finite=finite_k,
        issues=tuple(issues),
    )


def piecewise_linearize(h: Distortion, n: int, check_points: int = 20_000) -> tuple[PiecewiseLinear, float]:
    """Secant interpolation of ``h`` on ``n`` equal segments.

    Returns the piecewise linear distortion and its sup-norm distance to ``h``
    measured on a dense grid (plus the knots of ``h``).
    """
    if n < 2:
        raise DistortionError("piecewise_linearize needs n >= 2")
    knots = np.linspace(0.0, 1.0, n + 1)
    vals = np.asarray(h.value(knots), dtype=float)
    vals[0], vals[-1] = 0.0, 1.0
    slopes = np.diff(vals) / np.diff(knots)
    # secants of a convex function are non-decreasing; float noise can break ties
    slopes = np.maximum.accumulate(np.maximum(slopes, 0.0))
    slopes = slopes / float(np.sum(slopes * np.diff(knots)))
    pl = PiecewiseLinear(knots, slopes, kind="pl")
    grid = np.union1d(np.linspace(0.0, 1.0, check_points + 1), np.asarray(h.kinks, dtype=float))
    err = float(np.max(np.abs(np.asarray(pl.value(grid)) - np.asarray(h.value(grid)))))
    return pl, err
