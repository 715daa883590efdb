"""``dnews`` command line.

Exit status: 0 on success, 2 on bad arguments or inputs, 3 when a
verification check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from decimal import Decimal
from typing import Sequence

from .core import DemandMoments
from .distortion import DistortionError, make_builtin, parse_distortion, parse_spec
from .multiproduct import MultiProductError, load_scenario, solve_multi, verify_additivity
from .oracle import GridSpec, OracleError, outer_min_grid, random_feasible_search
from .risk import Market, RiskError
from .solver import TIE_POLICIES, SolverError, solve_single
from .worstcase import WorstCaseError, literal_constant_diagnostic, write_csv

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 2, 3
SWEEP_COLUMNS = ("family", "params", "beta", "cv", "mu", "sigma", "regime", "s_star", "t_star", "x_star", "value")


class UsageError(Exception):
    pass


def _round(obj):
    """Round every float to 12 significant digits, recursively."""
    if isinstance(obj, float):
        return float(f"{obj:.12g}") if math.isfinite(obj) else obj
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def _dump(obj, out) -> None:
    out.write(json.dumps(_round(obj), indent=2) + "\n")


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def _floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from None
    if not vals:
        raise UsageError("empty list")
    return vals


def parse_range(text: str) -> list[float]:
    """``start:stop:step`` with ``stop`` included when it falls on the grid.

    >>> parse_range("0:0.2:0.1")
    [0.0, 0.1, 0.2]
    """
    try:
        start, stop, step = (Decimal(v) for v in text.split(":"))
    except Exception:
        raise UsageError(f"range must be start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError(f"range {text!r} is empty or has a non-positive step")
    count = int((stop - start) / step) + 1
    return [float(start + k * step) for k in range(count)]


def _common(p: argparse.ArgumentParser, market: bool = True, moments: bool = True) -> None:
    p.add_argument("--distortion", required=True, help='e.g. "cvar(alpha=0.5)"')
    if moments:
        p.add_argument("--mu", type=float, required=True)
        g = p.add_mutually_exclusive_group(required=True)
        g.add_argument("--sigma", type=float)
        g.add_argument("--cv", type=float)
    if market:
        p.add_argument("--price", type=float, required=True)
        p.add_argument("--cost", type=float, required=True)
        p.add_argument("--salvage", type=float, default=0.0)
    p.add_argument("--tie", choices=TIE_POLICIES, default="mid")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnews", description="Distribution-free newsvendor under distortion risk.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal order and worst-case value as JSON")
    _common(p)

    p = sub.add_parser("sweep", help="CSV of solutions over a parameter grid")
    p.add_argument("--distortion", required=True, help='family with fixed params, e.g. "mean-cvar(lambda=0.5)"')
    p.add_argument("--vary", required=True, help="name=start:stop:step")
    p.add_argument("--beta", required=True, help="comma-separated cost-to-price ratios")
    p.add_argument("--cv", required=True, help="comma-separated coefficients of variation")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--price", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--tie", choices=TIE_POLICIES, default="mid")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("verify", help="compare the closed-form rule with the grid oracle")
    _common(p)
    p.add_argument("--grid", type=int, default=1500)
    p.add_argument("--trials", type=int, default=10_000)

    p = sub.add_parser("worstcase", help="quantile table of the worst-case demand law")
    _common(p)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--out", default="-")
    p.add_argument("--diagnose", action="store_true", help="also print the shift-constant diagnostic as JSON")

    p = sub.add_parser("multi", help="solve a multi-product scenario file")
    p.add_argument("--scenario", required=True)
    p.add_argument("--tie", choices=TIE_POLICIES, default="mid")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--mc", type=int, default=0, help="Monte Carlo draws for the additivity check (0 skips it)")
    return parser


def _inputs(args):
    h = parse_distortion(args.distortion)
    m = Market(args.price, args.cost, args.salvage)
    sigma = args.sigma if args.sigma is not None else args.cv * args.mu
    return h, m, DemandMoments(args.mu, sigma)


def _open_out(path: str):
    if path == "-":
        return sys.stdout
    try:
        return open(path, "w", encoding="utf-8", newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path!r}: {exc.strerror}") from None


def cmd_solve(args, out) -> int:
    h, m, dm = _inputs(args)
    rep = solve_single(h, m, dm, args.tie, with_worst_case=False)
    _dump({"distortion": h.spec(), **rep.as_dict()}, out)
    return EXIT_OK


def _sweep_cell(cell):
    family, params, beta, cv, mu, price, tie = cell
    h = make_builtin(family, params)
    dm = DemandMoments.from_cv(mu, cv)
    rep = solve_single(h, Market(price, beta * price), dm, tie, with_worst_case=False)
    label = ";".join(f"{k}={_fmt(v)}" for k, v in params.items())
    return (family, label, beta, cv, mu, dm.sigma, str(rep.regime), rep.s_star, rep.t_star, rep.x_star, rep.value)


def cmd_sweep(args, out) -> int:
    family, fixed = parse_spec(args.distortion)
    if "=" not in args.vary:
        raise UsageError("--vary must look like name=start:stop:step")
    name, rng = (s.strip() for s in args.vary.split("=", 1))
    values = parse_range(rng)
    betas, cvs = sorted(_floats(args.beta)), sorted(_floats(args.cv))
    # fail fast on a bad family or parameter name
    make_builtin(family, {**fixed, name: values[0]})
    cells = [
        (family, {**fixed, name: v}, b, r, args.mu, args.price, args.tie)
        for v in values
        for b in betas
        for r in cvs
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, cells, chunksize=8))
    else:
        rows = [_sweep_cell(c) for c in cells]
    fh = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_verify(args, out) -> int:
    h, m, dm = _inputs(args)
    if args.grid < 2 or args.trials < 1:
        raise UsageError("--grid must be >= 2 and --trials >= 1")
    rep = solve_single(h, m, dm, args.tie, with_worst_case=False)
    orc = outer_min_grid(h, m, dm, GridSpec(args.grid, args.grid, args.grid))
    found, evaluated = random_feasible_search(h, rep.x_star, m, dm, args.trials, args.seed)
    lo, hi = rep.tie_interval
    dx = max(lo - orc.x_hat, orc.x_hat - hi, 0.0)
    dv = abs(rep.value - orc.value_hat)
    excess = found - rep.value
    slack = 1e-7 * m.effective_price * dm.mu
    checks = {
        "order": dx <= 2.0 * orc.x_pitch,
        "value": dv <= orc.gap_bound,
        "extremality": excess <= slack,
    }
    ok = all(checks.values())
    _dump(
        {
            "distortion": h.spec(),
            "xStar": rep.x_star,
            "xHat": orc.x_hat,
            "deltaX": dx,
            "xPitch": orc.x_pitch,
            "value": rep.value,
            "valueHat": orc.value_hat,
            "deltaValue": dv,
            "gapBound": orc.gap_bound,
            "randomSearchMax": found,
            "randomSearchLaws": evaluated,
            "checks": checks,
        },
        out,
    )
    out.write(("PASS" if ok else "FAIL") + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_worstcase(args, out) -> int:
    h, m, dm = _inputs(args)
    if args.points < 1:
        raise UsageError("--points must be >= 1")
    rep = solve_single(h, m, dm, args.tie)
    fh = _open_out(args.out)
    try:
        write_csv(rep.worst_case, args.points, fh)
    finally:
        if fh is not sys.stdout:
            fh.close()
    if args.diagnose and dm.sigma > 0 and rep.delta > 0:
        diag = literal_constant_diagnostic(h, m.beta, dm, rep.s_star, rep.t_star)
        _dump(diag, sys.stderr if args.out == "-" else out)
    return EXIT_OK


def cmd_multi(args, out) -> int:
    h, products = load_scenario(args.scenario)
    rep = solve_multi(h, products, args.tie, with_worst_case=args.mc > 0)
    payload = {"distortion": h.spec(), **rep.as_dict()}
    status = EXIT_OK
    if args.mc > 0:
        diag = verify_additivity(h, products, args.mc, args.seed, tie_policy=args.tie)
        payload["additivity"] = diag.as_dict()
        status = EXIT_OK if diag.passed else EXIT_VERIFY
    _dump(payload, out)
    return status


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify, "worstcase": cmd_worstcase, "multi": cmd_multi}


def main(argv: Sequence[str] | None = None, out: io.TextIOBase | None = None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args, out)
    except (UsageError, DistortionError, SolverError, RiskError, WorstCaseError, MultiProductError, OracleError, OSError) as exc:
        print(f"dnews: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
