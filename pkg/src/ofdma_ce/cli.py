"""Command-line harness: single solves, parameter sweeps, oracle checks.

Commands::

    ofdma-ce solve        --scenario s.yaml --mode partial --scheme all --out r.json
    ofdma-ce sweep        --param pth --from 0.1 --to 5 --steps 20 --out pth.csv
    ofdma-ce verify       --scenario small.json
    ofdma-ce gen-scenario --seed 3 --users 2 --out s.json

Exit codes: 0 success, 1 configuration error, 2 infeasible instance,
3 no convergence, 4 verification gap above tolerance.

Sweep CSV columns (header row always present, floats with 12 significant
digits): ``param, value, scheme, weighted_sum_ce, sum_rate, sum_power,
converged, iters, status``. ``status`` is ``ok``, ``infeasible`` or
``not-converged``; infeasible rows carry ``nan`` metrics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .baselines import solve_cb_max, solve_ec_min, solve_local_only, solve_offloading_only
from .config import ConfigParseError, RunConfig, default_config, dump_scenario, load_config, loads_config
from .model import InfeasibleInstance, InstanceTooLarge, Scenario, ScenarioError
from .oracle import GridSpec, brute_force_binary, brute_force_partial, kkt_residuals
from .solver_binary import solve_binary
from .solver_partial import PartialSolution, SolverConfig, feasibility_precheck, solve_partial

log = logging.getLogger(__name__)

__all__ = ["SCHEME_NAMES", "run_scheme", "sweep", "sweep_pth", "sweep_rth", "rate_boundary",
           "convergence_trace", "solution_record", "main"]

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED, EXIT_GAP = 0, 1, 2, 3, 4

SCHEME_NAMES = ("proposed-partial", "proposed-binary", "offload-only", "local-only", "cb-max", "ec-min")
_FLAG_TO_SCHEME = {"offload": "offload-only", "local": "local-only", "cbmax": "cb-max", "ecmin": "ec-min"}
SWEEP_COLUMNS = ("param", "value", "scheme", "weighted_sum_ce", "sum_rate", "sum_power",
                 "converged", "iters", "status")
TRACE_COLUMNS = ("outer_iter", "inner_iter", "weighted_sum_ce", "lemma1_residual", "constraint_violations")
_SWEEP_FIELD = {"pth": "max_power", "rth": "min_bits_rate"}


def run_scheme(name: str, s: Scenario, cfg: SolverConfig = SolverConfig(),
               baseline_mode: str = "partial") -> PartialSolution:
    """Run one of :data:`SCHEME_NAMES` on ``s``."""
    if name == "proposed-partial":
        return solve_partial(s, cfg)
    if name == "proposed-binary":
        return solve_binary(s, cfg)
    fn = {"offload-only": solve_offloading_only, "local-only": solve_local_only,
          "cb-max": solve_cb_max, "ec-min": solve_ec_min}.get(name)
    if fn is None:
        raise ValueError(f"unknown scheme {name!r}")
    return fn(s, cfg, mode=baseline_mode)


def _schemes_for(flag: str, mode: str) -> tuple[str, ...]:
    if flag == "all":
        return SCHEME_NAMES
    if flag == "proposed":
        return (f"proposed-{mode}",)
    return (_FLAG_TO_SCHEME[flag],)


def _finite(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_finite(v) for v in x]
    return x


def solution_record(sol: PartialSolution) -> dict:
    a = sol.allocation
    return _finite({
        "scheme": sol.scheme,
        "converged": bool(sol.converged),
        "outer_iters": int(sol.outer_iters),
        "inner_iters": int(sol.inner_iters),
        "report": sol.report.as_dict(),
        "allocation": {
            "assignment": a.assignment.tolist(),
            "power": a.power.tolist(),
            "cpu_freq": a.cpu_freq.tolist(),
            "mode": None if a.mode is None else a.mode.tolist(),
        },
        "duals": sol.duals.as_dict(),
        "trace": [r.as_dict() for r in sol.trace],
    })


# -- sweeps -------------------------------------------------------------------

def _sweep_point(job) -> dict:
    s, cfg, param, value, scheme, baseline_mode = job
    point = s.with_users(**{_SWEEP_FIELD[param]: value})
    row = {"param": param, "value": value, "scheme": scheme}
    try:
        sol = run_scheme(scheme, point, cfg, baseline_mode)
    except InfeasibleInstance:
        return {**row, "weighted_sum_ce": math.nan, "sum_rate": math.nan, "sum_power": math.nan,
                "converged": False, "iters": 0, "status": "infeasible"}
    r = sol.report
    status = "ok" if sol.converged else ("infeasible" if not r.all_feasible else "not-converged")
    return {**row, "weighted_sum_ce": r.weighted_sum_ce, "sum_rate": float(np.sum(r.per_user_rate)),
            "sum_power": float(np.sum(r.per_user_power)), "converged": bool(sol.converged),
            "iters": int(sol.outer_iters), "status": status}


def sweep(cfg: RunConfig, param: str, values: Sequence[float], schemes: Sequence[str] = SCHEME_NAMES,
          baseline_mode: str = "partial", workers: int = 1) -> list[dict]:
    """Solve every scheme at every sweep value on one channel realisation.

    Rows come back in (value, scheme) order whatever the worker count.
    """
    if param not in _SWEEP_FIELD:
        raise ValueError(f"param must be one of {sorted(_SWEEP_FIELD)}")
    jobs = [(cfg.scenario, cfg.solver, param, float(v), sc, baseline_mode) for v in values for sc in schemes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


def _grid(lo: float, hi: float, steps: int) -> np.ndarray:
    if not (lo > 0 and hi > 0):
        raise ValueError("sweep bounds must be > 0")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    return np.linspace(lo, hi, steps)


def sweep_pth(cfg: RunConfig, lo: float, hi: float, steps: int, **kw) -> list[dict]:
    """Sweep the power cap P^th of every user jointly."""
    return sweep(cfg, "pth", _grid(lo, hi, steps), **kw)


def sweep_rth(cfg: RunConfig, lo: float, hi: Optional[float], steps: int, **kw) -> list[dict]:
    """Sweep the rate floor R^th of every user jointly; ``hi=None`` runs up to :func:`rate_boundary`."""
    if hi is None:
        hi = rate_boundary(cfg)
    return sweep(cfg, "rth", _grid(lo, hi, steps), **kw)


def rate_boundary(cfg: RunConfig, rel_tol: float = 1e-3) -> float:
    """Largest common rate floor for which the proposed solver still finds a feasible allocation.

    Bisection between a feasible floor of zero and the optimistic capacity
    bound of the weakest user.
    """
    s, solver = cfg.scenario, cfg.solver

    def feasible(r):
        try:
            return solve_partial(s.with_users(min_bits_rate=r), solver).report.all_feasible
        except InfeasibleInstance:
            return False

    hi = 1.0
    while True:
        try:
            feasibility_precheck(s.with_users(min_bits_rate=hi))
        except InfeasibleInstance:
            break
        hi *= 2.0
    lo = 0.0  # zero floor: the all-idle allocation is feasible
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def convergence_trace(cfg: RunConfig, mode: str = "partial") -> list[dict]:
    """Per-outer-iteration objective and residuals of the proposed solver."""
    sol = solve_binary(cfg.scenario, cfg.solver) if mode == "binary" else solve_partial(cfg.scenario, cfg.solver)
    return [{k: getattr(r, k) for k in TRACE_COLUMNS} for r in sol.trace]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


# -- commands -----------------------------------------------------------------

def _load(args) -> RunConfig:
    if args.scenario:
        return load_config(args.scenario, seed=args.seed)
    return default_config(0 if args.seed is None else args.seed)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_solve(args) -> int:
    cfg = _load(args)
    names = _schemes_for(args.scheme, args.mode)
    results = {}
    infeasible = stalled = False
    for name in names:
        try:
            sol = run_scheme(name, cfg.scenario, cfg.solver, args.baseline_mode)
        except InfeasibleInstance as e:
            results[name] = {"scheme": name, "error": "infeasible", "message": str(e)}
            infeasible = True
            continue
        results[name] = solution_record(sol)
        infeasible |= not sol.report.all_feasible
        stalled |= not sol.converged
    code = EXIT_INFEASIBLE if infeasible else EXIT_NOT_CONVERGED if stalled else EXIT_OK
    doc = {"seed": cfg.seed, "mode": args.mode, "results": results}
    _emit(json.dumps(doc, indent=2) + "\n", args.out)
    if args.trace_out:
        Path(args.trace_out).write_text(to_csv(convergence_trace(cfg, args.mode), TRACE_COLUMNS))
    return code


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    schemes = _schemes_for(args.scheme, args.mode)
    kw = dict(schemes=schemes, baseline_mode=args.baseline_mode, workers=args.workers)
    if args.param == "pth":
        rows = sweep_pth(cfg, args.lo, args.hi, args.steps, **kw)
    else:
        rows = sweep_rth(cfg, args.lo, args.hi, args.steps, **kw)
    _emit(to_csv(rows, SWEEP_COLUMNS), args.out)
    return EXIT_OK


def _cmd_verify(args) -> int:
    cfg = _load(args)
    s = cfg.scenario
    grid = GridSpec(points=args.grid)
    binary = args.mode == "binary"
    oracle = (brute_force_binary if binary else brute_force_partial)(s, grid)
    try:
        sol = solve_binary(s, cfg.solver) if binary else solve_partial(s, cfg.solver)
    except InfeasibleInstance as e:
        print(f"solver: infeasible ({e})")
        print(f"oracle: {'infeasible' if not oracle.feasible else f'{oracle.ce:.12g}'}")
        return EXIT_INFEASIBLE if not oracle.feasible else EXIT_GAP
    if not oracle.feasible:
        print(f"solver: {sol.weighted_sum_ce:.12g} feasible={sol.report.all_feasible}")
        print("oracle: infeasible")
        return EXIT_INFEASIBLE if not sol.report.all_feasible else EXIT_GAP
    gap = (sol.weighted_sum_ce - oracle.ce) / abs(oracle.ce)
    kkt = kkt_residuals(s, sol)
    print(f"solver: {sol.weighted_sum_ce:.12g}")
    print(f"oracle: {oracle.ce:.12g}")
    print(f"gap: {gap:+.3e} (tolerance {args.tol:g})")
    print(f"kkt stationarity: {kkt.stationarity:.3e}")
    return EXIT_OK if abs(gap) <= args.tol else EXIT_GAP


def _cmd_gen(args) -> int:
    seed = 0 if args.seed is None else args.seed
    text = f"seed: {seed}\nusers: {{count: {args.users}}}\nsystem: {{num_subchannels: {args.subchannels}}}\n"
    cfg = loads_config(text, "<gen-scenario>")
    fmt = args.format or ("yaml" if args.out and args.out.endswith((".yaml", ".yml")) else "json")
    _emit(dump_scenario(cfg, fmt), args.out)
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ofdma-ce", description="Weighted-sum computation-efficiency solver")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, schemes=True):
        sp.add_argument("--scenario", help="YAML/JSON scenario file (defaults if omitted)")
        sp.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
        sp.add_argument("--mode", choices=("partial", "binary"), default="partial")
        if schemes:
            sp.add_argument("--scheme", choices=("proposed", "offload", "local", "cbmax", "ecmin", "all"))
            sp.add_argument("--baseline-mode", choices=("partial", "binary"), default="partial")
        sp.add_argument("--out", help="output file (stdout if omitted)")

    sp = sub.add_parser("solve", help="solve one scenario, JSON output")
    common(sp)
    sp.add_argument("--trace-out", help="also write the convergence trace as CSV")
    sp.set_defaults(func=_cmd_solve, scheme="proposed")

    sp = sub.add_parser("sweep", help="sweep P^th or R^th, CSV output")
    common(sp)
    sp.add_argument("--param", choices=("pth", "rth"), required=True)
    sp.add_argument("--from", dest="lo", type=float, required=True)
    sp.add_argument("--to", dest="hi", type=_upper_bound, required=True,
                    help="upper bound, or 'boundary' (rth only) for the feasibility limit")
    sp.add_argument("--steps", type=int, default=20)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=_cmd_sweep, scheme="all")

    sp = sub.add_parser("verify", help="compare the solver against the brute-force oracle")
    common(sp, schemes=False)
    sp.add_argument("--grid", type=int, default=200)
    sp.add_argument("--tol", type=float, default=0.01)
    sp.set_defaults(func=_cmd_verify)

    sp = sub.add_parser("gen-scenario", help="write a scenario file with explicit gains")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--users", type=int, default=2)
    sp.add_argument("--subchannels", type=int, default=4)
    sp.add_argument("--format", choices=("json", "yaml"))
    sp.add_argument("--out")
    sp.set_defaults(func=_cmd_gen)
    return p


def _upper_bound(text: str):
    return None if text == "boundary" else float(text)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "param", None) == "pth" and args.hi is None:
        print("error: --to boundary only applies to --param rth", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigParseError, ScenarioError, InstanceTooLarge, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleInstance as e:
        print(f"infeasible: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
