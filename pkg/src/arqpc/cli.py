"""Command-line front end: single solves, phi queries, replays, eps sweeps.

Exit codes: 0 for a certified termination, 2 when a run hits its iteration
budget (or a sweep contains such a run), 3 for an unknown problem name.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .errors import ArqpcError, UnknownProblemError
from .optimality import phi_w
from .problems import PROBLEM_NAMES, get_problem
from .solver import AlgoParams, run
from .trace_io import write_certificate_json, write_trace_csv
from .worstcase import build_cor64, build_thm61, build_thm63, replay

EXIT_OK = 0
EXIT_BUDGET = 2
EXIT_UNKNOWN = 3


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        import tomllib  # py >= 3.11
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _params_from_args(args, q: int) -> AlgoParams:
    eps_list = args.eps if isinstance(args.eps, list) else [args.eps]
    eps = tuple(eps_list) if len(eps_list) == q else (float(eps_list[0]),) * q
    return AlgoParams(
        q=q,
        eps=eps,
        theta=args.theta,
        sigma0=args.sigma0,
        sigma_min=args.sigma_min,
        eta1=args.eta1,
        eta2=args.eta2,
        gamma1=args.gamma1,
        gamma2=args.gamma2,
        gamma3=args.gamma3,
        max_iters=args.max_iters,
        seed=args.seed,
        delta_policy=args.delta_policy,
    )


def _add_common(sp: argparse.ArgumentParser):
    sp.add_argument("--p", type=int, default=2, help="model degree")
    sp.add_argument("--q", type=int, default=1, help="optimality order")
    sp.add_argument("--eps", type=_eps_list, default=[1e-3],
                    help="tolerance (single value or comma list)")
    sp.add_argument("--theta", type=float, default=0.5)
    sp.add_argument("--sigma0", type=float, default=1.0)
    sp.add_argument("--sigma-min", dest="sigma_min", type=float, default=1e-8)
    sp.add_argument("--eta1", type=float, default=0.05)
    sp.add_argument("--eta2", type=float, default=0.9)
    sp.add_argument("--gamma1", type=float, default=0.5)
    sp.add_argument("--gamma2", type=float, default=2.0)
    sp.add_argument("--gamma3", type=float, default=4.0)
    sp.add_argument("--delta-policy", dest="delta_policy",
                    choices=("unit", "scaled", "auto"), default="auto")
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=10**6)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
    sp.add_argument("--config", type=str, default=None, help="TOML defaults (flags win)")


def _eps_list(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t]


def _apply_config(args, argv: list[str]):
    """TOML file supplies defaults; explicitly passed flags override them."""
    cfg = _load_config(args.config)
    if not cfg:
        return args
    passed = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in cfg.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and attr not in passed:
            setattr(args, attr, _eps_list(val) if attr == "eps" and isinstance(val, str) else val)
    return args


def _build_instance(kind: str, p: int, q: int, eps: float):
    if kind == "thm61":
        return build_thm61(p, q, eps)
    if kind == "thm63":
        return build_thm63(p, q, eps)
    if kind == "cor64":
        return build_cor64(p, eps)
    raise UnknownProblemError(kind)


def _target_exponent(p: int, q: int, h_zero: bool, h_convex: bool, f_convex: bool) -> float:
    """Proven worst-case iteration-count exponent in 1/eps for this configuration."""
    if h_zero:
        if f_convex and q <= 2:
            return (p + 1.0) / (p - q + 1.0)
        return q * (p + 1.0) / p
    if f_convex and h_convex and q == 1:
        return (p + 1.0) / p
    return q + 1.0


def cmd_solve(args) -> int:
    try:
        prob = get_problem(args.problem, p=args.p, q=args.q,
                           eps=args.eps[0] if args.eps else 0.25)
    except UnknownProblemError:
        print(f"unknown problem {args.problem!r}; known: {', '.join(PROBLEM_NAMES)}",
              file=sys.stderr)
        return EXIT_UNKNOWN
    params = _params_from_args(args, args.q)
    result = run(prob, params)
    args.out.mkdir(parents=True, exist_ok=True)
    write_trace_csv(args.out / "trace.csv", result.trace)
    write_certificate_json(args.out / "certificate.json", result)
    print(f"termination,{result.termination},iters,{result.iterations},"
          f"w_evals,{result.w_evals},deriv_evals,{result.deriv_evals},"
          f"final_w,{result.final_w:.12g}")
    return EXIT_OK if result.termination in ("step1", "step2") else EXIT_BUDGET


def cmd_phi(args) -> int:
    try:
        prob = get_problem(args.problem, p=args.p, q=args.q,
                           eps=args.eps[0] if args.eps else 0.25)
    except UnknownProblemError:
        print(f"unknown problem {args.problem!r}", file=sys.stderr)
        return EXIT_UNKNOWN
    x = np.array([float(t) for t in str(args.x).split(",")])
    eps_j = args.eps[0] if args.eps else 0.1
    print("j,delta,phi,threshold,gap,verdict")
    for j in args.j:
        val, gap = phi_w(prob, x, j, args.delta)
        thr = eps_j * args.delta**j / math.factorial(j)
        verdict = "pass" if val <= thr + gap else "fail"
        print(f"{j},{args.delta:.17g},{val:.17g},{thr:.17g},{gap:.17g},{verdict}")
    return EXIT_OK


def cmd_worstcase(args) -> int:
    try:
        inst = _build_instance(args.kind, args.p, args.q, args.eps[0])
    except UnknownProblemError:
        print(f"unknown worst-case kind {args.kind!r}", file=sys.stderr)
        return EXIT_UNKNOWN
    args.out.mkdir(parents=True, exist_ok=True)
    if args.mode == "node":
        result = replay(inst)
        stride = result.replay_info.get("trace_stride", 1)
    else:
        prob = get_problem(f"wc-{args.kind}", p=args.p, q=args.q, eps=args.eps[0])
        params = _params_from_args(args, inst.q)
        params = AlgoParams(
            q=inst.q, eps=(inst.eps,) * inst.q, theta=params.theta,
            delta0=tuple(inst.delta_vector()), sigma0=inst.sigma, sigma_min=inst.sigma,
            eta1=params.eta1, eta2=params.eta2, gamma1=params.gamma1,
            gamma2=params.gamma2, gamma3=params.gamma3, max_iters=params.max_iters,
            seed=params.seed,
        )
        result = run(prob, params)
        stride = 1
    write_trace_csv(args.out / "trace.csv", result.trace, stride=stride)
    write_certificate_json(args.out / "certificate.json", result)
    match = result.iterations == inst.k_eps
    print(f"k_eps,{inst.k_eps},iters,{result.iterations},match,{str(match).lower()}")
    return EXIT_OK if result.termination in ("step1", "step2") else EXIT_BUDGET


def _sweep_one(args, eps: float):
    t0 = time.perf_counter()
    if args.kind:
        inst = _build_instance(args.kind, args.p, args.q, eps)
        result = replay(inst)
    else:
        prob = get_problem(args.problem, p=args.p, q=args.q, eps=eps)
        params = _params_from_args(args, args.q)
        params = AlgoParams(
            q=args.q, eps=(eps,) * args.q, theta=params.theta, sigma0=params.sigma0,
            sigma_min=params.sigma_min, eta1=params.eta1, eta2=params.eta2,
            gamma1=params.gamma1, gamma2=params.gamma2, gamma3=params.gamma3,
            max_iters=params.max_iters, seed=params.seed,
        )
        result = run(prob, params)
    return {
        "eps": eps,
        "iterations": result.iterations,
        "successes": result.n_success,
        "w_evals": result.w_evals,
        "deriv_evals": result.deriv_evals,
        "terminated_by": result.termination,
        "wall_time": time.perf_counter() - t0,
    }


def fit_exponent(eps_values, counts) -> float:
    """Least-squares slope of log(count) against log(1/eps)."""
    lx = np.log(1.0 / np.asarray(eps_values, dtype=float))
    ly = np.log(np.asarray(counts, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


def cmd_sweep(args) -> int:
    eps_values = sorted(set(args.eps), reverse=True)
    if len(eps_values) < 4:
        print("sweep needs at least 4 tolerance values", file=sys.stderr)
        return EXIT_UNKNOWN
    if any(not (0.0 < e < 1.0) for e in eps_values):
        print("sweep tolerances must lie strictly inside (0, 1)", file=sys.stderr)
        return EXIT_UNKNOWN
    workers = int(os.environ.get("ARQPC_THREADS", "0")) or min(4, os.cpu_count() or 1)
    if args.kind:
        target = _target_exponent(args.p, args.q, args.kind != "cor64", True, True)
    else:
        try:
            prob = get_problem(args.problem, p=args.p, q=args.q, eps=eps_values[0])
        except UnknownProblemError:
            print(f"unknown problem {args.problem!r}", file=sys.stderr)
            return EXIT_UNKNOWN
        target = _target_exponent(args.p, args.q, prob.h.is_zero, prob.h.is_convex,
                                  prob.feasible.is_convex)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda e: _sweep_one(args, e), eps_values))

    args.out.mkdir(parents=True, exist_ok=True)
    out_csv = args.out / "sweep.csv"
    with out_csv.open("w") as fh:
        fh.write("# arqpc-sweep-v1\n")
        fh.write("eps,iterations,successes,w_evals,deriv_evals,terminated_by,wall_time\n")
        for r in rows:  # written in eps order regardless of completion order
            fh.write(f"{r['eps']:.17g},{r['iterations']},{r['successes']},"
                     f"{r['w_evals']},{r['deriv_evals']},{r['terminated_by']},"
                     f"{r['wall_time']:.6f}\n")
    good = [r for r in rows if r["terminated_by"] in ("step1", "step2")]
    flagged = len(rows) - len(good)
    slope = math.nan
    if len(good) >= 2:
        slope = fit_exponent([r["eps"] for r in good], [r["iterations"] for r in good])
    print(f"slope,{slope:.6f},target,{target:.6f},rows,{len(rows)},flagged,{flagged}")
    if flagged:
        return EXIT_BUDGET
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="arqpc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="run the solver on a named problem")
    sp.add_argument("problem")
    _add_common(sp)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("phi", help="print the optimality measure at a point")
    sp.add_argument("problem")
    sp.add_argument("--x", type=str, required=True, help="point (comma list)")
    sp.add_argument("--j", type=int, nargs="+", default=[1], help="order(s)")
    sp.add_argument("--delta", type=float, default=1.0)
    _add_common(sp)
    sp.set_defaults(fn=cmd_phi)

    sp = sub.add_parser("worstcase", help="replay or honestly solve a slow instance")
    sp.add_argument("--kind", choices=("thm61", "thm63", "cor64"), required=True)
    sp.add_argument("--mode", choices=("node", "interpolant"), default="node")
    _add_common(sp)
    sp.set_defaults(fn=cmd_worstcase)

    sp = sub.add_parser("sweep", help="tolerance sweep with exponent fit")
    group = sp.add_mutually_exclusive_group(required=True)
    group.add_argument("--problem")
    group.add_argument("--kind", choices=("thm61", "thm63", "cor64"))
    _add_common(sp)
    sp.set_defaults(fn=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    args = _apply_config(args, sys.argv[1:] if argv is None else list(argv))
    try:
        return args.fn(args)
    except UnknownProblemError as exc:
        print(f"unknown problem: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN
    except ArqpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)


if __name__ == "__main__":
    raise SystemExit(main())
