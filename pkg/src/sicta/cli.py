"""Command-line interface: ``sicta <subcommand> ...``.

Tables go out as CSV and nested results as JSON, on stdout or to ``--out``.
Every file written with ``--out`` gets a ``<out>.manifest.json`` next to it
recording the parameters, seed, version and timing of the run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from fractions import Fraction

import numpy as np

from . import __version__
from .asymptotics import leading_term, oscillation
from .closedform import OBSERVABLES, closed_form
from .delay import analyze_delay
from .errors import RejectedDistribution, SictaError
from .montecarlo import SimulationConfig, simulate_gated_system, simulate_many, summarize_runs
from .optimize import maximize_throughput, tradeoff_curve, verify_lagrange_conditions
from .oracle import exact_cri_distribution, exact_expectations
from .splitmodel import parse_distribution

EXIT_OK, EXIT_MISMATCH, EXIT_USAGE = 0, 1, 2
FLOAT_MATCH_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(json.dumps({"error": "UsageError", "message": message}) + "\n")
        raise SystemExit(EXIT_USAGE)


def _dist_arg(text: str):
    try:
        return parse_distribution(text)
    except RejectedDistribution as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _n_list(text: str) -> list[int]:
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":"))
            values = list(range(lo, hi + 1))
        else:
            values = [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer list or a:b range: {text!r}") from None
    if not values or min(values) < 0:
        raise argparse.ArgumentTypeError(f"empty or negative n in {text!r}")
    return values


def _exact_str(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


def _csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# subcommands; each returns (text, exit code, arithmetic mode)


def _n_range(args):
    if args.n is not None:
        return args.n
    return range(args.nmin, args.nmax + 1)


def _cmd_closed(args):
    obs = OBSERVABLES if args.obs == "all" else (args.obs,)
    rows = []
    mode = None
    for n in _n_range(args):
        row = [n]
        for o in obs:
            v = closed_form(args.dist, o, n, args.mode, args.paper_literal)
            mode = v.arithmetic_mode
            row += [repr(float(v.value)), _exact_str(v.value) if mode == "rational" else ""]
        rows.append(row)
    if len(obs) == 1:
        header = ["n", "value", "value_exact"]
    else:
        header = ["n"] + [h for o in obs for h in (f"{o}_value", f"{o}_exact")]
    return _csv(header, rows), EXIT_OK, mode


def _cmd_exact(args):
    if args.jmax is not None:
        res = exact_cri_distribution(args.dist, args.n, args.jmax)
        rows = [[j, repr(float(v)), _exact_str(v)] for j, v in enumerate(res.probs)]
        rows.append(["residual", repr(float(res.residual)), _exact_str(res.residual)])
        return _csv(["j", "probability", "probability_exact"], rows), EXIT_OK, _mode(args.dist)
    table = exact_expectations(args.dist, args.nmax)
    rows = []
    for n in range(table.n_max + 1):
        row = [n]
        for v in table.row(n):
            row += [repr(float(v)), _exact_str(v)]
        rows.append(row)
    header = ["n"] + [h for o in OBSERVABLES for h in (f"{o}_value", f"{o}_exact")]
    return _csv(header, rows), EXIT_OK, _mode(args.dist)


def _mode(dist):
    return "rational" if dist.exact else "float"


def _cmd_asymptotic(args):
    obs = OBSERVABLES if args.obs == "all" else (args.obs,)
    rows = []
    for o in obs:
        leading = leading_term(args.dist, o, paper_literal=args.paper_literal)
        if not args.n:
            rows.append([o, repr(leading), "", "", ""])
            continue
        for n in args.n:
            r = oscillation(args.dist, o, n, args.m_max)
            rows.append([o, repr(leading), n, repr(r.oscillation), repr(r.tail_bound)])
    return _csv(["observable", "leading", "n", "g_n", "tail_bound"], rows), EXIT_OK, "float"


def _cmd_simulate(args):
    cfg = SimulationConfig(args.dist, seed=args.seed, runs=args.runs, n=args.n, threads=args.threads)
    rows = simulate_many(cfg)
    stats = summarize_runs(rows, args.seed)
    lengths, freq = np.unique(rows[:, 0], return_counts=True)
    histogram = {int(v): int(f) for v, f in zip(lengths, freq)}
    out = {"dist": args.dist.label(), "n": args.n, **stats.as_dict()}
    out["histogram"] = {str(k): v for k, v in histogram.items()}
    if args.histogram_csv:
        _write(args.histogram_csv, _csv(["length", "count"], sorted(histogram.items())), args, "float")
    return _json(out), EXIT_OK, "float"


def _cmd_simulate_gated(args):
    cfg = SimulationConfig(
        args.dist,
        seed=args.seed,
        lam=args.lam,
        horizon_cri=args.warmup + args.cris,
        warmup_cri=args.warmup,
        threads=args.threads,
    )
    res = simulate_gated_system(cfg)
    hist = {str(k): v for k, v in sorted(res.delays.histogram.items())}
    out = {
        "dist": args.dist.label(),
        "lambda": args.lam,
        "means": {"cri_length": res.cri_stats.mean["L"], **{f"delay_{k}": v for k, v in res.delay_stats.mean.items()}},
        "standard_errors": {
            "cri_length": res.cri_stats.standard_error["L"],
            **{f"delay_{k}": v for k, v in res.delay_stats.standard_error.items()},
        },
        "packets": res.delay_stats.runs,
        "cris": res.cri_stats.runs,
        "histogram": hist,
        "seed": args.seed,
    }
    if args.histogram_csv:
        rows = [[k, v] for k, v in sorted(res.delays.histogram.items())]
        _write(args.histogram_csv, _csv(["length", "frequency"], rows), args, "float")
    return _json(out), EXIT_OK, "float"


def _cmd_optimize(args):
    dist, value = maximize_throughput(args.d, tol=args.tol)
    out = {
        "d": args.d,
        "argmin": list(dist.floats()),
        "value": value,
        "mst": 1 / value,
        "lagrange_conditions": verify_lagrange_conditions(dist, 1e-6),
    }
    return _json(out), EXIT_OK, "float"


def _cmd_tradeoff(args):
    xs = np.linspace(0.0, args.xmax, args.grid) if args.grid > 1 else np.array([0.0])
    points = tradeoff_curve(args.d, [round(float(x), 12) for x in xs], tol=args.tol)
    rows = []
    for pt in points:
        rows.append([repr(pt.reduction), repr(pt.collision_rate)] + [repr(v) for v in pt.argmin_p.floats()])
    header = ["x", "collision_rate"] + [f"p_{i}" for i in range(1, args.d + 1)]
    return _csv(header, rows), EXIT_OK, "float"


def _cmd_delay(args):
    size = args.imax or args.jmax
    res = analyze_delay(args.dist, args.lam, size)
    out = {"dist": args.dist.label(), "lambda": args.lam, **res.as_dict()}
    if args.pi_csv:
        pi = res.model.pi
        rows = [[n, repr(float(pi[n])), repr(float(res.model.pi_tagged[n]))] for n in range(1, len(pi)) if pi[n] > 0]
        _write(args.pi_csv, _csv(["length", "pi", "pi_tagged"], rows), args, "float")
    return _json(out), EXIT_OK, "float"


def _cmd_validate(args):
    table = exact_expectations(args.dist, args.nmax)
    rows = []
    mismatches = []
    mode = None
    for n in range(1, args.nmax + 1):
        row = [n]
        for o in OBSERVABLES:
            oracle = table.column(o)[n]
            closed = closed_form(args.dist, o, n, paper_literal=args.paper_literal)
            mode = closed.arithmetic_mode
            if mode == "rational":
                diff = abs(closed.value - oracle)
                bad = diff != 0
                row += [_exact_str(oracle), _exact_str(closed.value), _exact_str(diff)]
            else:
                diff = abs(float(closed.value) - float(oracle))
                bad = diff > FLOAT_MATCH_TOL * max(1.0, abs(float(oracle)))
                row += [repr(float(oracle)), repr(float(closed.value)), repr(diff)]
            if bad:
                mismatches.append(f"{o}@{n}")
        rows.append(row)
    header = ["n"] + [h for o in OBSERVABLES for h in (f"{o}_oracle", f"{o}_closed", f"{o}_abs_diff")]
    summary = {"mismatches": mismatches, "count": len(mismatches)}
    sys.stderr.write(json.dumps(summary) + "\n")
    return _csv(header, rows), (EXIT_MISMATCH if mismatches else EXIT_OK), mode


COMMANDS = {
    "closed": _cmd_closed,
    "exact": _cmd_exact,
    "asymptotic": _cmd_asymptotic,
    "simulate": _cmd_simulate,
    "simulate-gated": _cmd_simulate_gated,
    "optimize": _cmd_optimize,
    "tradeoff": _cmd_tradeoff,
    "delay": _cmd_delay,
    "validate": _cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sicta", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, dist=True):
        if dist:
            p.add_argument("--dist", type=_dist_arg, required=True, help="p_1,..,p_d, pbi:<d> or fair:<d>")
        p.add_argument("--out", help="write the result here (plus a .manifest.json)")
        p.add_argument("--threads", type=int, default=1)
        return p

    obs_choices = list(OBSERVABLES) + ["all"]
    p = common(sub.add_parser("closed", help="closed-form mean slot counts"))
    p.add_argument("--obs", choices=obs_choices, default="all")
    p.add_argument("--n", type=_n_list, help="one n, a list 2,5,9 or a range 0:20")
    p.add_argument("--nmin", type=int, default=0)
    p.add_argument("--nmax", type=int, default=10)
    p.add_argument("--mode", choices=["rational", "high-precision"])
    p.add_argument("--paper-literal", action="store_true", help="use the printed S and I sums")

    p = common(sub.add_parser("exact", help="exact enumeration (small n)"))
    p.add_argument("--nmax", type=int, default=8)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--jmax", type=int, help="emit the law of l_n up to this length instead of means")

    p = common(sub.add_parser("asymptotic", help="leading terms and oscillations"))
    p.add_argument("--obs", choices=obs_choices, default="L")
    p.add_argument("--n", type=_n_list, help="evaluate the oscillating part at these n (list or a:b range)")
    p.add_argument("--mmax", "--m-max", dest="m_max", type=int, help="pole pairs to sum (default: automatic)")
    p.add_argument("--paper-literal", action="store_true")

    p = common(sub.add_parser("simulate", help="Monte Carlo slot counts for one collision size"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--runs", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--histogram-csv")

    p = common(sub.add_parser("simulate-gated", help="gated access with Poisson arrivals"))
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--cris", type=int, default=10_000, help="CRIs kept after warmup")
    p.add_argument("--warmup", type=int, default=1_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--histogram-csv")

    p = common(sub.add_parser("optimize", help="throughput-optimal split"), dist=False)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--tol", type=float, default=1e-10)

    p = common(sub.add_parser("tradeoff", help="collision rate against throughput loss"), dist=False)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--grid", type=int, default=5)
    p.add_argument("--xmax", type=float, default=0.2)
    p.add_argument("--tol", type=float, default=1e-8)

    p = common(sub.add_parser("delay", help="stationary CRI length and mean packet delay"))
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--imax", type=int)
    p.add_argument("--jmax", type=int)
    p.add_argument("--pi-csv")

    p = common(sub.add_parser("validate", help="closed forms against exact enumeration"))
    p.add_argument("--nmax", type=int, default=10)
    p.add_argument("--paper-literal", action="store_true")
    return parser


def _params(args) -> dict:
    out = {}
    for key, value in vars(args).items():
        if key.startswith("_"):
            continue
        if hasattr(value, "label") and hasattr(value, "p"):
            value = value.label()
        out[key] = value
    return out


def _write(path, text, args, mode):
    with open(path, "w", newline="") as fh:
        fh.write(text)
    manifest = {
        "subcommand": args.command,
        "parameters": _params(args),
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "arithmetic_mode": mode,
        "output": path,
        "duration_s": round(time.perf_counter() - args._start, 6),
    }
    with open(path + ".manifest.json", "w") as fh:
        fh.write(_json(manifest))


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._start = time.perf_counter()
    try:
        text, code, mode = COMMANDS[args.command](args)
    except (SictaError, ValueError, ArithmeticError) as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return EXIT_MISMATCH
    if args.out:
        _write(args.out, text, args, mode)
    else:
        sys.stdout.write(text)
    return code


def main(argv=None) -> int:
    try:
        return run_cli(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
