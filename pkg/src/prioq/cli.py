"""Command-line entry point: ``prioq {simulate,solve,scan,pmf,records}``.

Every subcommand takes ``--config FILE`` (JSON, keys as the long flag names
with dashes or underscores); explicit flags override the file.  Exit codes:
0 success, 2 usage, 3 numerical divergence, 4 I/O.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io
from .analytic import BarabasiWaitingTime, GeneralWaitingTime
from .exceptions import DivergenceError, UnsupportedConfigurationError
from .model import make_model
from .records import asymptotic_tests, simulate_record_trace
from .simulator import (SimulationConfig, merge_histograms, renewal_count,
                        residual_fraction, run, run_replicas)
from .solver import assemble, scan_region, solve, solve_auto, solve_direct, tau_bounds

EXIT_OK, EXIT_USAGE, EXIT_DIVERGENCE, EXIT_IO = 0, 2, 3, 4
_NOT_CONFIG = {"config", "out", "func", "command"}


class UsageError(Exception):
    pass


def parse_range(text):
    """``start:stop:step`` with both ends included, e.g. ``0.05:0.5:0.05``."""
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def _resolved(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _out(args, name):
    return os.path.join(io.ensure_dir(args.out), name)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    if args.L > 2 and args.protocol != "barabasi":
        raise UsageError(f"--L {args.L} requires --protocol barabasi")
    if args.steps <= args.burnin:
        raise UsageError("--steps must exceed --burnin")
    protocol, dist = make_model(args.protocol, args.p, args.c, args.density_csv)
    config = SimulationConfig(protocol, dist, args.L, args.steps, args.burnin, args.seed)
    if args.replicas == 1:
        results = [run(config)]
    else:
        results = run_replicas(config, args.replicas, args.jobs)
    hist = merge_histograms([r.histogram for r in results])
    resolved = _resolved(args)
    ks = np.arange(1, hist.counts.size)
    io.write_csv(_out(args, "histogram.csv"), ["k", "count"], [ks, hist.counts[1:]], resolved)
    if not args.no_samples:
        samples = np.concatenate([r.old_priority_samples for r in results])
        io.write_csv(_out(args, "priorities.csv"), ["x"], [samples], resolved)
    replicas = []
    for r in results:
        s = r.summary()
        s["accounting_identity"] = r.total_waiting_time + sum(r.histogram.residuals) \
            == r.config.L * r.steps
        replicas.append(s)
    summary = {
        "mean_tau": hist.mean(),
        "executed": hist.total_executed,
        "residual_fraction": float(np.mean([residual_fraction(r) for r in results])),
        "replicas": replicas,
    }
    if args.protocol == "barabasi":
        summary["renewal_count"] = int(sum(renewal_count(r.event_codes, args.L) for r in results))
    io.write_json(_out(args, "summary.json"), summary, resolved)
    print(f"mean_tau={hist.mean():.6f} executed={hist.total_executed}")


def _solve_for(args, method):
    protocol, dist = make_model("proportional", args.p, args.c)
    assembly = assemble(protocol, dist, c1_split=args.c1_split, n_nodes=args.nodes)
    if method == "neumann":
        return protocol, dist, solve(assembly, args.tol, args.max_terms)
    if method == "direct":
        return protocol, dist, solve_direct(assembly)
    return protocol, dist, solve_auto(assembly, args.tol, args.max_terms)


def cmd_solve(args):
    _, _, sol = _solve_for(args, args.method)
    resolved = _resolved(args)
    io.write_csv(_out(args, "density.csv"), ["x", "r1_raw", "r1_normalized"],
                 [sol.grid.nodes, sol.r1_raw, sol.r1_normalized], resolved)
    io.write_json(_out(args, "solve.json"), {
        "method": sol.method, "hs_norm": sol.hs_norm, "n_terms": sol.n_terms,
        "tail_bound": sol.tail_bound, "residual": sol.residual, "mass": sol.mass,
        "converged": sol.converged}, resolved)
    print(f"hs_norm={sol.hs_norm:.6g} n_terms={sol.n_terms} residual={sol.residual:.3g}")


def cmd_scan(args):
    rows = scan_region(args.c_range, args.p_range, args.nodes)
    io.write_csv(_out(args, "region.csv"), ["p", "c", "hs_norm", "converges"],
                 [[r.p for r in rows], [r.c for r in rows], [r.hs_norm for r in rows],
                  [r.converges for r in rows]], _resolved(args))
    for c in args.c_range:
        ok = [r.p for r in rows if r.c == c and r.converges]
        print(f"c={c:g}: certified for p <= {max(ok) if ok else float('nan'):g}")


def cmd_pmf(args):
    ks = np.arange(1, args.kmax + 1)
    resolved = _resolved(args)
    if args.protocol == "barabasi":
        pmf = BarabasiWaitingTime(args.p).pmf(ks)
        cols, data = ["k", "probability"], [ks, pmf]
        extra = {}
    else:
        protocol, dist, sol = _solve_for(args, args.method)
        law = GeneralWaitingTime(protocol, dist, sol.density(), args.nodes)
        pmf = law.pmf(ks)
        cols, data = ["k", "probability"], [ks, pmf]
        extra = {"method": sol.method, "hs_norm": sol.hs_norm}
        if 0.0 < args.p < 1.0 and args.c > 0.0:
            b = tau_bounds(args.p, args.c, ks[1:], r1=sol.density())
            cols += ["lower", "upper"]
            data += [[None] + list(b.lower), [None] + list(b.upper)]
            extra["k0"] = b.k0
    with np.errstate(divide="ignore"):
        cols += ["ln_k", "ln_probability"]
        data += [np.log(ks), np.log(pmf)]
    io.write_csv(_out(args, "pmf.csv"), cols, data, resolved)
    if extra:
        io.write_json(_out(args, "pmf.json"), extra, resolved)
    print(f"P(tau=1)={pmf[0]:.6g} sum_k<={args.kmax}={pmf.sum():.12g}")


def cmd_records(args):
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    trace = simulate_record_trace(args.trace_records, rng)
    deltas = [None] + list(trace.inter_record)
    ks = np.arange(1, trace.n_records + 1)
    resolved = _resolved(args)
    io.write_csv(_out(args, "records.csv"), ["k", "T_k", "delta_k", "value"],
                 [ks, trace.record_times, deltas, trace.record_values], resolved)
    rep = asymptotic_tests(args.runs, args.k, rng, lil_k=args.lil_k)
    io.write_json(_out(args, "battery.json"), {
        "k_target": rep.k_target, "n_runs": rep.n_runs, "slln": rep.slln,
        "clt_ks": rep.clt_ks, "lil_band": rep.lil_band, "ratio_ks": rep.ratio_ks,
        "median_log_gap_rate": rep.median_log_gap_rate}, resolved)
    print(f"slln={rep.slln} clt_ks={rep.clt_ks} ratio_ks={rep.ratio_ks:.4f}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _prob(text):
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("must lie in [0, 1]")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="prioq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON file with default flag values")
        sp.add_argument("--out", default=".", help="output directory")
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "Monte Carlo of the priority list")
    sp.add_argument("--protocol", choices=["barabasi", "proportional"], default="barabasi")
    sp.add_argument("--p", type=_prob, default=0.5)
    sp.add_argument("--c", type=float, default=0.0)
    sp.add_argument("--L", type=int, default=2)
    sp.add_argument("--steps", type=int, default=1_000_000)
    sp.add_argument("--burnin", type=int, default=10_000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--replicas", type=int, default=1)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--density-csv", default=None, help="tabulated x,pdf arrival density")
    sp.add_argument("--no-samples", action="store_true", help="skip priorities.csv")

    def solver_flags(sp, method):
        sp.add_argument("--p", type=_prob, default=0.9)
        sp.add_argument("--c", type=float, default=0.2)
        sp.add_argument("--nodes", type=int, default=256)
        sp.add_argument("--tol", type=float, default=1e-10)
        sp.add_argument("--max-terms", type=int, default=200)
        sp.add_argument("--c1-split", type=float, default=None)
        sp.add_argument("--method", choices=["neumann", "direct", "auto"], default=method)
        sp.add_argument("--seed", type=int, default=0)

    sp = add("solve", cmd_solve, "stationary old-task density (proportional rule)")
    solver_flags(sp, "neumann")

    sp = add("scan", cmd_scan, "Hilbert-Schmidt convergence region over (p, c)")
    sp.add_argument("--c-range", type=parse_range, default=parse_range("0.05:0.5:0.05"))
    sp.add_argument("--p-range", type=parse_range, default=parse_range("0.1:0.99:0.01"))
    sp.add_argument("--nodes", type=int, default=128)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("pmf", cmd_pmf, "waiting-time distribution")
    sp.add_argument("--protocol", choices=["barabasi", "proportional"], default="barabasi")
    sp.add_argument("--kmax", type=int, default=100)
    solver_flags(sp, "auto")

    sp = add("records", cmd_records, "record-process battery for p = 1")
    sp.add_argument("--runs", type=int, default=2000)
    sp.add_argument("--k", type=int, default=30)
    sp.add_argument("--lil-k", type=int, default=20_000)
    sp.add_argument("--trace-records", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config(parser, argv):
    """Re-parse with the JSON config as defaults so explicit flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    sp = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in known or dest in _NOT_CONFIG:
            parser.error(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if action.type is not None and isinstance(value, str):
            value = action.type(value)
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except OSError as exc:
        print(f"prioq: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        args.func(args)
    except (UsageError, UnsupportedConfigurationError, ValueError) as exc:
        print(f"prioq {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"prioq {args.command}: diverges: hs_norm={exc.hs_norm:.17g} >= 1 "
              "(try --method direct or auto)", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OSError as exc:
        print(f"prioq {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
