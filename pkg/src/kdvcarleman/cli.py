"""Command-line entry point.

Exit codes: 0 success, 1 a checked property or hypothesis failed,
2 usage or input error.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .catalog import CATALOG, default_weight, get_entry
from .config import (
    ConfigError,
    SweepSettings,
    parse_box,
    parse_sweep_config,
    parse_user_expr,
    render,
    resolve_system,
)
from .grid import Grid, GridError
from .harness import (
    HypothesisFailure,
    SweepConfig,
    emit_report,
    gen_test_functions,
    run_sweep,
    solvability_ratio,
)
from .hypotheses import INVOLUTIVITY_TOL, NONDEGENERACY_THRESHOLD, Region, check_system
from .identities import EXACT_MATCH, render_text, verify_all
from .operators import MissingStructureCoefficients
from .symbolic import ParseError
from .sysfile import SysFileError, dump_system

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_source(p: argparse.ArgumentParser, required: bool = True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--catalog", metavar="ID", help="catalog entry (see 'catalog list')")
    g.add_argument("--file", metavar="PATH", help="system definition file")
    p.add_argument("--a", metavar="EXPR", help="KdV coefficient a(x) (kdv entries only)")
    p.add_argument("--field", metavar="NAME=EXPR", action="append", default=[],
                   help="catalog parameter, e.g. a=1+x^2")
    p.add_argument("--box", metavar="LO,HI,...",
                   help="region K as lo1,hi1,lo2,hi2,... or one lo,hi pair; default [-1,1]^dim")
    p.add_argument("--samples", type=int, default=5, help="sample points per axis of K")


def _source(args) -> tuple:
    params = {}
    for item in args.field:
        if "=" not in item:
            raise UsageError(f"--field expects NAME=EXPR, got {item!r}")
        k, v = item.split("=", 1)
        params[k.strip()] = v.strip()
    if args.a is not None:
        params["a"] = args.a
    S, file_box = resolve_system(args.catalog, args.file, params)
    if args.samples < 2:
        raise UsageError("--samples must be >= 2")
    if args.box:
        K = parse_box(args.box, S.dim, args.samples)
    elif file_box is not None:
        K = Region(file_box.lo, file_box.hi, args.samples)
    else:
        K = Region.cube(S.dim, 1, args.samples)
    return S, K


def _source_echo(args, S, K) -> dict:
    return {
        "catalog": args.catalog,
        "file": args.file,
        "system": S.name,
        "axes": list(S.axis_labels),
        "K": K.to_list(),
        "samples": K.sample_density,
    }


def _write_json(path, payload):
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# check ---------------------------------------------------------------------

def cmd_check(args) -> int:
    S, K = _source(args)
    rep = check_system(S, K, args.max_len, args.tol, args.threshold)
    print(f"kdvcarleman {__version__} check: {S.name}  axes {', '.join(S.axis_labels)}  K {K.to_list()}")
    print(rep.render())
    ok = rep.passed(args.require_rank)
    if args.require_rank is not None and rep.hormander_rank != args.require_rank:
        print(f"required hormander rank {args.require_rank}, found {rep.hormander_rank}")
    print("PASS" if ok else "FAIL")
    if args.json:
        echo = _source_echo(args, S, K) | {"max_len": args.max_len, "tol": args.tol,
                                           "threshold": args.threshold, "require_rank": args.require_rank}
        _write_json(args.json, {"version": __version__, "config": echo, "report": rep.to_dict(), "passed": ok})
    return EXIT_OK if ok else EXIT_FAIL


# verify --------------------------------------------------------------------

def cmd_verify(args) -> int:
    S, K = _source(args)
    f = parse_user_expr(args.weight, S) if args.weight else default_weight(S)
    try:
        reports = verify_all(S, f)
    except MissingStructureCoefficients as exc:
        print(f"error: structure coefficients required ({exc})", file=sys.stderr)
        return EXIT_USAGE
    header = (f"kdvcarleman {__version__} verify: {S.name}  axes {', '.join(S.axis_labels)}  "
              f"weight f = {render(f, S)}  (positional x1..x{S.dim} in operator output)")
    text = render_text(reports, header)
    print(text, end="")
    all_exact = all(r.status == EXACT_MATCH for r in reports)
    mode = "report-only" if args.report_only else "strict"
    print(f"{sum(r.exact for r in reports)}/{len(reports)} exact-match ({mode})")
    payload = {
        "version": __version__,
        "config": _source_echo(args, S, K) | {"weight": render(f, S), "report_only": args.report_only},
        "identities": [r.to_record() for r in reports],
    }
    if args.json:
        _write_json(args.json, payload)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "identities.txt"), "w") as fh:
            fh.write(text)
        _write_json(os.path.join(args.out, "identities.json"), payload)
    return EXIT_OK if all_exact or args.report_only else EXIT_FAIL


# sweep ---------------------------------------------------------------------

def _sweep_settings(args) -> SweepSettings:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if args.config:
        try:
            with open(args.config) as fh:
                cp.read_file(fh, args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
    elif not (args.catalog or args.file):
        raise UsageError("sweep needs a config file or --catalog/--file")

    def put(section, key, value):
        if value is None:
            return
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))

    if args.catalog or args.file:
        if cp.has_section("system"):
            cp.remove_section("system")
        put("system", "catalog", args.catalog)
        put("system", "file", args.file)
    for item in args.field:
        if "=" not in item:
            raise UsageError(f"--field expects NAME=EXPR, got {item!r}")
        k, v = item.split("=", 1)
        put("system", k.strip(), v.strip())
    put("system", "a", args.a)
    put("weight", "f", args.weight)
    put("weight", "c0", args.c0)
    put("grid", "box", args.box)
    put("grid", "shape", args.shape)
    put("grid", "padding", args.padding)
    put("sweep", "lambdas", args.lambdas)
    put("sweep", "count", args.count)
    put("sweep", "seed", args.seed)
    put("sweep", "sobolev_s", args.s)
    put("sweep", "target", args.target)
    put("assert", "min_slope", args.min_slope)
    put("assert", "refinement_tol", args.refinement_tol)
    buf = io.StringIO()
    cp.write(buf)
    base = os.path.dirname(os.path.abspath(args.config)) if args.config and not args.file else None
    return parse_sweep_config(buf.getvalue(), args.config or "<flags>", base)


def cmd_sweep(args) -> int:
    st = _sweep_settings(args)
    cfg = st.config
    try:
        rep = run_sweep(cfg)
    except HypothesisFailure as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        if exc.report is not None:
            print(exc.report.render(), file=sys.stderr)
        return EXIT_FAIL
    ok = rep.passes(st.min_slope)
    rep.checks["min_slope"] = st.min_slope
    rep.checks["positive"] = rep.positive
    rep.checks["slope_ok"] = rep.slope >= st.min_slope
    if st.refinement_tol is not None:
        fine = SweepConfig(cfg.system, cfg.weight, cfg.grid.refined(2), cfg.lambdas,
                           cfg.num_test_functions, cfg.seed, cfg.sobolev_s, cfg.target, cfg.max_len)
        rep2 = run_sweep(fine)
        change = max(abs(a - b) / abs(a) for a, b in zip(rep.inf_ratio, rep2.inf_ratio))
        rep.checks["refinement_max_rel_change"] = change
        rep.checks["refinement_tol"] = st.refinement_tol
        rep.checks["refinement_ok"] = change < st.refinement_tol
        ok = ok and change < st.refinement_tol
    rep.checks["passed"] = ok
    print(f"kdvcarleman {__version__} sweep: {cfg.system.name}  target {cfg.target}  "
          f"weight {rep.config['weight']}  grid {list(cfg.grid.shape)}")
    print(f"{'lambda':>10} {'inf_ratio':>14} {'median_ratio':>14}")
    for lam, a, b in zip(rep.lambdas, rep.inf_ratio, rep.median_ratio):
        print(f"{lam:>10g} {a:>14.6e} {b:>14.6e}")
    print(f"slope {rep.slope:.4f} (upper half of the lambda range), C {rep.C:.6e}, lambda0 {rep.lambda0:g}")
    if "refinement_max_rel_change" in rep.checks:
        print(f"grid doubling: max relative change {rep.checks['refinement_max_rel_change']:.3e}")
    print("PASS" if ok else "FAIL")
    if args.out:
        paths = emit_report(rep, args.out)
        print("wrote " + ", ".join(paths))
    return EXIT_OK if ok else EXIT_FAIL


# solvability ---------------------------------------------------------------

def _solvability_inf(S, K, shape, padding, count, seed, s, target):
    g = Grid.around(K, shape, padding)
    fam = gen_test_functions(K, g, count, seed)
    ratios = [solvability_ratio(S, u, s, target) for u in fam]
    return g, ratios


def cmd_solvability(args) -> int:
    S, K = _source(args)
    shape = _shape(args.shape or "64", S.dim)
    g, ratios = _solvability_inf(S, K, shape, args.padding, args.count, args.seed, args.s, args.target)
    inf = float(min(ratios))
    result = {"inf_ratio": inf, "median_ratio": float(np.median(ratios)), "argmin": int(np.argmin(ratios))}
    ok = inf > 0
    if args.refinement_tol is not None:
        _, fine = _solvability_inf(S, K, tuple(2 * x for x in shape), args.padding, args.count,
                                   args.seed, args.s, args.target)
        change = abs(min(fine) - inf) / inf
        result |= {"refined_inf_ratio": float(min(fine)), "refinement_rel_change": change,
                   "refinement_ok": change < args.refinement_tol}
        ok = ok and change < args.refinement_tol
    print(f"kdvcarleman {__version__} solvability: {S.name}  ||{args.target} u|| / ||u||_H^-{args.s:g}")
    for k, v in result.items():
        print(f"  {k}: {v}")
    print("PASS" if ok else "FAIL")
    if args.json:
        echo = _source_echo(args, S, K) | {"grid": g.describe(), "count": args.count, "seed": args.seed,
                                           "s": args.s, "target": args.target}
        _write_json(args.json, {"version": __version__, "config": echo, "result": result, "passed": ok})
    return EXIT_OK if ok else EXIT_FAIL


def _shape(text, dim):
    vals = [int(x) for x in str(text).replace(",", " ").split()]
    if len(vals) == 1:
        vals = vals * dim
    if len(vals) != dim:
        raise UsageError(f"--shape needs 1 or {dim} values")
    return tuple(vals)


# catalog -------------------------------------------------------------------

def cmd_catalog(args) -> int:
    if args.action == "list":
        width = max(len(k) for k in CATALOG)
        for k, e in CATALOG.items():
            print(f"{k:<{width}}  {e.description}")
        return EXIT_OK
    if not args.id:
        raise UsageError("catalog show needs an entry id")
    try:
        e = get_entry(args.id)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    S = e.build()
    print(f"# {e.id}: {e.description}")
    print(f"# axes: {', '.join(S.axis_labels)}")
    print(f"# expected: involutive={e.involutive} nondegenerate={e.nondegenerate} "
          f"hormander_rank={e.rank}")
    print(f"# default weight: {render(default_weight(S), S)}")
    print(dump_system(S), end="")
    return EXIT_OK


# parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdvcarleman",
                                description="Hypothesis checks, identity verification and Carleman sweeps "
                                            "for KdV-type operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="involutivity, nondegeneracy and Hormander rank")
    _add_source(c)
    c.add_argument("--max-len", type=int, default=4, help="longest bracket for the rank check")
    c.add_argument("--tol", type=float, default=INVOLUTIVITY_TOL, help="involutivity tolerance")
    c.add_argument("--threshold", type=float, default=NONDEGENERACY_THRESHOLD,
                   help="nondegeneracy threshold on min |X_1|")
    c.add_argument("--require-rank", type=int, help="also require this Hormander rank")
    c.add_argument("--json", metavar="PATH", help="write the report as JSON")
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify", help="check the operator identities exactly")
    _add_source(v)
    v.add_argument("--weight", metavar="EXPR", help="real weight f (axis labels); default -x_m")
    v.add_argument("--report-only", action="store_true", help="exit 0 even when residuals are found")
    v.add_argument("--json", metavar="PATH", help="write the reports as JSON")
    v.add_argument("--out", metavar="DIR", help="write identities.txt and identities.json here")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", help="empirical Carleman estimate over a lambda sweep")
    s.add_argument("config", nargs="?", help="sweep config file (INI); flags override it")
    _add_source(s, required=False)
    s.add_argument("--weight", metavar="EXPR")
    s.add_argument("--c0", type=float, help="claimed lower bound of -i X_1 f on K")
    s.add_argument("--shape", help="points per axis (one value or one per axis)")
    s.add_argument("--padding", type=float)
    s.add_argument("--lambdas", help="comma-separated, ascending, all >= 1")
    s.add_argument("--count", type=int, help="number of test functions")
    s.add_argument("--seed", type=int)
    s.add_argument("--s", type=float, help="Sobolev index of the right-hand side")
    s.add_argument("--target", choices=["P1", "P1*"])
    s.add_argument("--min-slope", type=float)
    s.add_argument("--refinement-tol", type=float, help="also rerun on a doubled grid")
    s.add_argument("--out", metavar="DIR", help="write sweep.csv and summary.json here")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("solvability", help="||T u|| / ||u||_{H^-s} over the test family")
    _add_source(o)
    o.add_argument("--shape", help="points per axis (default 64)")
    o.add_argument("--padding", type=float, default=0.25)
    o.add_argument("--count", type=int, default=50)
    o.add_argument("--seed", type=int, default=7)
    o.add_argument("--s", type=float, default=0.0)
    o.add_argument("--target", choices=["P1", "P1*"], default="P1*")
    o.add_argument("--refinement-tol", type=float, help="also rerun on a doubled grid")
    o.add_argument("--json", metavar="PATH")
    o.set_defaults(func=cmd_solvability)

    k = sub.add_parser("catalog", help="list or show built-in systems")
    k.add_argument("action", choices=["list", "show"])
    k.add_argument("id", nargs="?")
    k.set_defaults(func=cmd_catalog)
    return p


_VALUE_OPTS = ("--weight", "--a", "--box", "--field")


def _glue_values(argv):
    """Let expression options take values starting with '-' (``--weight -x1``)."""
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_OPTS:
            nxt = next(it, None)
            out.append(tok if nxt is None else f"{tok}={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    args = parser.parse_args(_glue_values(argv))
    try:
        return args.func(args)
    except (UsageError, ConfigError, SysFileError, ParseError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
