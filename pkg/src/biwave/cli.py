"""Command line: ``biwave {run, sweep-eps, bona-smith, continuity, convergence, verify}``.

Exit codes: 0 success, 2 invariant violation, 3 numerical abort, 4 config error.
"""

import argparse
import json
import logging
import sys
import time

from . import harness
from .config import load_config
from .errors import ConfigError, NumericalAbort
from .harness import EXIT_ABORT, EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK

log = logging.getLogger("biwave")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _parser():
    p = argparse.ArgumentParser(prog="biwave", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", nargs="?", help="TOML config file (defaults apply when omitted)")
        sp.add_argument("--override", "-o", action="append", default=[], metavar="SECTION.KEY=VALUE")
        return sp

    sp = add("run", "evolve one trajectory, write CSV records and a JSON summary")
    sp.add_argument("--resume", action="store_true", help="continue from the run's checkpoint")
    sp = add("sweep-eps", "vanishing-viscosity sweep")
    sp.add_argument("--eps", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    sp.add_argument("--resume", action="store_true")
    sp = add("bona-smith", "mollification rates r1..r4 over delta")
    sp.add_argument("--deltas", type=_floats, default=[2.0 ** -j for j in range(4, 11)])
    sp.add_argument("--k", type=int, default=None)
    sp = add("continuity", "distance between perturbed and unperturbed flows")
    sp.add_argument("--radii", type=_floats, default=[1e-2, 1e-3, 1e-4])
    sp.add_argument("--k", type=int, default=None)
    sp.add_argument("--resume", action="store_true")
    sp = add("convergence", "temporal order and spatial floor against the exact solution")
    sp.add_argument("--levels", type=int, default=3)
    sp.add_argument("--no-spatial", action="store_true")
    sp = sub.add_parser("verify", help="invariant suites on seeded random inputs")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--suite", action="append", choices=["geometry", "grid", "nonlinearity", "oracle"])
    return p


def _print(payload):
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


def _study_status(report, checks):
    if not report.get("all_members_ok", True):
        return EXIT_ABORT
    return EXIT_OK if all(report.get(c, False) for c in checks) else EXIT_INVARIANT


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "verify":
        from .verify import format_table, run_suite

        clock = time.perf_counter()
        results = run_suite(args.seed, args.suite)
        print(format_table(results))
        print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in "
              f"{time.perf_counter() - clock:.1f} s")
        return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT
    try:
        cfg = load_config(args.config, args.override)
        if args.command == "run":
            code, summary = harness.run(cfg, resume=args.resume)
            _print({k: summary[k] for k in ("status", "config_hash", "dt", "n_records", "invariants", "abort")})
            return code
        if args.command == "sweep-eps":
            report = harness.sweep_viscosity(cfg, args.eps, resume=args.resume)
            _print({k: report.get(k) for k in ("pairwise", "to_zero", "pairwise_decreasing", "to_zero_decreasing")})
            return _study_status(report, ("pairwise_decreasing", "to_zero_decreasing"))
        if args.command == "bona-smith":
            report = harness.bona_smith_study(cfg, args.deltas, args.k)
            _print(report["rows"])
            return _study_status(report, ("r1_bounded", "r2_to_zero", "r4_bounded"))
        if args.command == "continuity":
            report = harness.continuity_study(cfg, args.radii, args.k, resume=args.resume)
            _print(report["rows"])
            return _study_status(report, ("decreasing",))
        if args.command == "convergence":
            report = harness.convergence_study(cfg, args.levels, spatial=not args.no_spatial)
            _print({k: report.get(k) for k in ("temporal", "order_exact", "order_richardson", "spatial")})
            return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
