"""Command line entry point: ``linecoord region|simulate|insights``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import builtins
from .errors import PreconditionError, ResourceBudgetError
from .experiments import (
    RATE_PRESETS, ConfigError, ExperimentConfig, ResultRow, dumps, format_insights, gap_contrast,
    insights_report, load_scheme, load_target, region_report, rows_to_csv, run_sweep, write_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET = 0, 2, 3


def parse_int_list(text: str) -> tuple[int, ...]:
    """``"0,2,5-7"`` -> ``(0, 2, 5, 6, 7)``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                out.extend(range(a, b + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad integer list element {part!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty integer list")
    return tuple(out)


def parse_rates(text: str) -> tuple:
    """``"1,0.5,0;above-resolvability"`` -> ``((1.0, 0.5, 0.0), "above-resolvability")``."""
    out = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if part in RATE_PRESETS:
            out.append(part)
            continue
        try:
            r = tuple(float(x) for x in part.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad rate triple {part!r}") from None
        if len(r) != 3:
            raise argparse.ArgumentTypeError(f"rate triple needs three values, got {part!r}")
        out.append(r)
    if not out:
        raise argparse.ArgumentTypeError("empty rate list")
    return tuple(out)


def parse_cards(text: str) -> tuple[int, int, int]:
    c = parse_int_list(text)
    if len(c) != 3:
        raise argparse.ArgumentTypeError("--cards needs |U|,|V|,|W|")
    return c


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="linecoord", description="Strong coordination over a three-node line network.")
    sub = p.add_subparsers(dest="command", required=True)
    target_help = f"JSON pmf file or builtin ({', '.join(sorted(builtins.TARGETS))}; cascade-bsc:A,B)"

    r = sub.add_parser("region", help="rate-region bounds for a target")
    r.add_argument("--target", required=True, help=target_help)
    r.add_argument("--cards", type=parse_cards, default=None, help="|U|,|V|,|W| for the inner-bound sampler")
    r.add_argument("--samples", type=int, default=20, help="inner-bound members to draw")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--topology", action="store_true", help="require the matched/swapped comparison")
    r.add_argument("--verbose", action="store_true", help="also report the R0 bound without X1")
    r.add_argument("--out", default=None, help="directory for region.json (default: stdout)")

    s = sub.add_parser("simulate", help="seeded sweep of coordination gaps")
    s.add_argument("--target", required=True, help=target_help)
    s.add_argument("--scheme", default="corollary", help="JSON scheme file or builtin name")
    s.add_argument("--n", type=parse_int_list, default=(2, 4, 6, 8), help="blocklengths, e.g. 2,4,6-8")
    s.add_argument("--rates", type=parse_rates, default=("above-resolvability",),
                   help=f"R0,R12,R23 triples separated by ';', or presets {', '.join(RATE_PRESETS)}")
    s.add_argument("--seeds", type=parse_int_list, default=tuple(range(20)), help="codebook seeds, e.g. 0-19")
    s.add_argument("--mode", choices=("exact", "mc"), default="exact")
    s.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials per gap")
    s.add_argument("--budget", type=float, default=None, help="operation budget for exact evaluation")
    s.add_argument("--gaps", default="resolvability,secrecy,protocol", help="comma-separated gap names")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--timing", action="store_true", help="record wall-clock runtime (breaks byte-identical output)")
    s.add_argument("--out", default=None, help="directory for results.csv and reports.json (default: CSV to stdout)")

    i = sub.add_parser("insights", help="common-randomness savings and topology penalty")
    i.add_argument("--target", required=True, help=target_help)
    i.add_argument("--scheme", default="corollary", help="scheme used with --simulate")
    i.add_argument("--simulate", action="store_true", help="add exact gap contrasts above/below the thresholds")
    i.add_argument("--n", type=int, default=8, help="blocklength for --simulate")
    i.add_argument("--seeds", type=parse_int_list, default=tuple(range(20)))
    i.add_argument("--budget", type=float, default=None)
    i.add_argument("--out", default=None, help="directory for insights.json and insights.txt")
    return p


def _write(out, name, text):
    if out is None:
        sys.stdout.write(text)
    else:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text, encoding="utf-8")


def _cmd_region(args) -> int:
    q = load_target(args.target)
    if args.samples < 0:
        raise ConfigError("--samples must be >= 0")
    rep = region_report(q, args.cards, args.samples, args.seed, topology=True if args.topology else None,
                        verbose=args.verbose)
    _write(args.out, "region.json", dumps(rep))
    return EXIT_OK


def _cmd_simulate(args) -> int:
    cfg = ExperimentConfig(
        target=args.target, scheme=args.scheme, n_values=args.n, rates=args.rates, seeds=args.seeds,
        mode=args.mode, trials=args.trials, out_dir=args.out, budget=args.budget, jobs=args.jobs,
        timing=args.timing, gaps=tuple(g.strip() for g in args.gaps.split(",") if g.strip()),
    )
    reports = run_sweep(cfg.validate())
    if args.out is None:
        sys.stdout.write(rows_to_csv([ResultRow.from_report(r) for r in reports]))
    else:
        write_sweep(reports, args.out)
    failed = [r for r in reports if r.errors]
    for r in failed:
        for gap, msg in sorted(r.errors.items()):
            print(f"n={r.config.n} seed={r.seed} {gap}: {msg}", file=sys.stderr)
    return EXIT_BUDGET if failed and cfg.mode == "exact" else EXIT_OK


def _cmd_insights(args) -> int:
    q = load_target(args.target)
    rep = insights_report(q)
    if args.simulate:
        spec = load_scheme(args.scheme, q)
        rep["contrast"] = [c.to_json() for c in gap_contrast(q, spec, args.n, args.seeds, budget=args.budget)]
    text = format_insights(rep)
    if args.out is None:
        sys.stdout.write(text)
    else:
        _write(args.out, "insights.json", dumps(rep))
        _write(args.out, "insights.txt", text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"region": _cmd_region, "simulate": _cmd_simulate, "insights": _cmd_insights}[args.command]
    try:
        return handler(args)
    except ResourceBudgetError as exc:
        print(f"linecoord: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, PreconditionError, ValueError) as exc:
        print(f"linecoord: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
