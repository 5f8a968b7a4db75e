"""gafcells command line."""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .bounds import (
    SUPPORTED,
    ConstraintReport,
    LifetimeRow,
    Protocol,
    SubcellRegime,
    Table1Row,
    lifetime_table,
    max_cell,
    table1,
)
from .config import SCHEMA, ConfigError, describe_keys, load_config
from .geometry import ShapeKind
from .partition import Partition, partition_text
from .serialize import dumps
from .sim import compare_lifetimes, run, timeseries_csv
from .verify import VerificationReport, verify_lemma1, verify_metrics, verify_worst_case


class CliError(Exception):
    pass


def _samples(text: str) -> int:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if value != int(value):
        raise argparse.ArgumentTypeError(f"sample count must be whole: {text!r}")
    return int(value)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.6g}"
    return str(getattr(x, "value", x))


def _table(header, rows) -> str:
    cells = [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    return "\n".join(lines) + "\n"


def _emit(args, obj, header, rows, kind=None) -> None:
    if args.json:
        sys.stdout.write(dumps(obj, kind) + "\n")
    elif args.csv:
        sys.stdout.write(_csv_text(header, [[getattr(c, "value", c) for c in r] for r in rows]))
    else:
        sys.stdout.write(_table(header, rows))


def _need_seed(args) -> int:
    if args.seed is None:
        if args.strict_seed:
            raise CliError("--strict-seed: this command needs an explicit --seed")
        return 0
    return args.seed


# ---------------------------------------------------------------------------


def cmd_bounds(args) -> int:
    regime = SubcellRegime() if args.subcell is None else SubcellRegime.finite(args.subcell)
    rep: ConstraintReport = max_cell(args.protocol, args.shape, args.range, regime)
    header = ["field", "value"]
    rows = [
        ("protocol", rep.protocol.value),
        ("shape", rep.kind.value),
        ("R", rep.R),
        ("subcell", rep.subcell),
        ("req1_max_size", rep.req1_max_size),
        ("req2_max_size", rep.req2_max_size),
        ("binding", rep.binding.value),
        ("combined_max_size", rep.combined_max_size),
        ("max_cell_measure", rep.max_cell_measure),
        ("paper_measure", rep.paper_measure),
        ("paper_agreement", rep.paper_agreement),
        ("agreement_detail", rep.agreement_detail or None),
    ]
    if rep.subcell_quotient is not None:
        rows += [("subcell_quotient", rep.subcell_quotient), ("admissible_size", rep.admissible_size)]
    _emit(args, rep, header, rows)
    return 0


def cmd_table(args) -> int:
    if args.which == 1:
        data: list[Table1Row] = table1(args.range)
        rows = [(r.label, r.protocol.value, r.kind.value, r.measure) for r in data]
        _emit(args, data, ["row", "protocol", "shape", "max_measure"], rows, "Table1")
    else:
        data2: list[LifetimeRow] = lifetime_table(args.range, args.paper_values)
        rows = [(r.kind.value, r.measure, round(r.percent, 1)) for r in data2]
        _emit(args, data2, ["shape", "measure", "percent_of_bound"], rows, "Table2")
    return 0


def cmd_verify(args) -> int:
    seed = _need_seed(args)
    samples = args.samples
    if args.target == "metrics":
        kinds = None if args.shape is None else [args.shape]
        report = verify_metrics(kinds, samples or 10**6, seed)
    elif args.target == "lemma1":
        ns = (1, 2, 3) if args.n is None else (args.n,)
        report = verify_lemma1(ns, args.range, samples or 10**7, seed)
    else:
        regime = SubcellRegime() if args.subcell is None else SubcellRegime.finite(args.subcell)
        pairs = [
            (p, k)
            for p, kinds in SUPPORTED.items()
            for k in kinds
            if (args.protocol is None or p is args.protocol) and (args.shape is None or k is args.shape)
        ]
        if not pairs:
            raise CliError("no supported protocol/shape pair matches the filters")
        checks = []
        for p, k in pairs:
            sub = verify_worst_case(p, k, args.range, regime, samples or 10**5, seed)
            checks += [type(c)(f"{p.value}.{k.value}.{c.name}", c.expected, c.observed, c.rtol, c.relation) for c in sub.checks]
        report = VerificationReport("worst-case", sub.samples, seed, checks)
    rows = [(c.name, c.expected, c.observed, c.rel_error, "pass" if c.passed else "FAIL") for c in report.checks]
    _emit(args, report, ["check", "expected", "observed", "rel_error", "result"], rows)
    return 0 if report.passed else 1


def _overrides(args) -> dict[str, str]:
    out = {}
    for k in SCHEMA:
        v = getattr(args, k.dotted.replace(".", "__"), None)
        if v is not None:
            out[k.dotted] = v
    return out


def cmd_simulate(args) -> int:
    out = Path(args.out)
    overrides = _overrides(args)
    if args.seed is None and args.strict_seed:
        raise CliError("--strict-seed: this command needs an explicit --seed")
    if args.seed is not None:
        overrides["sim.seed"] = str(args.seed)
    if args.compare:
        paths = [p for p in args.compare.split(",") if p]
        configs = [load_config(p, overrides=overrides) for p in paths]
        seeds = list(range(configs[0].seed, configs[0].seed + args.seeds))
        cmp = compare_lifetimes(configs, seeds, [Path(p).stem for p in paths], workers=args.workers)
        ref = max(range(len(configs)), key=lambda i: cmp.measures[i])
        rows = []
        for i, label in enumerate(cmp.labels):
            if i == ref:
                rows.append((label, cmp.measures[i], cmp.mean_lifetimes[i], 1.0, 1.0, 1.0, 1.0))
            else:
                r = cmp.ratio(i, ref)
                rows.append((label, cmp.measures[i], cmp.mean_lifetimes[i], r.measured, r.ci_low, r.ci_high, r.predicted))
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.json").write_text(dumps(cmp) + "\n")
        _emit(args, cmp, ["config", "cell_measure", "mean_lifetime", "ratio", "ci_low", "ci_high", "predicted"], rows)
        return 0
    if args.config is None:
        raise CliError("simulate needs a CONFIG file or --compare")
    base = load_config(args.config, overrides=overrides)
    seeds = list(range(base.seed, base.seed + args.seeds))
    out.mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    for s in seeds:
        rep = run(replace(base, seed=s))
        reports.append(rep)
        suffix = "" if len(seeds) == 1 else f"_{s}"
        (out / f"report{suffix}.json").write_text(dumps(rep) + "\n")
        (out / f"timeseries{suffix}.csv").write_text(timeseries_csv(rep))
        rows.append((s, rep.lifetime_first_cell_death, rep.censored, rep.lifetime_model_estimate, rep.req1_pass_rate, rep.req2_pass_rate))
    if not args.json:
        _emit(args, None, ["seed", "lifetime", "censored", "model_estimate", "req1_pass", "req2_pass"], rows)
    else:
        sys.stdout.write(dumps(reports if len(reports) > 1 else reports[0]) + "\n")
    return 0


def cmd_export_partition(args) -> int:
    cfg = load_config(args.config, overrides=_overrides(args))
    text = partition_text(Partition(cfg.field, cfg.scheme))
    Path(args.out).write_text(text)
    n = sum(1 for line in text.splitlines() if line and not line.startswith("#"))
    print(f"wrote {n} cells to {args.out}")
    return 0


# ---------------------------------------------------------------------------


def _add_output(p) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true", help="machine-readable JSON (versioned)")
    g.add_argument("--csv", action="store_true", help="CSV with header row")


def _add_config_flags(p) -> None:
    g = p.add_argument_group("configuration keys (override file and environment)")
    for k in SCHEMA:
        g.add_argument(
            k.flag,
            dest=k.dotted.replace(".", "__"),
            metavar="VALUE",
            help=f"{k.help} [{k.unit}; default {k.default or 'empty'}]",
        )


def build_parser() -> argparse.ArgumentParser:
    epilog = (
        "configuration keys ([section] key (unit, default)); environment variables\n"
        "GAFCELLS_<SECTION>_<KEY> override the file, flags override both:\n" + describe_keys()
    )
    parser = argparse.ArgumentParser(
        prog="gafcells",
        description="Maximum GAF/HGAF/eHGAF cell sizes, verification and lifetime simulation.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--strict-seed", action="store_true", help="require --seed for randomized commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="maximum cell size for a protocol/shape pair")
    p.add_argument("--protocol", type=Protocol, required=True, choices=list(Protocol), metavar="{gaf,hgaf,ehgaf}")
    p.add_argument("--shape", type=ShapeKind, required=True, choices=list(ShapeKind), metavar="SHAPE")
    p.add_argument("--range", type=float, default=1.0, help="communication range R")
    p.add_argument("--subcell", type=float, default=None, help="finite subcell size d (default: infinitesimal)")
    _add_output(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("table", help="reproduce the cell-size (1) or lifetime (2) table")
    p.add_argument("--which", type=int, choices=(1, 2), required=True)
    p.add_argument("--range", type=float, default=1.0)
    p.add_argument("--paper-values", action="store_true", help="table 2: use the published cell measures")
    _add_output(p)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("verify", help="check closed forms against sampled geometry")
    p.add_argument("--target", choices=("metrics", "worst-case", "lemma1"), default="metrics")
    p.add_argument("--samples", type=_samples, default=None, help="sample count, e.g. 1e6 (minimum 1e4)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="lemma1: chain length (default 1, 2 and 3)")
    p.add_argument("--shape", type=ShapeKind, default=None, choices=list(ShapeKind), metavar="SHAPE")
    p.add_argument("--protocol", type=Protocol, default=None, choices=list(Protocol), metavar="PROTOCOL")
    p.add_argument("--subcell", type=float, default=None, help="worst-case: finite subcell size d")
    p.add_argument("--range", type=float, default=1.0)
    _add_output(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="run the duty-cycling simulation", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config", nargs="?", help="INI configuration file")
    p.add_argument("--seed", type=int, default=None, help="first deployment seed")
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--compare", default=None, help="comma-separated config files to compare")
    p.add_argument("--workers", type=int, default=None, help="parallel processes for --compare")
    _add_output(p)
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-partition", help="write cell geometry as plain text", epilog=epilog,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config", help="INI configuration file")
    p.add_argument("--out", required=True, help="output file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_export_partition)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "samples", None) is not None and args.samples < 10_000:
        parser.exit(2, f"gafcells: error: --samples {args.samples} is below the minimum of 10000\n")
    try:
        return args.func(args)
    except (CliError, ConfigError, ValueError, OSError) as exc:
        print(f"gafcells: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
