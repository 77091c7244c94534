"""Command-line entry point: ``hypfew {verify,concentration,train,compare}``.

Exit codes: 0 success, 1 invariant failure, 2 configuration or usage error,
3 numeric or training failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .concentration import concentration_sweep
from .config import RunConfig, load_comparison, load_config
from .errors import ConfigError, DomainError, NumericError, QuadratureError, TrainingError
from .harness import run
from .verify import run_all

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

REPORT_FIELDS = ("space", "d", "param", "test_acc", "ci95", "r_min", "r_avg", "r_max",
                 "episodes", "seconds")
COMPARE_FIELDS = REPORT_FIELDS + ("seed", "saturation")
MAX_PRINTED_FAILURES = 5

log = logging.getLogger("hypfew")


def fmt(value):
    """Six significant digits for reals, plain text otherwise; None is empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format(value, ".6g")
    try:
        return format(float(value), ".6g")
    except (TypeError, ValueError):
        return str(value)


def csv_row(values):
    return ",".join(fmt(v) for v in values)


def report_row(report, fields=REPORT_FIELDS):
    return csv_row(getattr(report, name) for name in fields)


def report_document(report, cfg):
    lines = [f"{name}: {fmt(getattr(report, name))}" for name in REPORT_FIELDS]
    lines.append(f"seed: {report.seed}")
    if report.saturation is not None:
        lines.append(f"saturation: {fmt(report.saturation)}")
    lines.append(f"eval_episodes: {cfg.eval_episodes}")
    return "\n".join(lines) + "\n"


def append_csv(path, header, rows):
    """Append rows, writing the header first if the file is new or empty."""
    fresh = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", encoding="utf-8", newline="") as fh:
        if fresh:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(row + "\n")


def _parse_d_list(text):
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"--d expects a comma-separated list of integers, got {text!r}", "d") from None
    if not values or any(v < 1 for v in values):
        raise ConfigError("--d values must be positive integers", "d")
    return values


def _apply_overrides(cfg, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.k is not None:
        changes["k"] = args.k
    if args.r is not None:
        changes["r"] = args.r
    if args.d is not None:
        ds = _parse_d_list(args.d)
        if len(ds) != 1:
            raise ConfigError("train takes a single --d value", "d")
        changes["d"] = ds[0]
    return cfg.replace(**changes) if changes else cfg


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_verify(args, out):
    seed = 0 if args.seed is None else args.seed
    results = run_all(seed=seed, tolerance_scale=args.tolerance_scale)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "ok" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  {r.passed}/{r.total}  {status}", file=out)
        for failure in r.failures[:MAX_PRINTED_FAILURES]:
            print(f"    failed: {failure}", file=out)
    n_ok = sum(r.ok for r in results)
    print(f"{n_ok}/{len(results)} suites passed", file=out)
    return EXIT_OK if n_ok == len(results) else EXIT_INVARIANT


def cmd_concentration(args, out):
    ds = _parse_d_list(args.d) if args.d is not None else [2 ** i for i in range(11)]
    k = -1.0 if args.k is None else args.k
    r = 1.0 if args.r is None else args.r
    rows = concentration_sweep(ds, k, r)
    lines = ["d,ratio,bound"] + [csv_row(row) for row in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)
    bad = [row for row in rows if row.ratio > row.bound]
    for row in bad:
        print(f"bound violated: d={row.d} ratio={row.ratio!r} bound={row.bound!r}", file=sys.stderr)
    return EXIT_INVARIANT if bad else EXIT_OK


def cmd_train(args, out):
    cfg = load_config(args.config) if args.config else RunConfig()
    cfg = _apply_overrides(cfg, args)
    report, _ = run(cfg)
    document = report_document(report, cfg)
    with open(args.out or cfg.output, "w", encoding="utf-8") as fh:
        fh.write(document)
    append_csv(args.csv or cfg.csv, REPORT_FIELDS, [report_row(report)])
    out.write(document)
    return EXIT_OK


def cmd_compare(args, out):
    if not args.config:
        raise ConfigError("compare needs --config with a base document and space entries", "config")
    with open(args.config, encoding="utf-8") as fh:
        base, entries = load_comparison(fh.read())
    if args.seed is not None:
        entries = [e.replace(seed=args.seed) for e in entries]
    rows = []
    for cfg in entries:
        report, _ = run(cfg)
        rows.append(report_row(report, COMPARE_FIELDS))
        print(rows[-1], file=sys.stderr)
    text = ",".join(COMPARE_FIELDS) + "\n" + "\n".join(rows) + "\n"
    path = args.csv or args.out
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    out.write(text)
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "concentration": cmd_concentration,
    "train": cmd_train,
    "compare": cmd_compare,
}


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="hypfew", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "verify": "run the geometry and loss invariant suites",
        "concentration": "tabulate V/A against r/d as CSV",
        "train": "train and evaluate one configuration",
        "compare": "run several spaces on identical episode streams",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="key: value configuration file")
        p.add_argument("--out", help="output path (report document, or CSV for sweeps)")
        p.add_argument("--csv", help="CSV path for train/compare rows")
        p.add_argument("--seed", type=_seed)
        p.add_argument("--d", help="dimension, or comma-separated list for concentration")
        p.add_argument("--k", type=float, help="curvature (negative)")
        p.add_argument("--r", type=float, help="radius")
        # test hook: scales every verify tolerance (0 forces failures)
        p.add_argument("--tolerance-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None, out=None):
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        field = f" (field: {exc.field})" if getattr(exc, "field", None) else ""
        print(f"configuration error{field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrainingError, NumericError, QuadratureError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DomainError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
