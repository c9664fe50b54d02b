"""Command line entry point: ``dynqd run | compare | mec``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import OUTPUT_ENV_VAR, ConfigError, load_config, with_overrides
from .export import (ExportError, comparison_matrix, dumps, format_matrix, load_summary,
                     mec_from_csv, write_run_set)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynqd", description="Dynamic quality-diversity experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config for one or more seeds")
    r.add_argument("config", help="YAML experiment file")
    r.add_argument("--seed", type=int, help="single seed, or first seed with --seeds")
    r.add_argument("--seeds", type=int, help="number of consecutive seeds")
    r.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV_VAR} or ./results)")
    r.add_argument("--smoke", action="store_true", help="short run (200 iterations)")
    r.add_argument("--workers", type=int, default=1, help="parallel processes across seeds")

    c = sub.add_parser("compare", help="Welch tests between run-set summaries")
    c.add_argument("summaries", nargs="+", help="summary.json files")
    c.add_argument("--metric", required=True, help="e.g. survival, mse_obj, mec_50")
    c.add_argument("--out", help="also write the comparison JSON here")

    m = sub.add_parser("mec", help="mean evaluation cost of a per-iteration CSV")
    m.add_argument("csv", help="metrics.csv of one run")
    m.add_argument("--threshold", type=float, required=True, choices=(0.5, 0.75))
    m.add_argument("--period", type=int, help="shift period (default: read shifts.jsonl or 10)")
    m.add_argument("--cost-mode", choices=("interval", "first_hit"), default="interval")
    return p


def _cmd_run(args) -> int:
    from .harness import RunError, run_set

    cfg = with_overrides(load_config(args.config), args.seed, args.seeds, args.out, args.smoke)
    out = cfg.resolved_output_dir()
    try:
        records = run_set(cfg, workers=args.workers)
    except RunError as exc:
        if exc.partial is not None and exc.partial.rows:
            from .export import write_run
            d = write_run(exc.partial, out / cfg.name / f"seed_{exc.partial.seed}.failed")
            (d / "error.txt").write_text(str(exc) + "\n")
        raise
    base = write_run_set(records, out, cfg.name)
    summary = json.loads((base / "summary.json").read_text())
    t = summary["table"]
    print(f"{cfg.name}: {len(records)} run(s) -> {base}")
    for key in ("survival", "mec_50", "mec_75"):
        v = t[key]
        ci = "" if v["ci95"] is None else f" +- {v['ci95']:.4g}"
        val = "null" if v["mean"] is None else f"{v['mean']:.4g}"
        print(f"  {key}: {val}{ci}")
    return 0


def _cmd_compare(args) -> int:
    summaries = [load_summary(p) for p in args.summaries]
    cmp = comparison_matrix(summaries, args.metric)
    sys.stdout.write(format_matrix(cmp))
    if args.out:
        try:
            Path(args.out).write_text(dumps(cmp) + "\n")
        except OSError as exc:
            raise ExportError(f"cannot write {args.out}: {exc}") from None
    return 0


def _cmd_mec(args) -> int:
    period = args.period
    if period is None:
        period = 10
        log = Path(args.csv).with_name("shifts.jsonl")
        if log.exists():
            its = [json.loads(line)["iteration"] for line in log.read_text().splitlines() if line]
            if len(its) >= 1:
                period = its[0]
    res = mec_from_csv(args.csv, args.threshold, period, args.cost_mode)
    print(dumps(res))
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    handler = {"run": _cmd_run, "compare": _cmd_compare, "mec": _cmd_mec}[args.command]
    try:
        return handler(args)
    except (ConfigError, ExportError, ValueError, LookupError, RuntimeError, OSError) as exc:
        print(f"dynqd {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
