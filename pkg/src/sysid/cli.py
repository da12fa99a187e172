"""Command line interface: ``sysid run | plot | verdict | config``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from sysid.harness import (
    ExperimentConfig,
    VerdictUnavailable,
    mismatch_verdict,
    read_records,
    run_to_dir,
    summarize,
    summary_to_csv,
)
from sysid.systems import CASE_NAMES


def _cmd_run(args) -> int:
    overrides = {
        "case": args.case,
        "seeds": args.seeds,
        "iterations": args.iterations,
        "warmup_iters": args.warmup,
        "workers": args.workers,
        "rng_seed": args.rng_seed,
    }
    if args.config:
        config = ExperimentConfig.from_file(args.config, **overrides)
    else:
        config = ExperimentConfig.from_mapping({k: v for k, v in overrides.items() if v is not None})
    records = run_to_dir(config, args.out, plots=not args.no_plots)
    failed = sorted({r.seed for r in records if r.status != "ok"})
    print(f"{config.case}: {len(records)} records written to {args.out}"
          + (f" ({len(failed)} failed seeds)" if failed else ""))
    return 0


def _load_meta(in_dir: Path) -> dict:
    path = in_dir / "meta.json"
    return json.loads(path.read_text()) if path.exists() else {}


def _cmd_plot(args) -> int:
    from sysid.plotting import render_all

    in_dir, out_dir = Path(args.in_dir), Path(args.out)
    records = read_records(in_dir / "records.csv")
    meta = _load_meta(in_dir)
    case = meta.get("case", {})
    summary = summarize(records)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "summary.csv").write_text(summary_to_csv(summary))
    written = render_all(records, summary, out_dir, case_name=case.get("name", ""),
                         theta_true=case.get("theta_true"), seed=args.seed)
    for path in written:
        print(path)
    return 0


def _cmd_verdict(args) -> int:
    in_dir = Path(args.in_dir)
    records = read_records(in_dir / "records.csv")
    meta = _load_meta(in_dir)
    if meta.get("config", {}).get("warmup_iters", 0) == 0:
        print("warning: run had no warm-up; iteration 1 may still be a calibration transient",
              file=sys.stderr)
    try:
        verdict = mismatch_verdict(records)
    except VerdictUnavailable as exc:
        print(f"verdict unavailable: {exc}", file=sys.stderr)
        return 2
    print(verdict)
    return 0


def _cmd_config(args) -> int:
    print(ExperimentConfig().to_text(), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sysid", description="Active Bayesian system identification experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded experiments and write records, summary and figures")
    run.add_argument("--case", choices=CASE_NAMES, help="benchmark case (overrides the config file)")
    run.add_argument("--config", help="key = value config file with an [experiment] section")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seeds", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--warmup", type=int, help="inner passes on the fixed data before iteration 1")
    run.add_argument("--workers", type=int, help="parallel worker processes over seeds")
    run.add_argument("--rng-seed", type=int, dest="rng_seed")
    run.add_argument("--no-plots", action="store_true")
    run.set_defaults(func=_cmd_run)

    plot = sub.add_parser("plot", help="render figures from a run directory")
    plot.add_argument("--in", dest="in_dir", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--seed", type=int, default=0, help="seed shown in trajectory/input plots")
    plot.set_defaults(func=_cmd_plot)

    verdict = sub.add_parser("verdict", help="judge model-family adequacy from a run directory")
    verdict.add_argument("--in", dest="in_dir", required=True)
    verdict.set_defaults(func=_cmd_verdict)

    config = sub.add_parser("config", help="print configuration")
    config.add_argument("--defaults", action="store_true", required=True, help="print all defaults")
    config.set_defaults(func=_cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
