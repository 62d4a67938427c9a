"""Command line front end.

    explaudit run CONFIG.json --out DIR [--seed S] [--workers N]
    explaudit plot RECORD.json --out DIR
    explaudit bounds --gamma G --eps1 E1 --eps2 E2 --delta D --lambda L [L ...]

Exit codes: 0 the experiment passed (or the command is informational),
2 the experiment ran and its verdict is negative, 1 anything went wrong
(unreadable config or record, violated parameter gate).
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from .auditor import (
    AuditorConfig,
    audit_sample_sizes,
    lower_bound_samples,
    upper_bound_samples,
)
from .errors import ExplauditError
from .harness import ExperimentConfig, ExperimentRecord, plot_record, run_experiment

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="explaudit",
        description="Audit local explanations: run experiments, plot records, "
        "print sample-size bounds.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config", help="path to a JSON experiment config")
    p_run.add_argument("--out", default=".", help="output directory (default: .)")
    p_run.add_argument(
        "--seed", type=int, default=None,
        help="master seed (overrides the config's seed)",
    )
    p_run.add_argument(
        "--workers", type=int, default=None,
        help="worker processes (overrides config and AUDIT_WORKERS)",
    )

    p_plot = sub.add_parser("plot", help="render figures from a record.json")
    p_plot.add_argument("record", help="path to a record.json")
    p_plot.add_argument("--out", default=".", help="output directory (default: .)")

    p_bounds = sub.add_parser(
        "bounds", help="print m, k and the sample-size bounds for given parameters"
    )
    p_bounds.add_argument("--gamma", type=float, required=True)
    p_bounds.add_argument("--eps1", type=float, required=True)
    p_bounds.add_argument("--eps2", type=float, required=True)
    p_bounds.add_argument("--delta", type=float, required=True)
    p_bounds.add_argument(
        "--lambda", dest="lam", type=float, nargs="+", required=True,
        help="locality value(s)",
    )
    p_bounds.add_argument("--csv", default=None, help="also write the table here")
    return parser


def _cmd_run(args):
    config = ExperimentConfig.from_json(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ExplauditError("--workers must be >= 1")
        overrides["workers"] = args.workers
    if overrides:
        config = ExperimentConfig.from_dict({**config.to_dict(), **overrides})
    record = run_experiment(config)
    paths = record.write(args.out)
    verdict = "PASS" if record.passed else "FAIL"
    summary = {
        k: v
        for k, v in record.results.items()
        if isinstance(v, (int, float, str)) and k != "passed"
    }
    print(f"{verdict} {config.kind}: " + json.dumps(summary, sort_keys=True))
    for p in paths:
        print(f"wrote {p}")
    return EXIT_PASS if record.passed else EXIT_FAIL


def _cmd_plot(args):
    text = Path(args.record).read_text()
    record = ExperimentRecord.from_json(text)
    for p in plot_record(record, args.out):
        print(f"wrote {p}")
    return EXIT_PASS


def _cmd_bounds(args):
    cfg = AuditorConfig(
        gamma=args.gamma, eps1=args.eps1, eps2=args.eps2, delta=args.delta
    )
    m, k = audit_sample_sizes(cfg)
    print(f"m (anchors)            = {m}")
    print(f"k (validation/region)  = {k}")
    rows = []
    for lam in args.lam:
        n_up = upper_bound_samples(cfg, lam)
        try:
            n_low = lower_bound_samples(cfg, lam)
            gate = ""
        except ExplauditError as exc:
            n_low = None
            gate = str(exc)
        rows.append((lam, n_up, n_low, gate))
        low_txt = str(n_low) if n_low is not None else f"- ({gate})"
        print(f"lam={lam!r}: sufficient n = {n_up}, necessary n = {low_txt}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh, delimiter=",", lineterminator="\n")
            writer.writerow(["lam", "n_upper", "n_lower", "gate"])
            for lam, n_up, n_low, gate in rows:
                writer.writerow([lam, n_up, "" if n_low is None else n_low, gate])
        print(f"wrote {args.csv}")
    return EXIT_PASS


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "plot":
            return _cmd_plot(args)
        return _cmd_bounds(args)
    except ExplauditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
