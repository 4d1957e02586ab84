"""Command line entry point: ``opshift <kind> --config FILE [overrides]``."""

from __future__ import annotations

import argparse
import json
import sys

from .campaign import DEFAULT_TOLERANCES, KINDS, ExperimentConfig, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="opshift",
        description="Run a seeded experiment campaign and emit machine-readable reports.",
    )
    parser.add_argument("kind", choices=KINDS, help="experiment kind")
    parser.add_argument("--config", help="JSON config file (kind inside must match)")
    parser.add_argument("--seed", type=int, help="override the campaign seed")
    parser.add_argument("--out", help="override the output directory")
    parser.add_argument("--trials", type=int, help="override the trial count")
    parser.add_argument(
        "--tol",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help=f"override a tolerance; keys: {', '.join(sorted(DEFAULT_TOLERANCES))}",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config:
        with open(args.config) as f:
            data = json.load(f)
        if data.get("kind", args.kind) != args.kind:
            print(f"config kind {data.get('kind')!r} does not match {args.kind!r}", file=sys.stderr)
            return 2
        data["kind"] = args.kind
    else:
        data = {"kind": args.kind}
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["out"] = args.out
    if args.trials is not None:
        data["trials"] = args.trials
    if args.tol:
        tols = dict(data.get("tolerances", {}))
        for item in args.tol:
            key, _, value = item.partition("=")
            if not value:
                print(f"bad --tol override {item!r}; expected KEY=VALUE", file=sys.stderr)
                return 2
            tols[key] = float(value)
        data["tolerances"] = tols
    try:
        cfg = ExperimentConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(cfg)
    agg = report.aggregate
    print(
        f"{cfg.kind}: {agg['passes']} pass / {agg['failures']} fail / {agg['skips']} skip"
        + (f"; unmet expectations: {agg['expect_failures']}" if agg["expect_failures"] else "")
    )
    for record in report.records:
        if record["status"] == "fail":
            detail = record["error"] or ", ".join(
                name for name, ok in record["checks"].items() if not ok
            )
            print(f"  trial {record['trial']}: FAIL ({detail})")
    return 0 if agg["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
