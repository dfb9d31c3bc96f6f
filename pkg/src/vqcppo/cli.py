"""Command line: ``vqcppo {train,params,analyze,aggregate}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ConfigurationError


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="vqcppo")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("train", help="train every seed of a config and aggregate")
    p.add_argument("config")
    p.add_argument("--output-root", default=None, help=f"overrides ${harness.OUTPUT_ROOT_ENV}")
    p.add_argument("--reuse", action="store_true", help="keep seed results produced by the same config and code")
    p = sub.add_parser("params", help="trainable parameter breakdown")
    p.add_argument("config")
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("analyze", help="dead-parameter and variance scans")
    p.add_argument("config")
    p.add_argument("--json", action="store_true")
    p = sub.add_parser("aggregate", help="mean/std across seed CSVs in a directory")
    p.add_argument("directory")
    p.add_argument("--no-plot", action="store_true")
    p.add_argument("--solved-threshold", type=float, default=None)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        if args.cmd == "aggregate":
            path = harness.aggregate(args.directory, plot=not args.no_plot, solved_threshold=args.solved_threshold)
            print(path)
            return 0
        cfg = harness.load_config(args.config)
        if args.cmd == "train":
            res = harness.run_experiment(cfg, root=args.output_root, reuse=args.reuse)
            for p in res["seeds"]:
                print(p)
            print(res["aggregate"])
        elif args.cmd == "params":
            rep = harness.report_parameters(cfg)
            print(json.dumps(rep, indent=2) if args.json else harness.format_parameter_report(rep))
        else:
            rep = harness.analyze_circuit(cfg)
            print(json.dumps(rep, indent=2) if args.json else harness.format_analysis(rep))
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
