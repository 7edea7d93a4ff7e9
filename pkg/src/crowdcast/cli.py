"""``crowdcast`` command line.

Exit codes: 0 success, 1 configuration problem, 2 ingest failure, 3 any
later stage failing.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ENRICHMENT, MODELS, PROFILES, TASKS, ConfigError, RunConfig, apply_overrides, load_config
from .pipeline import STAGES, StageError, run_pipeline, run_stage


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run options (override the config file)")
    g.add_argument("--config", help="flat key = value config file")
    g.add_argument("--input", help="campaign CSV dump")
    g.add_argument("--econ-table", dest="econ_table", help="GDP/HDI reference CSV (bundled table if omitted)")
    g.add_argument("--output-dir", "-o", dest="output_dir", help="run directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--partitions", type=int)
    g.add_argument("--workers", type=int)
    g.add_argument("--task", type=str.upper, choices=TASKS)
    g.add_argument("--model", choices=MODELS + ("all",))
    g.add_argument("--profile", choices=PROFILES)
    g.add_argument("--enrichment", choices=ENRICHMENT)
    g.add_argument("--test-fraction", dest="test_fraction", type=float)
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="crowdcast", description="Crowdfunding outcome modelling pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "ingest": "parse the CSV dump into records.csv and rejections.jsonl",
        "clean": "apply consistency rules and write cleaned.csv",
        "insights": "state distribution, threshold curves and yearly totals",
        "prepare": "enrich, featurize, split, weights and standardizer",
        "train": "train the selected model(s)",
        "evaluate": "score models on the test split and write the manifest",
        "pipeline": "run every stage in order",
    }
    for name in STAGES + ("pipeline",):
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


_FLAG_KEYS = ("input", "econ_table", "output_dir", "seed", "partitions", "workers", "task", "model", "profile",
              "enrichment", "test_fraction")


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    apply_overrides(cfg, {k: getattr(args, k) for k in _FLAG_KEYS})
    return cfg.validate(check_paths=args.command in ("ingest", "pipeline"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        if args.command == "pipeline":
            manifest = run_pipeline(cfg)
            print(open(f"{cfg.output_dir}/metrics_table.txt", encoding="utf-8").read(), end="")
            print(f"manifest_hash {manifest['manifest_hash']}")
        else:
            result = run_stage(cfg, args.command)
            if args.command == "evaluate":
                print(open(f"{cfg.output_dir}/metrics_table.txt", encoding="utf-8").read(), end="")
                print(f"manifest_hash {result['manifest_hash']}")
            else:
                print(json.dumps(result, indent=2, sort_keys=True, default=str))
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
