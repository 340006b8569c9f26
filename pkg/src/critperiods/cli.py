"""Command-line entry point: ``critperiods run|sweep|list-presets``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .experiments import (EXIT_CONFIG, OUT_ENV, error_category, execute, load_config,
                          preset_descriptions)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="critperiods",
        description="Run critical-period experiments on deep linear networks.",
        epilog=f"Output goes to --out, else ${OUT_ENV}, else ./runs.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one config (file path or preset name)")
    run.add_argument("config")
    run.add_argument("--fast", action="store_true", help="apply the config's fast overrides")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--out", default=None, help="output root directory")
    sw = sub.add_parser("sweep", help="run every cell of a config's sweep axes")
    sw.add_argument("config")
    sw.add_argument("--jobs", type=int, default=1, help="cells run in parallel")
    sw.add_argument("--fast", action="store_true")
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--out", default=None)
    sub.add_parser("list-presets", help="list bundled configs")
    return ap


def _fail(category: str, message: str, status: int) -> int:
    print(json.dumps({"error": category, "message": message}), file=sys.stderr)
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        for name, desc in preset_descriptions().items():
            print(f"{name}\t{desc}")
        return 0
    try:
        cfg = load_config(args.config, fast=args.fast, seed=args.seed)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    jobs = getattr(args, "jobs", 1)
    if jobs < 1:
        return _fail("config", "--jobs must be at least 1", EXIT_CONFIG)
    try:
        summary, status = execute(cfg, args.out, jobs)
    except Exception as exc:
        category, status = error_category(exc)
        return _fail(category, str(exc), status)
    if status:
        failed = [c for c in summary.get("cells", [summary]) if c.get("status")]
        return _fail(failed[0]["error"], failed[0]["message"], status)
    brief = {"name": summary["name"], "digest": summary["digest"]}
    if "aggregate" in summary:
        brief["aggregate"] = summary["aggregate"]
    else:
        brief["metrics"] = summary.get("metrics", {})
    print(json.dumps(brief))
    return 0


if __name__ == "__main__":
    sys.exit(main())
