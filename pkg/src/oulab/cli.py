"""Command line: ``oulab run|presets|derive|resolvent-sum``."""

from __future__ import annotations

import argparse
import json
import sys

from .presets import list_presets
from .sampling import set_threads
from .scenario import EXIT_PARSE, jsonable, run, run_resolvent


def _common(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default, help="override the scenario seed")
    common.add_argument("--out", default=default, help="output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, default=default,
                        help="sampling threads (fallback: OU_LAB_THREADS, then 1)")
    return common


def build_parser() -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; SUPPRESS keeps the
    # subcommand copy from clobbering a value given before it
    common = _common(argparse.SUPPRESS)
    parser = argparse.ArgumentParser(prog="oulab", parents=[_common(None)],
                                     description="Ornstein-Uhlenbeck semigroup laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run a scenario and write report.json")
    p.add_argument("config")
    sub.add_parser("presets", parents=[common], help="list shipped presets")
    p = sub.add_parser("derive", parents=[common], help="derivation block only")
    p.add_argument("config")
    p = sub.add_parser("resolvent-sum", parents=[common], help="contour resolvent of a Kronecker sum")
    p.add_argument("config")
    return parser


def _summary(report) -> str:
    data = report.data
    if "error" in data:
        return f"{data['error']['type']}: {data['error']['message']}"
    lines = [f"scenario {data.get('scenario', '')}: {data.get('status', 'derived')}"]
    for rec in data.get("experiments", []):
        mark = {True: "pass", False: "FAIL", None: "info"}[rec["passed"]]
        extra = f" ({rec['error']['message']})" if "error" in rec else ""
        lines.append(f"  [{mark}] {rec['index']:02d} {rec['kind']}{extra}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    # None defers to OU_LAB_THREADS inside the sampler
    set_threads(args.threads)
    if args.command == "presets":
        print(json.dumps(list_presets(), indent=2))
        return 0
    if args.command == "resolvent-sum":
        data, code = run_resolvent(args.config, out=args.out)
        print(json.dumps(jsonable(data), indent=2))
        return code
    report = run(args.config, seed=args.seed, out=args.out, derivation_only=args.command == "derive")
    if args.command == "derive" and "derivation" in report.data:
        print(json.dumps(jsonable({k: report.data[k] for k in ("scenario", "model", "derivation", "conditions")}),
                     indent=2))
    else:
        print(_summary(report), file=sys.stderr if report.exit_code == EXIT_PARSE else sys.stdout)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
