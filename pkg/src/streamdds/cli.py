"""Command-line front end: compile/explain topologies, dump plans, run benches.

Exit codes: 0 success, 1 validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bench as bench_mod
from .msgdef import MessageDefinitionError, flatten, load_msg_tree
from .runtime import DATAFLOW, SEQUENTIAL
from .topology import ConfigParseError, TopologyError, build_topology, explain, parse_config, validate

DEFAULT_SIZES = "3k,12k,50k,196k,786k,3146k"


class CliError(Exception):
    """Fatal validation-level failure (exit code 1)."""


def _read_text(path: str) -> str:
    try:
        with open(path) as f:
            return f.read()
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror}") from None


def _load_registry(msg_dir: str):
    try:
        return load_msg_tree(msg_dir).resolve()
    except (OSError, MessageDefinitionError) as e:
        raise CliError(f"message definitions: {e}") from None


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        with open(out_path, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _compile_graph(config_path: str, msg_dir: str):
    registry = _load_registry(msg_dir)
    try:
        spec = parse_config(_read_text(config_path))
        graph = build_topology(spec, registry, strict=False)
    except (ConfigParseError, TopologyError) as e:
        raise CliError(str(e)) from None
    return graph, validate(graph)


def cmd_compile(args) -> int:
    graph, diagnostics = _compile_graph(args.config, args.msg_dir)
    _emit(json.dumps(graph.to_json(), indent=2) + "\n", args.output)
    fatal = False
    for d in diagnostics:
        print(d, file=sys.stderr)
        fatal = fatal or d.severity == "error"
    return 1 if fatal else 0


def cmd_explain(args) -> int:
    graph, diagnostics = _compile_graph(args.config, args.msg_dir)
    text = explain(graph)
    _emit(text + "\n" if text else "", args.output)
    for d in diagnostics:
        print(d, file=sys.stderr)
    return 1 if any(d.severity == "error" for d in diagnostics) else 0


def cmd_plan(args) -> int:
    registry = _load_registry(args.msg_dir)
    if args.type_name not in registry:
        raise CliError(f"unknown type {args.type_name!r}")
    plan = flatten(registry, args.type_name)
    _emit(json.dumps(plan.to_json(), indent=2) + "\n", args.output)
    return 0


def _sizes_arg(text: str) -> list[int]:
    return [bench_mod.parse_size(tok) for tok in text.split(",") if tok.strip()]


def _counts_arg(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _run_bench(args) -> bench_mod.BenchReport:
    if args.scenario == "transfer":
        return bench_mod.bench_transfer(args.sizes, args.reps, args.subject, args.seed)
    if args.scenario == "fanout":
        return bench_mod.bench_fanout(args.subs, args.size, args.reps, args.subject, args.seed)
    return bench_mod.bench_chain(
        mode=args.mode,
        subject=args.subject,
        reps=args.reps,
        image_elems=args.image_elems,
        passes=args.passes,
        seed=args.seed,
    )


def cmd_bench(args) -> int:
    report = _run_bench(args)
    _emit(bench_mod.emit_report(report, args.format), args.output)
    return 0


def _add_bench_flags(p: argparse.ArgumentParser, *, chain_only: bool = False) -> None:
    p.add_argument("--reps", type=int, default=1000, help="repetitions per configuration")
    p.add_argument(
        "--subject",
        choices=[bench_mod.BASELINE, bench_mod.STREAMING, bench_mod.BOTH],
        default=bench_mod.BOTH,
    )
    p.add_argument("--format", choices=["csv", "json", "markdown"], default="markdown")
    p.add_argument("--seed", type=int, default=0, help="seed for generated payloads")
    p.add_argument("-o", "--output", default=None, help="write the report to a file")
    if chain_only:
        p.add_argument("--mode", choices=[SEQUENTIAL, DATAFLOW], default=SEQUENTIAL)
        p.add_argument(
            "--image-elems",
            type=int,
            default=6000,
            dest="image_elems",
            help="desk-scaled element count of the 1000x600 image analog",
        )
        p.add_argument("--passes", type=int, default=1, help="arithmetic passes per stage")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamdds",
        description="Static streaming pub/sub: topology compiler, plan dumper, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a config into a topology JSON")
    p.add_argument("config")
    p.add_argument("--msg-dir", required=True, dest="msg_dir")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("explain", help="render a topology as text")
    p.add_argument("config")
    p.add_argument("--msg-dir", required=True, dest="msg_dir")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("plan", help="dump a type's serialization plan as JSON")
    p.add_argument("type_name")
    p.add_argument("--msg-dir", required=True, dest="msg_dir")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bench", help="run a benchmark scenario")
    scen = p.add_subparsers(dest="scenario", required=True)

    pt = scen.add_parser("transfer", help="transfer time over a size ladder")
    pt.add_argument("--sizes", type=_sizes_arg, default=_sizes_arg(DEFAULT_SIZES))
    _add_bench_flags(pt)
    pt.set_defaults(func=cmd_bench)

    pf = scen.add_parser("fanout", help="transfer time vs subscriber count")
    pf.add_argument("--subs", type=_counts_arg, default=[1, 2, 4])
    pf.add_argument("--size", type=bench_mod.parse_size, default=12 * 1024)
    _add_bench_flags(pf)
    pf.set_defaults(func=cmd_bench)

    pc = scen.add_parser("chain", help="five-stage pipeline latency")
    _add_bench_flags(pc, chain_only=True)
    pc.set_defaults(func=cmd_bench, scenario="chain")

    p = sub.add_parser("chain-demo", help="five-stage pipeline latency (bench chain alias)")
    _add_bench_flags(p, chain_only=True)
    p.set_defaults(func=cmd_bench, scenario="chain")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MessageDefinitionError, TopologyError, ConfigParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
