"""Command-line entry point: ``hamster {run,sweep,model,compare,fuzz}``.

Output files go to ``$HAMSTER_OUTPUT_DIR`` (default: current directory).
Exit status is 0 when every invariant held, 1 when a run violated one and
2 on configuration errors.
"""

import argparse
import dataclasses
import json
import math
import os
import sys

from . import perf
from .harness import (
    CSV_HEADER,
    ScenarioConfig,
    ScenarioError,
    compare_model,
    csv_text,
    expand_grid,
    fuzz_config,
    output_dir,
    perf_params,
    run_scenario,
    sweep,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2

_SCALAR_TYPES = {int: int, float: float, str: str, "int": int, "float": float, "str": str}
_STRUCTURED = {"adversary", "sluggish"}


def _flag(name):
    return "--" + name.replace("_", "-")


def _add_config_flags(parser):
    parser.add_argument("--config", help="scenario JSON file")
    for f in dataclasses.fields(ScenarioConfig):
        if f.name in _STRUCTURED:
            parser.add_argument(_flag(f.name), type=json.loads, default=None, help=f"{f.name} as JSON")
        elif f.type in (bool, "bool"):
            parser.add_argument(_flag(f.name), type=_parse_bool, default=None, metavar="BOOL")
        else:
            parser.add_argument(_flag(f.name), type=_SCALAR_TYPES.get(f.type, str), default=None)


def _parse_bool(text):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def config_from_args(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for f in dataclasses.fields(ScenarioConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    return ScenarioConfig.from_dict(data)


def _write(path, text):
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _report_failure(result, out):
    stem = os.path.join(out, f"{result.config.name}-counterexample")
    result.config.save(stem + ".json")
    print(json.dumps({"violations": result.violations[:20], "config": stem + ".json"}, indent=2))


def cmd_run(args):
    config = config_from_args(args)
    out = output_dir()
    trace_path = os.path.join(out, f"{config.name}.trace.jsonl") if args.trace else None
    result = run_scenario(config, trace_path=trace_path)
    _write(os.path.join(out, f"{config.name}.csv"), csv_text([result.csv_row()]))
    summary = {k: v for k, v in result.metrics.items() if not (isinstance(v, float) and math.isnan(v))}
    summary["trace_hash"] = result.trace_hash
    summary["ok"] = result.ok
    print(json.dumps(summary, indent=2, default=str))
    if not result.ok:
        if trace_path is None:
            trace_path = os.path.join(out, f"{config.name}.trace.jsonl")
            run_scenario(config, trace_path=trace_path)
        _report_failure(result, out)
        return EXIT_VIOLATION
    return EXIT_OK


def _parse_grid(items):
    grid = {}
    names = {f.name: f for f in dataclasses.fields(ScenarioConfig)}
    for item in items or []:
        key, _, values = item.partition("=")
        key = key.replace("-", "_")
        if key not in names:
            raise ScenarioError(f"unknown grid field {key!r}")
        conv = _SCALAR_TYPES.get(names[key].type, str)
        grid[key] = [conv(v) for v in values.split(",") if v]
    return grid


def cmd_sweep(args):
    base = config_from_args(args)
    grid = _parse_grid(args.grid)
    configs = expand_grid(base, grid)
    rows, failures = sweep(configs)
    text = csv_text(rows)
    path = _write(os.path.join(output_dir(), args.output or f"{base.name}-sweep.csv"), text)
    sys.stdout.write(text)
    for name, detail in failures:
        print(f"# {name}: {detail}", file=sys.stderr)
    print(f"# wrote {path}", file=sys.stderr)
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_model(args):
    config = config_from_args(args)
    rows = []
    ns = [int(x) for x in args.ns.split(",")] if args.ns else [config.n]
    for n in ns:
        cfg = config.replace(n=n, f=None)
        for protocol in ("hamster", "sync-hotstuff"):
            p = perf_params(cfg)
            rate = perf.throughput(protocol, p, with_follow=args.with_follow)
            rows.append(
                {
                    "scenario": f"model-{protocol}-{n}",
                    "n": n,
                    "f": cfg.f,
                    "protocol": protocol,
                    "batch_size": cfg.batch_size,
                    "bandwidth_bps": "" if cfg.bandwidth is None else cfg.bandwidth * 8,
                    "delta_s": cfg.delta,
                    "throughput_kops": f"{rate / 1000.0:.6f}",
                    "mean_latency_s": f"{perf.latency(protocol, p):.6f}",
                    "bytes_total": "",
                    "bytes_max_node": "",
                }
            )
        notes = perf.t_follow(perf_params(cfg)).notes
        for note in notes:
            print(f"# n={n}: {note}", file=sys.stderr)
    text = csv_text(rows)
    _write(os.path.join(output_dir(), args.output or "model.csv"), text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_compare(args):
    base = config_from_args(args)
    report = {}
    ok = True
    for protocol in ("hamster", "sync-hotstuff"):
        res = compare_model(base.replace(protocol=protocol, adversary=[], sluggish=None))
        ok &= res["ok"]
        report[protocol] = res
    sim_gain = report["sync-hotstuff"]["simulated_round_s"] / report["hamster"]["simulated_round_s"]
    model_gain = report["sync-hotstuff"]["modeled_round_s"] / report["hamster"]["modeled_round_s"]
    report["gain"] = {"simulated": sim_gain, "modeled": model_gain}
    print(json.dumps(report, indent=2))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_fuzz(args):
    ns = [int(x) for x in args.ns.split(",")]
    out = output_dir()
    failures = 0
    runs = 0
    for seed in range(args.seed_start, args.seed_start + args.runs):
        for n in ns:
            cfg = fuzz_config(seed, n, sluggish=args.sluggish)
            result = run_scenario(cfg)
            runs += 1
            if not result.ok:
                failures += 1
                trace = os.path.join(out, f"{cfg.name}.trace.jsonl")
                run_scenario(cfg, trace_path=trace)
                _report_failure(result, out)
    print(json.dumps({"runs": runs, "failures": failures}))
    return EXIT_VIOLATION if failures else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="hamster", description="Hamster BFT simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    _add_config_flags(p)
    p.add_argument("--trace", action="store_true", help="export the event trace as JSON lines")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a grid of scenarios, emit CSV")
    _add_config_flags(p)
    p.add_argument("--grid", action="append", metavar="FIELD=V1,V2", help="grid axis (repeatable)")
    p.add_argument("--output", help="CSV file name inside the output directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("model", help="closed-form throughput/latency table")
    _add_config_flags(p)
    p.add_argument("--ns", help="comma-separated node counts")
    p.add_argument("--with-follow", action="store_true", help="halve Hamster's rate for the follow phase")
    p.add_argument("--output", help="CSV file name inside the output directory")
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("compare", help="simulated vs modeled round time")
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fuzz", help="randomized adversarial runs with invariant checks")
    p.add_argument("--runs", type=int, default=20)
    p.add_argument("--seed-start", type=int, default=0)
    p.add_argument("--ns", default="3,5,9")
    p.add_argument("--sluggish", action="store_true", help="sluggish mode with random schedules")
    p.set_defaults(func=cmd_fuzz)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["CSV_HEADER", "build_parser", "main"]
