"""``effsr`` command-line front end.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
files, unmatched images), 3 invariant violation (graph or pruning
constraint).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import analysis, harness, reparam, serialization, stats, zoo
from .graph import GraphError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

METRIC_ALIASES = {"params": "params_M", "flops": "flops_G", "activations": "activations_M", "memory": "memory_M"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def input_size(text: str):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"input size must be positive, got {text!r}")
    return h, w


def positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def load_model(ref: str, weights: Optional[str] = None, seed: int = 0):
    """A zoo model name or a model-spec file, optionally with a weight file."""
    if Path(ref).is_file():
        graph = serialization.load_spec(ref)
    elif ref in zoo.MODELS:
        graph = zoo.build(ref, seed=seed)
    else:
        raise FileNotFoundError(f"{ref!r} is neither a model-spec file nor a zoo model ({', '.join(zoo.MODELS)})")
    if weights:
        graph = serialization.load_weights(graph, weights)
    return graph


def _write_model(graph, prefix: str) -> List[str]:
    spec, weights = f"{prefix}.json", f"{prefix}.weights"
    serialization.save_spec(graph, spec)
    serialization.save_weights(graph, weights)
    return [spec, weights]


# -------------------------------------------------------------- subcommands

def cmd_list_models(args, out):
    for m in zoo.list_models():
        flags = ", ".join(f"{k}={v}" for k, v in m.flags.items())
        out.write(f"{m.name:<12} x{m.scale}  width={m.width:<3} blocks={m.blocks:<3} {flags}\n")
        out.write(f"{'':<12} {m.description}\n")


def cmd_analyze(args, out):
    graph = load_model(args.model, seed=args.seed)
    report = analysis.analyze(graph, args.input_size)
    if args.format == "text":
        out.write(report.to_text() + "\n")
    elif args.format == "json":
        out.write(json.dumps(report.as_dict(), indent=1) + "\n")
    else:
        out.write(stats.emit_report([report], None, args.format))


def cmd_report(args, out):
    reports = [analysis.analyze(load_model(m), args.input_size) for m in args.models]
    fixture = None if args.no_fixture else stats.load_fixture(args.fixture)
    out.write(stats.emit_report(reports, fixture, args.format, args.out))


def cmd_bench(args, out):
    graph = load_model(args.model, args.weights, seed=args.seed)
    cfg = harness.BenchmarkConfig(args.images, trials=args.trials, warmup=args.warmup,
                                  threads=args.threads, precision=args.precision)
    out.write(harness.run_benchmark(graph, cfg).to_text() + "\n")


def _write_eval(result, args, out):
    for name, v in result.per_image:
        out.write(f"{name}\t{v:.4f}\n")
    out.write(f"mean\t{result.mean_psnr:.4f}\n")
    if args.csv:
        result.write_csv(args.csv)


def cmd_psnr(args, out):
    _write_eval(harness.psnr_dirs(args.sr, args.gt, args.shave), args, out)


def cmd_eval(args, out):
    graph = load_model(args.model, args.weights)
    _write_eval(harness.evaluate_model(graph, args.lr, args.gt, args.shave, sr_out=args.sr_out), args, out)


def cmd_make_lr(args, out):
    for p in harness.make_lr(args.hr, args.out, args.factor):
        out.write(f"{p}\n")


def cmd_fuse_cac(args, out):
    graph = load_model(args.spec, args.weights)
    fused = reparam.fuse_cac_sites(graph)
    n = len(reparam.cac_sites(graph))
    for path in _write_model(fused, args.out):
        out.write(f"{path}\n")
    out.write(f"fused {n} CAC sites; params {analysis.count_params(graph):,} -> {analysis.count_params(fused):,}\n")


def cmd_prune(args, out):
    graph = load_model(args.spec, args.weights)
    raw = json.loads(Path(args.gates).read_text())
    gates = reparam.ChannelGates(
        pre={k: np.asarray(v, dtype=np.float64) for k, v in raw.get("pre", {}).items()},
        post={k: np.asarray(v, dtype=np.float64) for k, v in raw.get("post", {}).items()},
    )
    pruned = reparam.prune_zero_gates(graph, gates)
    for path in _write_model(pruned, args.out):
        out.write(f"{path}\n")
    out.write(f"params {analysis.count_params(graph):,} -> {analysis.count_params(pruned):,}\n")


def cmd_srocc(args, out):
    fixture = stats.load_fixture(args.fixture)
    metrics = stats.METRICS if args.metric == "all" else (METRIC_ALIASES[args.metric],)
    result = stats.reproduce_table2(fixture, metrics)
    if args.format == "json":
        out.write(json.dumps({"srocc": result.values, "rows": result.teams}, indent=1) + "\n")
    else:
        out.write(result.to_text() + "\n")


def cmd_export_weights(args, out):
    graph = load_model(args.model, seed=args.seed)
    for path in _write_model(graph, args.out):
        out.write(f"{path}\n")


def cmd_import_weights(args, out):
    graph = load_model(args.spec, args.weights)
    out.write(f"loaded {len(serialization.flat_blobs(graph))} blobs, {analysis.count_params(graph):,} parameters\n")
    if args.out:
        for path in _write_model(graph, args.out):
            out.write(f"{path}\n")


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="effsr", description="Efficient super-resolution model zoo and profiler.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("list-models", help="enumerate zoo models")
    s.set_defaults(func=cmd_list_models)

    s = sub.add_parser("analyze", help="params / FLOPs / activations / memory / conv count")
    s.add_argument("model")
    s.add_argument("--input-size", type=input_size, default=(256, 256), metavar="HxW")
    s.add_argument("--format", choices=["text", "csv", "json", "md"], default="text")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("report", help="results-table report of zoo models next to the fixture")
    s.add_argument("models", nargs="*")
    s.add_argument("--input-size", type=input_size, default=(256, 256), metavar="HxW")
    s.add_argument("--format", choices=["csv", "json", "md"], default="md")
    s.add_argument("--fixture")
    s.add_argument("--no-fixture", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("bench", help="best-of-N mean runtime over a directory of LR images")
    s.add_argument("model")
    s.add_argument("--images", required=True)
    s.add_argument("--weights")
    s.add_argument("--trials", type=positive_int, default=3)
    s.add_argument("--warmup", type=int, default=1)
    s.add_argument("--threads", type=positive_int, default=1)
    s.add_argument("--precision", choices=["float32", "float64"], default="float32")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("psnr", help="PSNR of SR images against ground truth")
    s.add_argument("--sr", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--shave", type=int, default=4)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_psnr)

    s = sub.add_parser("eval", help="super-resolve LR images and score them")
    s.add_argument("model")
    s.add_argument("--weights", required=True)
    s.add_argument("--lr", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--shave", type=int, default=4)
    s.add_argument("--csv")
    s.add_argument("--sr-out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("make-lr", help="bicubic x<factor> downsampling of HR images")
    s.add_argument("--hr", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--factor", type=positive_int, default=4)
    s.set_defaults(func=cmd_make_lr)

    s = sub.add_parser("fuse-cac", help="fold asymmetric conv triples into 3x3 convs")
    s.add_argument("spec")
    s.add_argument("weights")
    s.add_argument("--out", required=True, metavar="PREFIX")
    s.set_defaults(func=cmd_fuse_cac)

    s = sub.add_parser("prune", help="delete zero-gated channels")
    s.add_argument("spec")
    s.add_argument("weights")
    s.add_argument("--gates", required=True, help='JSON {"pre": {conv: [...]}, "post": {conv: [...]}}')
    s.add_argument("--out", required=True, metavar="PREFIX")
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("srocc", help="SROCC of efficiency metrics vs runtime over the fixture")
    s.add_argument("--fixture")
    s.add_argument("--metric", choices=["all", *METRIC_ALIASES], default="all")
    s.add_argument("--format", choices=["text", "json"], default="text")
    s.set_defaults(func=cmd_srocc)

    s = sub.add_parser("export-weights", help="write a zoo model's spec and seeded weights")
    s.add_argument("model")
    s.add_argument("--out", required=True, metavar="PREFIX")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_export_weights)

    s = sub.add_parser("import-weights", help="load and validate a weight file against a spec")
    s.add_argument("spec")
    s.add_argument("weights")
    s.add_argument("--out", metavar="PREFIX")
    s.set_defaults(func=cmd_import_weights)
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"effsr: error: {e}\n")
        return EXIT_USAGE
    try:
        args.func(args, out)
    except (GraphError, reparam.PruneError) as e:
        sys.stderr.write(f"effsr: invariant violation: {e}\n")
        return EXIT_INVARIANT
    except (OSError, ValueError, KeyError) as e:
        sys.stderr.write(f"effsr: data error: {e}\n")
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
