"""Command-line interface.

Exit codes: 0 success, 2 contract or configuration error, 3 I/O error.
``RNGPROBE_THREADS`` caps the BLAS/OpenMP thread pools; it is applied
before numpy is imported.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 2, 3
THREAD_ENV = "RNGPROBE_THREADS"
_POOL_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_threads():
    n = os.environ.get(THREAD_ENV)
    if n:
        for var in _POOL_VARS:
            os.environ.setdefault(var, n)


def _seed(text):
    return int(text, 0)


def _add_train_args(p):
    g = p.add_argument_group("training")
    g.add_argument("--config", help="JSON document with TrainConfig fields")
    g.add_argument("--max-epochs", type=int)
    g.add_argument("--patience", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float)
    g.add_argument("--model-seed", type=_seed, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="rngprobe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesise stage streams for both scenarios")
    p.add_argument("--config", help="JSON ChainConfig document (defaults if omitted)")
    p.add_argument("--seed", type=_seed, help="override the config seed")
    p.add_argument("--n-samples", type=int, help="override n_samples")
    p.add_argument("--scenario", choices=["classical", "quantum_classical", "both"],
                   default="both")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("lcg", help="write an 8-bit congruential generator stream")
    p.add_argument("--a", type=int, default=1103515245)
    p.add_argument("--c", type=int, default=12345)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--m", type=int)
    grp.add_argument("--log2m", type=int)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attack", help="train the predictor and compare P_ML with P_g")
    p.add_argument("stream")
    p.add_argument("--out", required=True, help="output directory for report and series")
    p.add_argument("--window", "-N", type=int, default=100)
    p.add_argument("--stride", "-S", type=int, default=3)
    p.add_argument("--train-size", type=int, default=500_000)
    p.add_argument("--test-size", type=int, default=20_000)
    p.add_argument("--test-sets", type=int, default=5)
    p.add_argument("--seed", type=_seed, help="training seed (shuffling)")
    p.add_argument("--stage", help="expected stage tag; checked against the header")
    p.add_argument("--scenario", help="expected scenario tag; checked against the header")
    p.add_argument("--battery", type=int, nargs=2, metavar=("SEQUENCES", "BITS"),
                   help="also run the test battery (8-bit streams)")
    p.add_argument("--verbose", action="store_true")
    _add_train_args(p)

    p = sub.add_parser("sts", help="run the statistical test battery on an 8-bit stream")
    p.add_argument("stream")
    p.add_argument("--n-sequences", type=int, default=100)
    p.add_argument("--seq-len", type=int, default=100_000)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="Toeplitz-hash a stream at its certified rate")
    p.add_argument("stream")
    p.add_argument("--sd-m", type=float, required=True, help="measured SD in LSB units")
    p.add_argument("--sd-e", type=float, required=True, help="electronic SD in LSB units")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--seed", type=_seed, help="integer seed for the Toeplitz matrix")
    grp.add_argument("--seed-hex", help="explicit Toeplitz seed bits as hex")
    p.add_argument("--in-block", type=int, default=1024)
    p.add_argument("--safety", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="optional path for the extraction report")

    p = sub.add_parser("schema", help="print a published report schema")
    p.add_argument("kind", choices=["attack", "sts", "extract", "manifest"])
    return ap


def _check_tag(expected, actual, name):
    if expected is not None and expected != actual:
        raise ValueError(f"--{name} {expected!r} does not match stream header {actual!r}")


def _train_config(args):
    from .rcnn import TrainConfig

    kw = {}
    if args.config:
        with open(args.config) as fh:
            kw.update(json.load(fh))
    for key in ("max_epochs", "patience", "batch_size", "lr"):
        if getattr(args, key) is not None:
            kw[key] = getattr(args, key)
    if args.seed is not None:
        kw["seed"] = args.seed
    kw["verbose"] = args.verbose
    try:
        return TrainConfig(**kw)
    except TypeError as exc:
        raise ValueError(f"bad training config: {exc}") from None


def run(args):
    from dataclasses import replace

    from . import homodyne, pipeline, report
    from .stream import Scenario, load_stream

    if args.command == "schema":
        print(json.dumps(report.SCHEMAS[args.kind], indent=2))
        return None
    if args.command == "simulate":
        cfg = homodyne.load_config(args.config) if args.config else homodyne.ChainConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.n_samples is not None:
            cfg = replace(cfg, n_samples=args.n_samples)
        cfg.validate()
        scen = pipeline.SCENARIOS if args.scenario == "both" else (Scenario(args.scenario),)
        doc = pipeline.simulate(cfg, args.out, scen)
        return {"files": len(doc["files"]), "out": args.out}
    if args.command == "lcg":
        m = args.m if args.m is not None else 1 << (args.log2m if args.log2m is not None else 24)
        stream = pipeline.generate_lcg(args.a, args.c, m, args.seed, args.count, args.out)
        return {"count": len(stream), "out": args.out}
    if args.command == "attack":
        stream = load_stream(args.stream)
        _check_tag(args.stage, stream.stage.value, "stage")
        _check_tag(args.scenario, stream.scenario.value, "scenario")
        doc, _, _ = pipeline.attack(
            stream, args.out, window=args.window, stride=args.stride,
            train_size=args.train_size, test_size=args.test_size, test_sets=args.test_sets,
            train_cfg=_train_config(args), model_seed=args.model_seed,
            battery=tuple(args.battery) if args.battery else None, stream_file=args.stream)
        return {"evaluation": doc["evaluation"]}
    if args.command == "sts":
        stream = load_stream(args.stream)
        doc = pipeline.battery(stream, args.n_sequences, args.seq_len, args.alpha,
                               out_path=args.out, stream_file=args.stream)
        return {"total_passed": doc["battery"]["total_passed"],
                "total_tests": doc["battery"]["total_tests"]}
    if args.command == "extract":
        stream = load_stream(args.stream)
        seed = args.seed if args.seed is not None else args.seed_hex
        doc, _ = pipeline.extract(stream, args.sd_m, args.sd_e, seed, out_path=args.out,
                                  in_block_bits=args.in_block, safety=args.safety,
                                  stream_file=args.stream)
        if args.report:
            report.write_report(doc, args.report)
        return {"h_min_cond": doc["h_min_cond"], "extraction_ratio": doc["extraction_ratio"],
                "out": args.out}
    raise AssertionError(args.command)


def main(argv=None):
    _apply_threads()
    args = build_parser().parse_args(argv)
    try:
        summary = run(args)
    except OSError as exc:
        print(f"rngprobe: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"rngprobe: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    if summary is not None:
        print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
