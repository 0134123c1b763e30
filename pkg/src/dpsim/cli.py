"""Command line: run, generate, validate, trace-diff."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .engine import SimulationError
from .generate import generate
from .scenario import ScenarioError, load_scenario
from .units import parse_time

EXIT_OK = 0
EXIT_LOAD = 1
EXIT_RUNTIME = 2
EXIT_MISMATCH = 3


def _series_ms(text: str) -> int:
    ns = parse_time(f"{text}ms")
    if ns <= 0:
        raise argparse.ArgumentTypeError("series interval must be positive")
    return ns


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpsim", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scenario file")
    run.add_argument("file", type=Path)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path, default=Path("results"))
    run.add_argument("--trace", action="store_true", help="write trace.txt")
    run.add_argument("--series-interval", type=_series_ms, metavar="MS",
                     help="time-series bucket width in milliseconds")

    gen = sub.add_parser("generate", help="write a scenario bundle")
    gsub = gen.add_subparsers(dest="template", required=True)
    fwd = gsub.add_parser("forward", help="two hosts, one switch, IPv4 LPM")
    fwd.add_argument("--rate", default="50Mbps")
    fwd.add_argument("--size", type=int, default=1000, help="UDP payload bytes")
    fwd.add_argument("--duration", default="1s")
    fwd.add_argument("--link", default="10Gbps")
    fwd.add_argument("--switch-rate", type=float, default=1e6)
    tun = gsub.add_parser("tunnel", help="three switches, custom tunnel header")
    tun.add_argument("--duration", default="10s")
    tun.add_argument("--size", type=int, default=1000)
    tun.add_argument("--tunnel-rate", default="10Mbps")
    tun.add_argument("--normal-rate", default="40Mbps")
    tun.add_argument("--link", default="1Gbps")
    tun.add_argument("--tunnel-port", type=int, default=11000)
    tun.add_argument("--normal-port", type=int, default=9000)
    tun.add_argument("--switch-rate", type=float, default=1e6)
    ecmp = gsub.add_parser("ecmp", help="spine-leaf with 5-tuple hash ECMP")
    ecmp.add_argument("--flows", type=int, default=1000)
    ecmp.add_argument("--flow-rate", default="10Mbps")
    ecmp.add_argument("--duration", default="40s")
    ecmp.add_argument("--size", type=int, default=1000)
    ecmp.add_argument("--host-link", default="10Gbps")
    ecmp.add_argument("--spine-link", default="40Gbps")
    ecmp.add_argument("--switch-rate", type=float, default=2e6)
    ecmp.add_argument("--base-port", type=int, default=20000)
    ecmp.add_argument("--on-mean", type=float, default=2.0)
    ecmp.add_argument("--off-mean", type=float, default=1.0)
    ecmp.add_argument("--desk", action="store_true",
                      help="100 flows x 1 Mbps over 40 s")
    for g in (fwd, tun, ecmp):
        g.add_argument("--seed", type=int, default=1)
        g.add_argument("--out", type=Path, required=True)

    val = sub.add_parser("validate", help="load a scenario and report problems")
    val.add_argument("file", type=Path)

    diff = sub.add_parser("trace-diff", help="byte-compare two trace files")
    diff.add_argument("a", type=Path)
    diff.add_argument("b", type=Path)
    return p


def _cmd_run(args) -> int:
    from .runner import run_scenario

    try:
        sc = load_scenario(args.file)
    except ScenarioError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_LOAD
    try:
        result = run_scenario(sc, seed=args.seed, out_dir=args.out, trace=args.trace or None,
                              series_interval_ns=args.series_interval)
    except (SimulationError, RuntimeError, ValueError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    s = result.summary
    print(f"{s['name']}: seed {s['seed']}, {s['events']} events, "
          f"offered {s['offered_payload_bytes']} B, delivered {s['delivered_payload_bytes']} B, "
          f"conserved={s['conserved']}")
    for name, value in s["metrics"].items():
        print(f"  {name} = {value}")
    print(f"outputs in {args.out}")
    return EXIT_OK


def _cmd_generate(args) -> int:
    params = {k: v for k, v in vars(args).items()
              if k not in ("command", "template", "out", "verbose")}
    try:
        path = generate(args.template, args.out, **params)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    print(path)
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        sc = load_scenario(args.file)
    except ScenarioError as exc:
        for line in exc.problems:
            print(f"error: {line}", file=sys.stderr)
        return EXIT_LOAD
    for w in sc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(sc.resolved(), indent=2))
    return EXIT_OK


def trace_diff(a: Path, b: Path) -> tuple[bool, str]:
    """Byte comparison; the message names the first differing line."""
    da, db = a.read_bytes(), b.read_bytes()
    if da == db:
        return True, f"identical ({len(da)} bytes)"
    la, lb = da.splitlines(), db.splitlines()
    for i, (x, y) in enumerate(zip(la, lb), start=1):
        if x != y:
            return False, f"first difference at line {i}:\n< {x.decode()}\n> {y.decode()}"
    return False, f"one trace is a prefix of the other ({len(la)} vs {len(lb)} lines)"


def _cmd_trace_diff(args) -> int:
    try:
        same, msg = trace_diff(args.a, args.b)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_LOAD
    print(msg)
    return EXIT_OK if same else EXIT_MISMATCH


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "generate": _cmd_generate, "validate": _cmd_validate,
               "trace-diff": _cmd_trace_diff}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
