"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--number N]
"""
import argparse
import importlib
import timeit

from dpsim import _purepy

HEADER = bytes.fromhex("450000730000400040110000c0a80001c0a800c7")
WIDTHS = (4, 12, 16, 48, 16, 32)
VALUES = [0xF, 0x123, 0x0800, 0x0000000A0001, 0x22, 0xDEADBEEF]
PACKED = _purepy.pack_fields(WIDTHS, VALUES)

CASES = {
    "pack_fields": lambda m: m.pack_fields(WIDTHS, VALUES),
    "unpack_fields": lambda m: m.unpack_fields(WIDTHS, PACKED, 0),
    "internet_checksum": lambda m: m.internet_checksum(HEADER),
    "five_tuple_crc": lambda m: m.five_tuple_crc(0x0A000101, 0x0A000204, 17, 49152, 20001, 7),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--number", type=int, default=200_000)
    args = ap.parse_args()
    try:
        compiled = importlib.import_module("dpsim._speedups")
    except ImportError:
        compiled = None
        print("compiled extension not built; timing the Python fallback only")
    print(f"{'kernel':<20}{'python ns':>12}{'compiled ns':>14}{'speedup':>10}")
    for name, call in CASES.items():
        py = min(timeit.repeat(lambda: call(_purepy), number=args.number, repeat=3)) / args.number * 1e9
        if compiled is None:
            print(f"{name:<20}{py:>12.0f}{'-':>14}{'-':>10}")
            continue
        assert call(compiled) == call(_purepy), name
        cy = min(timeit.repeat(lambda: call(compiled), number=args.number, repeat=3)) / args.number * 1e9
        print(f"{name:<20}{py:>12.0f}{cy:>14.0f}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
