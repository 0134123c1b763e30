"""Reference implementations of the hot per-packet kernels.

Every function here has a compiled twin in ``_speedups.pyx`` with the same
signature and bit-identical results; ``dpsim.kernels`` picks one at import.
"""
from __future__ import annotations

import struct
import zlib

_FIVE_TUPLE = struct.Struct("!IIBHHI")


def pack_fields(widths, values) -> bytes:
    """Pack unsigned ``values`` MSB-first into ``sum(widths) // 8`` bytes.

    Values must already fit their widths; callers validate.
    """
    acc = 0
    total = 0
    for w, v in zip(widths, values):
        acc = (acc << w) | v
        total += w
    return acc.to_bytes(total >> 3, "big")


def unpack_fields(widths, data, offset: int) -> list:
    total = 0
    for w in widths:
        total += w
    nbytes = total >> 3
    if offset + nbytes > len(data):
        raise IndexError("buffer too short for header")
    acc = int.from_bytes(data[offset:offset + nbytes], "big")
    out = []
    shift = total
    for w in widths:
        shift -= w
        out.append((acc >> shift) & ((1 << w) - 1))
    return out


def internet_checksum(data, start: int = 0, end: int = -1) -> int:
    """RFC 1071 ones-complement checksum over data[start:end]."""
    if end < 0:
        end = len(data)
    chunk = bytes(data[start:end])
    if len(chunk) & 1:
        chunk += b"\x00"
    total = sum(struct.unpack(f"!{len(chunk) // 2}H", chunk))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return ~total & 0xFFFF


def five_tuple_crc(src_ip: int, dst_ip: int, protocol: int, src_port: int,
                   dst_port: int, seed: int) -> int:
    return zlib.crc32(_FIVE_TUPLE.pack(src_ip, dst_ip, protocol, src_port, dst_port, seed))
