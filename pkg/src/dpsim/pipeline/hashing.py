from __future__ import annotations

from .. import kernels


def hash_select(src_ip: int, dst_ip: int, protocol: int, src_port: int, dst_port: int,
                group_size: int, seed: int = 0) -> int:
    """ECMP member index in [0, group_size).

    CRC-32 (IEEE, as in zlib) over the big-endian bytes of
    src_ip(4) dst_ip(4) protocol(1) src_port(2) dst_port(2) seed(4), modulo group_size.
    """
    if group_size < 1:
        raise ValueError(f"group_size must be >= 1, got {group_size}")
    return kernels.five_tuple_crc(src_ip, dst_ip, protocol, src_port, dst_port,
                                  seed & 0xFFFFFFFF) % group_size
