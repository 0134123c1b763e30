"""Builders for the Ethernet/IPv4/UDP frames hosts put on the wire."""
from __future__ import annotations

import struct

from .. import kernels
from .headers import ETHERTYPE_IPV4, IPPROTO_UDP

_ETH = struct.Struct("!6s6sH")
_IP = struct.Struct("!BBHHHBBHII")
_UDP = struct.Struct("!HHHH")


def ethernet_bytes(dst_mac: int, src_mac: int, ethertype: int) -> bytes:
    return _ETH.pack(dst_mac.to_bytes(6, "big"), src_mac.to_bytes(6, "big"), ethertype)


def ipv4_bytes(src_ip: int, dst_ip: int, protocol: int, payload_len: int,
               ttl: int = 64, identification: int = 0) -> bytes:
    total = 20 + payload_len
    raw = _IP.pack(0x45, 0, total, identification & 0xFFFF, 0, ttl, protocol, 0, src_ip, dst_ip)
    csum = kernels.internet_checksum(raw)
    return raw[:10] + csum.to_bytes(2, "big") + raw[12:]


def udp_frame(src_mac: int, dst_mac: int, src_ip: int, dst_ip: int, src_port: int,
              dst_port: int, payload: bytes, ttl: int = 64, identification: int = 0) -> bytes:
    """Ethernet II / IPv4 / UDP with a zero (disabled) UDP checksum and no FCS."""
    udp = _UDP.pack(src_port, dst_port, 8 + len(payload), 0)
    return b"".join((
        ethernet_bytes(dst_mac, src_mac, ETHERTYPE_IPV4),
        ipv4_bytes(src_ip, dst_ip, IPPROTO_UDP, 8 + len(payload), ttl, identification),
        udp,
        payload,
    ))
