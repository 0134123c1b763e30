"""Byte-exact packets, standard header codecs, and custom headers."""
from __future__ import annotations

from typing import Mapping

from .headers import (
    ETHERNET, ETHERTYPE_IPV4, IPPROTO_TCP, IPPROTO_UDP, IPV4, STANDARD_HEADERS, TCP, UDP,
    CustomHeaderDef, FieldDef, HeaderDef, HeaderError, Layer, Op, ParseError,
    decode_custom, encode_custom, ipv4_checksum,
)
from .model import InstanceType, Packet, PacketMeta
from .stack import Header, HeaderRegistry, HeaderStack, insert_header, parse_stack, remove_header
from .frames import udp_frame


def insert_custom(packet: Packet, defn: CustomHeaderDef,
                  values: Mapping[str, int] | None = None) -> Packet:
    stack = parse_stack(packet.data, HeaderRegistry([defn]))
    insert_header(stack, defn, values)
    return packet.with_data(stack.deparse())


def strip_custom(packet: Packet, defn: CustomHeaderDef) -> Packet:
    stack = parse_stack(packet.data, HeaderRegistry([defn]))
    remove_header(stack, defn)
    return packet.with_data(stack.deparse())


__all__ = [
    "ETHERNET", "ETHERTYPE_IPV4", "IPPROTO_TCP", "IPPROTO_UDP", "IPV4", "STANDARD_HEADERS",
    "TCP", "UDP", "CustomHeaderDef", "FieldDef", "Header", "HeaderDef", "HeaderError",
    "HeaderRegistry", "HeaderStack", "InstanceType", "Layer", "Op", "Packet", "PacketMeta",
    "ParseError", "decode_custom", "encode_custom", "insert_custom", "insert_header",
    "ipv4_checksum", "parse_stack", "remove_header", "strip_custom", "udp_frame",
]
