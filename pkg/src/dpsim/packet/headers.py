"""Header layouts: the fixed standard headers and user-declared custom ones."""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .. import kernels

ETHERTYPE_IPV4 = 0x0800
IPPROTO_TCP = 6
IPPROTO_UDP = 17


class HeaderError(ValueError):
    """Invalid header definition, value, or placement."""


class ParseError(HeaderError):
    """Bytes do not hold the header they were expected to hold."""


class Layer(enum.Enum):
    LAYER_2 = 2
    LAYER_3 = 3
    LAYER_4 = 4


class Op(enum.Enum):
    ADD_BEFORE = "ADD_BEFORE"
    ADD_AFTER = "ADD_AFTER"
    REPLACE = "REPLACE"


@dataclass(frozen=True)
class FieldDef:
    name: str
    width: int

    def __post_init__(self) -> None:
        if not self.name.isidentifier():
            raise HeaderError(f"field name {self.name!r} is not an identifier")
        if not 1 <= self.width <= 64:
            raise HeaderError(f"field {self.name!r}: bit width {self.width} outside [1, 64]")


class HeaderDef:
    """An ordered, byte-aligned list of bit fields."""

    layer: Layer

    def __init__(self, name: str, fields: Sequence[FieldDef | tuple[str, int]],
                 layer: Layer) -> None:
        self.name = name
        self.fields = tuple(f if isinstance(f, FieldDef) else FieldDef(*f) for f in fields)
        if not self.fields:
            raise HeaderError(f"header {name!r} has no fields")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise HeaderError(f"header {name!r} has duplicate field names")
        self.field_names = tuple(names)
        self.widths = tuple(f.width for f in self.fields)
        self.width_of = dict(zip(names, self.widths))
        bits = sum(self.widths)
        if bits % 8:
            raise HeaderError(f"header {name!r} is {bits} bits wide, not a whole number of bytes")
        self.size = bits // 8
        self.layer = layer
        self._struct = None
        if all(w in _STRUCT_CODES for w in self.widths):
            self._struct = struct.Struct("!" + "".join(_STRUCT_CODES[w] for w in self.widths))

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r}, {self.size}B)"

    def pack(self, values: Mapping[str, int]) -> bytes:
        vals = [values[n] for n in self.field_names]
        if self._struct is not None:
            try:
                return self._struct.pack(*vals)
            except struct.error:
                pass  # out-of-range value; let the kernel raise a uniform error
        return kernels.pack_fields(self.widths, vals)

    def unpack(self, data: bytes, offset: int = 0) -> dict[str, int]:
        if len(data) - offset < self.size or offset < 0:
            raise ParseError(
                f"truncated {self.name} header: need {self.size} bytes at offset {offset}, "
                f"have {max(len(data) - offset, 0)}")
        if self._struct is not None:
            return dict(zip(self.field_names, self._struct.unpack_from(data, offset)))
        return dict(zip(self.field_names, kernels.unpack_fields(self.widths, data, offset)))


# byte-multiple widths that map straight onto struct codes
_STRUCT_CODES = {8: "B", 16: "H", 32: "I", 64: "Q"}
_ETH = struct.Struct("!HIHIH")
_IP4 = struct.Struct("!BBHHHBBHII")


class _EthernetDef(HeaderDef):
    def pack(self, values: Mapping[str, int]) -> bytes:
        dst, src = values["dst_mac"], values["src_mac"]
        try:
            return _ETH.pack(dst >> 32, dst & 0xFFFFFFFF, src >> 32, src & 0xFFFFFFFF,
                             values["ethertype"])
        except struct.error:
            return super().pack(values)

    def unpack(self, data: bytes, offset: int = 0) -> dict[str, int]:
        if len(data) - offset < 14 or offset < 0:
            return super().unpack(data, offset)
        a, b, c, d, e = _ETH.unpack_from(data, offset)
        return {"dst_mac": a << 32 | b, "src_mac": c << 32 | d, "ethertype": e}


class _Ipv4Def(HeaderDef):
    def pack(self, v: Mapping[str, int]) -> bytes:
        if v["version"] >> 4 or v["ihl"] >> 4:
            return super().pack(v)
        try:
            return _IP4.pack(v["version"] << 4 | v["ihl"], v["tos"], v["total_length"],
                             v["identification"], v["flags_frag"], v["ttl"], v["protocol"],
                             v["header_checksum"], v["src_ip"], v["dst_ip"])
        except struct.error:
            return super().pack(v)

    def unpack(self, data: bytes, offset: int = 0) -> dict[str, int]:
        if len(data) - offset < 20 or offset < 0:
            return super().unpack(data, offset)
        vi, tos, tl, ident, ff, ttl, proto, csum, src, dst = _IP4.unpack_from(data, offset)
        return {"version": vi >> 4, "ihl": vi & 15, "tos": tos, "total_length": tl,
                "identification": ident, "flags_frag": ff, "ttl": ttl, "protocol": proto,
                "header_checksum": csum, "src_ip": src, "dst_ip": dst}


ETHERNET = _EthernetDef("ethernet", [("dst_mac", 48), ("src_mac", 48), ("ethertype", 16)],
                     Layer.LAYER_2)
IPV4 = _Ipv4Def("ipv4", [
    ("version", 4), ("ihl", 4), ("tos", 8), ("total_length", 16),
    ("identification", 16), ("flags_frag", 16), ("ttl", 8), ("protocol", 8),
    ("header_checksum", 16), ("src_ip", 32), ("dst_ip", 32),
], Layer.LAYER_3)
UDP = HeaderDef("udp", [("src_port", 16), ("dst_port", 16), ("length", 16), ("checksum", 16)],
                Layer.LAYER_4)
# Beyond the ports TCP is carried opaquely; the remaining 16 bytes are two fields.
TCP = HeaderDef("tcp", [("src_port", 16), ("dst_port", 16), ("rest_hi", 64), ("rest_lo", 64)],
                Layer.LAYER_4)

STANDARD_HEADERS = {h.name: h for h in (ETHERNET, IPV4, UDP, TCP)}

# Which protocol-number namespace identifies a custom header, by placement.
# "eth" placements sit between Ethernet and IPv4 and are named by ethertype;
# "ip" placements sit after IPv4 and are named by IPv4 protocol number.
_PLACEMENTS = {
    (Layer.LAYER_2, Op.ADD_AFTER): "eth",
    (Layer.LAYER_3, Op.ADD_BEFORE): "eth",
    (Layer.LAYER_3, Op.REPLACE): "eth",
    (Layer.LAYER_3, Op.ADD_AFTER): "ip",
    (Layer.LAYER_4, Op.ADD_BEFORE): "ip",
    (Layer.LAYER_4, Op.REPLACE): "ip",
}


class CustomHeaderDef(HeaderDef):
    """A user-declared header with its placement and protocol binding.

    ``ethertype`` names the header when it follows Ethernet; ``ip_protocol``
    when it follows IPv4. ``chain_field`` carries the protocol number of the
    header that comes next and is mandatory for the ADD_* operators.
    """

    def __init__(self, name: str, fields: Sequence[FieldDef | tuple[str, int]],
                 layer: Layer | str = Layer.LAYER_3, op: Op | str = Op.ADD_BEFORE, *,
                 ethertype: int | None = None, ip_protocol: int | None = None,
                 defaults: Mapping[str, int] | None = None,
                 chain_field: str = "proto_id") -> None:
        layer = Layer[layer] if isinstance(layer, str) else layer
        op = Op(op) if isinstance(op, str) else op
        super().__init__(name, fields, layer)
        if name in STANDARD_HEADERS:
            raise HeaderError(f"custom header may not reuse the standard name {name!r}")
        self.op = op
        self.namespace = _PLACEMENTS.get((layer, op))
        if self.namespace is None:
            raise HeaderError(
                f"header {name!r}: placement {layer.name}/{op.value} is not supported; "
                "frames always begin with Ethernet and nothing is chained after TCP/UDP")
        self.ethertype = ethertype
        self.ip_protocol = ip_protocol
        if self.namespace == "eth":
            if ethertype is None or not 0 <= ethertype <= 0xFFFF:
                raise HeaderError(f"header {name!r}: {layer.name}/{op.value} needs a 16-bit ethertype")
            if ethertype == ETHERTYPE_IPV4:
                raise HeaderError(f"header {name!r}: ethertype 0x0800 is taken by IPv4")
        else:
            if ip_protocol is None or not 0 <= ip_protocol <= 0xFF:
                raise HeaderError(f"header {name!r}: {layer.name}/{op.value} needs an 8-bit ip_protocol")
            if ip_protocol in (IPPROTO_TCP, IPPROTO_UDP):
                raise HeaderError(f"header {name!r}: ip_protocol {ip_protocol} is taken")
        self.chain_field = chain_field if chain_field in self.width_of else None
        if op is not Op.REPLACE and self.chain_field is None:
            raise HeaderError(
                f"header {name!r}: {op.value} requires the protocol-chaining field {chain_field!r}")
        chained = self.chains_into()
        if chained is not None and self.width_of[self.chain_field] < (16 if chained == "eth" else 8):
            raise HeaderError(f"header {name!r}: chaining field {chain_field!r} is too narrow")
        self.defaults = dict(defaults or {})
        for fname, value in self.defaults.items():
            _check_value(self, fname, value)

    @property
    def binding(self) -> int:
        return self.ethertype if self.namespace == "eth" else self.ip_protocol

    def chains_into(self) -> str | None:
        """Namespace of the protocol number stored in the chaining field."""
        if self.chain_field is None:
            return None
        if self.op is Op.REPLACE:
            return "ip" if self.layer is Layer.LAYER_3 else None
        return self.namespace


def _check_value(defn: HeaderDef, name: str, value: int) -> None:
    width = defn.width_of.get(name)
    if width is None:
        raise HeaderError(f"header {defn.name!r} has no field {name!r}")
    if not isinstance(value, int) or value < 0 or value >> width:
        raise HeaderError(
            f"value {value!r} does not fit field {defn.name}.{name} ({width} bits)")


def complete_values(defn: CustomHeaderDef, values: Mapping[str, int]) -> dict[str, int]:
    """Merge explicit values over defaults; every field must end up with a value."""
    merged = dict(defn.defaults)
    merged.update(values)
    for fname in defn.field_names:
        if fname not in merged:
            raise HeaderError(f"no value for field {defn.name}.{fname}")
    for fname, value in merged.items():
        _check_value(defn, fname, value)
    return merged


def encode_custom(defn: CustomHeaderDef, values: Mapping[str, int]) -> bytes:
    """Big-endian, MSB-first encoding of a custom header."""
    return defn.pack(complete_values(defn, values))


def decode_custom(defn: CustomHeaderDef, data: bytes) -> dict[str, int]:
    if len(data) < defn.size:
        raise ParseError(f"truncated {defn.name} header: need {defn.size} bytes, have {len(data)}")
    return defn.unpack(data, 0)


def ipv4_checksum(header: bytes) -> int:
    """Checksum for a 20-byte IPv4 header, ignoring its current checksum field."""
    return kernels.internet_checksum(header[:10] + b"\x00\x00" + header[12:20])
