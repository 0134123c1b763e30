"""Parsed header stacks: parse, modify, and re-emit a frame."""
from __future__ import annotations

from typing import Iterable, Mapping

from .headers import (
    ETHERNET, ETHERTYPE_IPV4, IPPROTO_TCP, IPPROTO_UDP, IPV4, TCP, UDP,
    CustomHeaderDef, HeaderDef, HeaderError, Layer, Op, ParseError, complete_values,
)
from .. import kernels

MAX_HEADERS = 16

_NEXT_FIELD = {"ethernet": "ethertype", "ipv4": "protocol"}


class Header:
    """One parsed (or freshly added) header instance."""

    __slots__ = ("defn", "fields", "offset", "dirty")

    def __init__(self, defn: HeaderDef, fields: dict[str, int], offset: int | None = None) -> None:
        self.defn = defn
        self.fields = fields
        self.offset = offset  # byte offset in the original frame; None once added
        self.dirty = offset is None

    @property
    def name(self) -> str:
        return self.defn.name

    @property
    def size(self) -> int:
        return self.defn.size

    def __getitem__(self, name: str) -> int:
        return self.fields[name]

    def set(self, name: str, value: int) -> None:
        width = self.defn.width_of.get(name)
        if width is None:
            raise HeaderError(f"header {self.defn.name!r} has no field {name!r}")
        self.fields[name] = value & ((1 << width) - 1)
        self.dirty = True

    def next_field(self) -> str | None:
        """Field holding the protocol number of the following header, if any."""
        name = _NEXT_FIELD.get(self.defn.name)
        if name is not None:
            return name
        return getattr(self.defn, "chain_field", None)

    def copy(self) -> "Header":
        h = Header(self.defn, dict(self.fields), self.offset)
        h.dirty = self.dirty
        return h

    def __repr__(self) -> str:
        return f"Header({self.name}, {self.fields}, offset={self.offset})"


class HeaderRegistry:
    """Custom header definitions indexed by the protocol number that announces them."""

    def __init__(self, defs: Iterable[CustomHeaderDef] = ()) -> None:
        self.eth: dict[int, CustomHeaderDef] = {}
        self.ip: dict[int, CustomHeaderDef] = {}
        self.by_name: dict[str, CustomHeaderDef] = {}
        for d in defs:
            self.add(d)

    def add(self, defn: CustomHeaderDef) -> None:
        if defn.name in self.by_name:
            if self.by_name[defn.name] is defn:
                return
            raise HeaderError(f"duplicate custom header name {defn.name!r}")
        table = self.eth if defn.namespace == "eth" else self.ip
        if defn.binding in table:
            raise HeaderError(
                f"headers {table[defn.binding].name!r} and {defn.name!r} share "
                f"{defn.namespace} code {defn.binding:#x}")
        table[defn.binding] = defn
        self.by_name[defn.name] = defn

    def __iter__(self):
        return iter(self.by_name.values())

    def __contains__(self, name: str) -> bool:
        return name in self.by_name


class HeaderStack:
    """Ordered header view of a frame; everything after the last header is payload."""

    __slots__ = ("headers", "data", "payload_offset")

    def __init__(self, headers: list[Header], data: bytes, payload_offset: int) -> None:
        self.headers = headers
        self.data = data
        self.payload_offset = payload_offset

    @property
    def payload(self) -> bytes:
        return self.data[self.payload_offset:]

    @property
    def names(self) -> list[str]:
        return [h.defn.name for h in self.headers]

    def get(self, name: str) -> Header | None:
        for h in self.headers:
            if h.defn.name == name:
                return h
        return None

    def index(self, name: str) -> int | None:
        for i, h in enumerate(self.headers):
            if h.defn.name == name:
                return i
        return None

    def copy(self) -> "HeaderStack":
        return HeaderStack([h.copy() for h in self.headers], self.data, self.payload_offset)

    def deparse(self) -> bytes:
        """Emit headers in stack order, then the payload.

        Untouched headers are copied from the original bytes; modified ones are
        re-packed, and a modified IPv4 header gets a fresh checksum.
        """
        data = self.data
        parts = []
        for h in self.headers:
            if not h.dirty:
                parts.append(data[h.offset:h.offset + h.defn.size])
            elif h.defn is IPV4:
                h.fields["header_checksum"] = 0
                raw = IPV4.pack(h.fields)
                csum = kernels.internet_checksum(raw)
                h.fields["header_checksum"] = csum
                parts.append(raw[:10] + csum.to_bytes(2, "big") + raw[12:])
            else:
                parts.append(h.defn.pack(h.fields))
        parts.append(data[self.payload_offset:])
        return b"".join(parts)

    def header_region(self) -> list[tuple[str, int, int]]:
        """(name, start, end) byte ranges as laid out by :meth:`deparse`."""
        out = []
        pos = 0
        for h in self.headers:
            out.append((h.defn.name, pos, pos + h.defn.size))
            pos += h.defn.size
        return out


def parse_stack(data: bytes, known: HeaderRegistry | Iterable[CustomHeaderDef] = ()) -> HeaderStack:
    """Walk protocol fields from Ethernet onward.

    An unknown ethertype or IP protocol ends the header stack; the rest of the
    frame is opaque payload. Truncated headers raise :class:`ParseError`.
    """
    reg = known if isinstance(known, HeaderRegistry) else HeaderRegistry(known or ())
    fields = ETHERNET.unpack(data, 0)
    headers = [Header(ETHERNET, fields, 0)]
    code = fields["ethertype"]
    off = 14
    # fast path for the overwhelmingly common Ethernet/IPv4/UDP|TCP frame
    if code == ETHERTYPE_IPV4:
        fields = IPV4.unpack(data, 14)
        if fields["version"] != 4 or fields["ihl"] != 5:
            raise ParseError(
                f"unsupported IPv4 header (version {fields['version']}, ihl {fields['ihl']})")
        headers.append(Header(IPV4, fields, 14))
        off = 34
        code = fields["protocol"]
        if code == IPPROTO_UDP:
            headers.append(Header(UDP, UDP.unpack(data, 34), 34))
            return HeaderStack(headers, data, 42)
        ns = "ip"
    else:
        ns = "eth"
    while len(headers) < MAX_HEADERS:
        if ns == "eth":
            if code == ETHERTYPE_IPV4:
                fields = IPV4.unpack(data, off)
                if fields["version"] != 4 or fields["ihl"] != 5:
                    raise ParseError(
                        f"unsupported IPv4 header (version {fields['version']}, ihl {fields['ihl']})")
                headers.append(Header(IPV4, fields, off))
                off += 20
                ns, code = "ip", fields["protocol"]
                continue
            defn = reg.eth.get(code)
        else:
            if code == IPPROTO_UDP:
                headers.append(Header(UDP, UDP.unpack(data, off), off))
                off += UDP.size
                break
            if code == IPPROTO_TCP:
                headers.append(Header(TCP, TCP.unpack(data, off), off))
                off += TCP.size
                break
            defn = reg.ip.get(code)
        if defn is None:
            break
        fields = defn.unpack(data, off)
        headers.append(Header(defn, fields, off))
        off += defn.size
        ns = defn.chains_into()
        if ns is None:
            break
        code = fields[defn.chain_field]
    return HeaderStack(headers, data, off)


def _base_index(stack: HeaderStack, layer: Layer) -> int | None:
    """Index of the header that anchors ``layer``: IPv4 for L3, UDP/TCP for L4,
    or a custom header that replaced one of them."""
    for i, h in enumerate(stack.headers):
        d = h.defn
        if layer is Layer.LAYER_3 and (d is IPV4 or (
                isinstance(d, CustomHeaderDef) and d.layer is Layer.LAYER_3 and d.op is Op.REPLACE)):
            return i
        if layer is Layer.LAYER_4 and (d is UDP or d is TCP or (
                isinstance(d, CustomHeaderDef) and d.layer is Layer.LAYER_4 and d.op is Op.REPLACE)):
            return i
    return None


def _adjust_ip_length(stack: HeaderStack, pos: int, delta: int) -> None:
    for i, h in enumerate(stack.headers[:pos]):
        if h.defn is IPV4:
            h.set("total_length", h.fields["total_length"] + delta)
            return


def insert_header(stack: HeaderStack, defn: CustomHeaderDef,
                  values: Mapping[str, int] | None = None) -> Header:
    """Place ``defn`` according to its layer/op, rewriting protocol chaining.

    The header that precedes the new one has its next-protocol field replaced
    by the custom header's binding; the displaced value moves into the custom
    header's chaining field. ADD_AFTER appends after the last header of its layer.
    """
    # the chaining field is always overwritten below, so it needs no default
    given = dict(values or {})
    if defn.chain_field is not None:
        given.setdefault(defn.chain_field, 0)
    vals = complete_values(defn, given)
    hs = stack.headers
    layer, op = defn.layer, defn.op
    if layer is Layer.LAYER_2:
        pos = max(i for i, h in enumerate(hs) if h.defn.layer is Layer.LAYER_2) + 1
    else:
        base = _base_index(stack, layer)
        if base is None:
            raise HeaderError(
                f"cannot place {defn.name!r} ({layer.name}/{op.value}): packet has no {layer.name} header")
        if op is Op.ADD_AFTER:
            pos = max(i for i, h in enumerate(hs) if h.defn.layer is layer) + 1
        else:
            pos = base
    prev = hs[pos - 1]
    nf = prev.next_field()
    if nf is None:
        raise HeaderError(f"cannot chain {defn.name!r} after {prev.name!r}: no protocol field")
    if op is Op.REPLACE:
        old = hs[pos]
        if defn.chain_field is not None:
            old_nf = old.next_field()
            if old_nf is not None:
                vals[defn.chain_field] = old.fields[old_nf]
        new = Header(defn, vals)
        hs[pos] = new
        delta = defn.size - old.defn.size
    else:
        vals[defn.chain_field] = prev.fields[nf]
        new = Header(defn, vals)
        hs.insert(pos, new)
        delta = defn.size
    prev.set(nf, defn.binding)
    if delta:
        _adjust_ip_length(stack, pos, delta)
    return new


def remove_header(stack: HeaderStack, defn: CustomHeaderDef) -> Header:
    """Exact inverse of :func:`insert_header` for the ADD_* operators."""
    pos = stack.index(defn.name)
    if pos is None:
        raise HeaderError(f"packet carries no {defn.name!r} header")
    if defn.op is Op.REPLACE:
        raise HeaderError(f"{defn.name!r} replaced a standard header and cannot be stripped")
    hs = stack.headers
    removed = hs.pop(pos)
    prev = hs[pos - 1]
    nf = prev.next_field()
    prev.set(nf, removed.fields[defn.chain_field])
    _adjust_ip_length(stack, pos, -defn.size)
    return removed
