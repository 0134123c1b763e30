import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from dpsim.packet import (
    CustomHeaderDef, HeaderDef, HeaderError, HeaderRegistry, Layer, Op, Packet, ParseError,
    decode_custom, encode_custom, insert_custom, insert_header, parse_stack, strip_custom, udp_frame,
)
from dpsim.packet.headers import FieldDef

from helpers import frame


def tunnel(**kw):
    kw.setdefault("ethertype", 0x1212)
    return CustomHeaderDef("myTunnel", [("proto_id", 16), ("dst_id", 16)], "LAYER_3", "ADD_BEFORE",
                           defaults={"proto_id": 0x0800, "dst_id": 0x22}, **kw)


def pack_oracle(widths, values):
    """Concatenate bit strings, the slow and obvious way."""
    bits = "".join(format(v, f"0{w}b") for w, v in zip(widths, values))
    return bytes(int(bits[i:i + 8], 2) for i in range(0, len(bits), 8))


def ones_sum_ok(header: bytes) -> bool:
    total = sum(int.from_bytes(header[i:i + 2], "big") for i in range(0, len(header), 2))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total == 0xFFFF


# encode / decode

def test_tunnel_encoding():
    assert encode_custom(tunnel(), {}) == bytes([0x08, 0x00, 0x00, 0x22])
    assert decode_custom(tunnel(), bytes([0x08, 0x00, 0x00, 0x22])) == {"proto_id": 0x0800, "dst_id": 0x22}


def test_small_layouts():
    one = CustomHeaderDef("one", [("f", 8)], "LAYER_3", "REPLACE", ethertype=0x88B5)
    assert encode_custom(one, {"f": 0}) == b"\x00"
    split = CustomHeaderDef("split", [("a", 4), ("b", 12)], "LAYER_3", "REPLACE", ethertype=0x88B6)
    assert encode_custom(split, {"a": 0xF, "b": 0x123}) == bytes([0xF1, 0x23])


def test_value_too_wide_names_field():
    with pytest.raises(HeaderError, match="dst_id"):
        encode_custom(tunnel(), {"dst_id": 0x1_0000})


def test_missing_value_is_an_error():
    bare = CustomHeaderDef("bare", [("proto_id", 16), ("x", 16)], ethertype=0x88B7)
    with pytest.raises(HeaderError, match="x"):
        encode_custom(bare, {"proto_id": 1})


@pytest.mark.parametrize("data", [b"", b"\x08\x00\x00"])
def test_truncated_decode(data):
    with pytest.raises(ParseError):
        decode_custom(tunnel(), data)


@pytest.mark.parametrize("fields,err", [
    ([("a", 4)], "whole number of bytes"),
    ([("a", 0), ("b", 8)], "outside"),
    ([("a", 65), ("b", 7)], "outside"),
    ([("a", 8), ("a", 8)], "duplicate"),
])
def test_bad_definitions(fields, err):
    with pytest.raises(HeaderError, match=err):
        HeaderDef("h", fields, Layer.LAYER_3)


def test_add_requires_chaining_field():
    with pytest.raises(HeaderError, match="proto_id"):
        CustomHeaderDef("t", [("dst_id", 16)], "LAYER_3", "ADD_BEFORE", ethertype=0x1212)


def test_ipv4_ethertype_is_reserved():
    with pytest.raises(HeaderError, match="0x0800"):
        tunnel(ethertype=0x0800)


# insert / strip / parse

def test_insert_before_ipv4():
    pkt = Packet(1, frame())
    out = insert_custom(pkt, tunnel())
    assert len(out.data) == len(pkt.data) + 4
    assert out.data[12:14] == b"\x12\x12"
    assert out.data[14:18] == bytes([0x08, 0x00, 0x00, 0x22])
    assert out.data[18:] == pkt.data[14:]
    st_ = parse_stack(out.data, [tunnel()])
    assert st_.names == ["ethernet", "myTunnel", "ipv4", "udp"]
    assert strip_custom(out, tunnel()).data == pkt.data


def test_parse_plain_frame():
    assert parse_stack(frame()).names == ["ethernet", "ipv4", "udp"]


def test_unknown_ethertype_is_payload():
    data = frame()[:12] + b"\xbe\xef" + b"opaque bytes"
    s = parse_stack(data)
    assert s.names == ["ethernet"]
    assert s.payload == b"opaque bytes"


def test_tunnel_without_definition_is_payload():
    data = insert_custom(Packet(1, frame()), tunnel()).data
    assert parse_stack(data).names == ["ethernet"]


def test_truncated_ipv4_raises():
    with pytest.raises(ParseError):
        parse_stack(frame()[:30])
    with pytest.raises(ParseError):
        parse_stack(b"")


def test_strip_absent_header():
    with pytest.raises(HeaderError, match="no 'myTunnel'"):
        strip_custom(Packet(1, frame()), tunnel())


def test_l4_replace_needs_l4():
    shim = CustomHeaderDef("shim", [("x", 32)], "LAYER_4", "REPLACE", ip_protocol=253)
    ip_only = frame()[:23] + b"\xfe" + frame()[24:34] + b"rest"
    with pytest.raises(HeaderError, match="LAYER_4"):
        insert_custom(Packet(1, ip_only), shim, {"x": 1})


def test_l4_add_before_rewrites_ip_protocol():
    shim = CustomHeaderDef("shim", [("proto_id", 8), ("tag", 24)], "LAYER_4", "ADD_BEFORE",
                           ip_protocol=253, defaults={"tag": 7})
    pkt = Packet(1, frame())
    out = insert_custom(pkt, shim)
    s = parse_stack(out.data, [shim])
    assert s.names == ["ethernet", "ipv4", "shim", "udp"]
    assert s.get("ipv4")["protocol"] == 253 and s.get("shim")["proto_id"] == 17
    assert s.get("ipv4")["total_length"] == parse_stack(pkt.data).get("ipv4")["total_length"] + 4
    assert ones_sum_ok(out.data[14:34])
    assert strip_custom(out, shim).data == pkt.data


def test_stacked_add_after_appends_behind_last():
    a = CustomHeaderDef("a", [("proto_id", 16)], "LAYER_2", "ADD_AFTER", ethertype=0x88B5)
    b = CustomHeaderDef("b", [("proto_id", 16)], "LAYER_2", "ADD_AFTER", ethertype=0x88B6)
    s = parse_stack(frame(), [a, b])
    insert_header(s, a)
    insert_header(s, b)
    assert parse_stack(s.deparse(), [a, b]).names == ["ethernet", "a", "b", "ipv4", "udp"]


def test_ttl_mutation_keeps_checksum_valid():
    s = parse_stack(frame(ttl=9))
    s.get("ipv4").set("ttl", 8)
    out = s.deparse()
    assert out[22] == 8 and ones_sum_ok(out[14:34])


# properties

@st.composite
def layouts(draw):
    widths = draw(st.lists(st.integers(1, 64), min_size=1, max_size=10))
    if sum(widths) % 8:
        widths.append(8 - sum(widths) % 8)
    return widths


@settings(max_examples=1000, deadline=None)
@given(layouts(), st.data())
def test_encode_decode_identity(widths, data):
    fields = [FieldDef(f"f{i}", w) for i, w in enumerate(widths)]
    defn = CustomHeaderDef("h", fields, "LAYER_3", "REPLACE", ethertype=0x88B5)
    values = {f.name: data.draw(st.integers(0, (1 << f.width) - 1)) for f in fields}
    raw = encode_custom(defn, values)
    assert raw == pack_oracle(widths, [values[f.name] for f in fields])
    assert decode_custom(defn, raw) == values


PLACEMENTS = [("LAYER_2", "ADD_AFTER", "eth"), ("LAYER_3", "ADD_BEFORE", "eth"),
              ("LAYER_3", "ADD_AFTER", "ip"), ("LAYER_4", "ADD_BEFORE", "ip")]


@st.composite
def custom_defs(draw):
    layer, op, ns = draw(st.sampled_from(PLACEMENTS))
    extra = draw(layouts())
    fields = [("proto_id", 16)] + [(f"f{i}", w) for i, w in enumerate(extra)]
    if ns == "eth":
        code = draw(st.integers(0x0600, 0xFFFF).filter(lambda c: c != 0x0800))
        kw = {"ethertype": code}
    else:
        code = draw(st.integers(0, 255).filter(lambda c: c not in (6, 17)))
        kw = {"ip_protocol": code}
    defaults = {n: draw(st.integers(0, (1 << w) - 1)) for n, w in fields[1:]}
    return CustomHeaderDef("c", fields, layer, op, defaults=defaults, **kw)


@settings(max_examples=300, deadline=None)
@given(custom_defs(), st.binary(max_size=64), st.integers(1, 255), st.integers(0, 65535))
def test_insert_strip_identity(defn, payload, ttl, dport):
    original = udp_frame(0xA, 0xB, 0x0A000001, 0x0A000002, 1234, dport, payload, ttl=ttl)
    pkt = Packet(1, original)
    out = insert_custom(pkt, defn)
    assert len(out.data) == len(original) + defn.size
    assert out.data.endswith(payload)
    s = parse_stack(out.data, HeaderRegistry([defn]))
    assert "c" in s.names and s.payload == payload
    ip = s.get("ipv4")
    assert ones_sum_ok(out.data[ip.offset:ip.offset + 20])
    assert strip_custom(out, defn).data == original


@settings(max_examples=300, deadline=None)
@given(custom_defs(), st.binary(max_size=32))
def test_offsets_tile_header_region(defn, payload):
    data = insert_custom(Packet(1, udp_frame(1, 2, 3, 4, 5, 6, payload)), defn).data
    s = parse_stack(data, [defn])
    pos = 0
    for h in s.headers:
        assert h.offset == pos
        pos += h.size
    assert pos == s.payload_offset == len(data) - len(payload)
    assert s.deparse() == data
