import io

import pytest

from dpsim.engine import Engine, SeededRng
from dpsim.netdev import CbrApp, HeaderPolicy, Host, Link, NetDevice, OnOffApp
from dpsim.packet import CustomHeaderDef, HeaderRegistry, parse_stack
from dpsim.stats import Stats, parse_trace_line
from dpsim.units import parse_ipv4

MS = 1_000_000
H1, H2 = parse_ipv4("10.0.1.1"), parse_ipv4("10.0.2.2")
TUNNEL = CustomHeaderDef("myTunnel", [("proto_id", 16), ("dst_id", 16)], "LAYER_3", "ADD_BEFORE",
                         ethertype=0x1212, defaults={"dst_id": 0})


class Recorder:
    """Owner of a far-end device; logs what arrives."""

    def __init__(self, engine):
        self.engine = engine
        self.got = []

    def receive(self, port, pkt_id, data):
        self.got.append((self.engine.now, pkt_id, data))


def host_pair(bw=10_000_000, delay=0, policy=None, tx_capacity=1000, trace=None):
    engine, stats = Engine(), Stats(trace=trace)
    arp = {H1: 0xA1, H2: 0xA2}
    reg = HeaderRegistry([TUNNEL])
    h1 = Host("h1", engine, stats, H1, 0xA1, reg, arp)
    h2 = Host("h2", engine, stats, H2, 0xA2, reg, arp)
    d1 = h1.add_device(tx_capacity, policy)
    d2 = h2.add_device()
    link = Link(engine, d1, d2, bw, delay, stats)
    return engine, stats, h1, h2, link


def raw_pair(bw, delay=0):
    engine, stats = Engine(), Stats()
    ra, rb = Recorder(engine), Recorder(engine)
    a = NetDevice(engine, ra, 0, "a", stats)
    b = NetDevice(engine, rb, 0, "b", stats)
    Link(engine, a, b, bw, delay, stats)
    return engine, a, b, ra, rb


# links

def test_back_to_back_frames_are_one_frame_time_apart():
    engine, a, b, ra, rb = raw_pair(10_000_000)
    engine.schedule(0, lambda _: (a.send(1, bytes(1250)), a.send(2, bytes(1250))))
    engine.run_until(10 * MS)
    assert [t for t, _, _ in rb.got] == [MS, 2 * MS]


def test_serialization_at_gigabit():
    engine, a, b, ra, rb = raw_pair(1_000_000_000)
    engine.schedule(500, lambda _: a.send(1, bytes(1000)))
    engine.run_until(MS)
    assert rb.got[0][0] == 500 + 8000


def test_propagation_delay_adds():
    engine, a, b, ra, rb = raw_pair(1_000_000_000, delay=2 * MS)
    engine.schedule(0, lambda _: a.send(1, bytes(1000)))
    engine.run_until(10 * MS)
    assert rb.got[0][0] == 8000 + 2 * MS


def test_directions_do_not_contend():
    engine, a, b, ra, rb = raw_pair(10_000_000)
    engine.schedule(0, lambda _: (a.send(1, bytes(1250)), b.send(2, bytes(1250))))
    engine.run_until(10 * MS)
    assert ra.got[0][0] == rb.got[0][0] == MS


def test_short_frame_rejected():
    engine, a, *_ = raw_pair(10_000_000)
    with pytest.raises(ValueError):
        a.send(1, bytes(10))


def test_link_never_exceeds_bandwidth():
    engine, a, b, ra, rb = raw_pair(8_000_000)
    sizes = [64, 1500, 300, 1000, 90] * 20
    engine.schedule(0, lambda _: [a.send(i, bytes(n)) for i, n in enumerate(sizes)])
    engine.run_until(10**9)
    t = [x[0] for x in rb.got]
    for i in range(1, len(sizes)):
        assert t[i] - t[i - 1] == sizes[i] * 1000  # 1 us per byte at 8 Mbps


def test_tx_queue_overflow():
    engine, stats, h1, h2, _ = host_pair(tx_capacity=2)
    h2.add_sink(9000)
    engine.schedule(0, lambda _: [h1.send_udp(i, H2, 1, 9000, 1000) for i in range(5)])
    engine.run_until(100 * MS)
    # one frame goes straight onto the wire, two wait, two are refused
    assert h1.device.tx_drops == 2
    assert stats.counter("h1:nic", "drop:tx_overflow") == 2
    assert stats.counter("h2:9000", "rx_packets") == 3


# header policy

def tunnel_policy():
    return HeaderPolicy(TUNNEL, values={H2: {"dst_id": 0x22}})


def test_policy_applies_in_port_range():
    engine, stats, h1, *_ = host_pair(policy=tunnel_policy())
    s = parse_stack(h1.build_frame(H2, 1, 11000, 100), [TUNNEL])
    assert s.names == ["ethernet", "myTunnel", "ipv4", "udp"]
    assert s.get("ethernet")["ethertype"] == 0x1212
    assert s.get("myTunnel").fields == {"proto_id": 0x0800, "dst_id": 0x22}


@pytest.mark.parametrize("dport", [9999, 12001])
def test_policy_leaves_other_ports(dport):
    engine, stats, h1, *_ = host_pair(policy=tunnel_policy())
    s = parse_stack(h1.build_frame(H2, 1, dport, 100), [TUNNEL])
    assert s.names == ["ethernet", "ipv4", "udp"]


def test_policy_is_idempotent():
    engine, stats, h1, *_ = host_pair(policy=tunnel_policy())
    once = h1.build_frame(H2, 1, 10000, 10)
    assert h1.device.augment(once, H2, 10000) == once


def test_unknown_destination_mac():
    engine, stats, h1, *_ = host_pair()
    with pytest.raises(KeyError):
        h1.build_frame(parse_ipv4("10.9.9.9"), 1, 2, 3)


# receive

def test_tunneled_frame_reaches_sink():
    engine, stats, h1, h2, _ = host_pair(policy=tunnel_policy())
    point = h2.add_sink(11000)
    engine.schedule(0, lambda _: h1.send_udp(1, H2, 5, 11000, 500))
    engine.run_until(10 * MS)
    assert stats.counter(point, "rx_packets") == 1
    assert stats.counter(point, "rx_bytes") == 500
    assert stats.counter(point, "rx_frame_bytes") == 500 + 42 + 4


def test_unmatched_frames():
    engine, stats, h1, h2, link = host_pair()
    h2.add_sink(9000)
    junk = bytes(12) + b"\xbe\xef" + bytes(50)
    engine.schedule(0, lambda _: (h1.send_udp(1, H2, 5, 9001, 10), h1.device.send(2, junk)))
    engine.run_until(10 * MS)
    assert h2.unmatched == 2
    assert stats.counter("h2", "drop:unmatched") == 2


# apps

def test_cbr_exact_spacing():
    buf = io.StringIO()
    engine, stats, h1, h2, _ = host_pair(bw=10**9, trace=buf)
    h2.add_sink(9000)
    app = CbrApp("a", h1, H2, 9000, 100, MS, start=3 * MS, stop=8 * MS)
    app.start()
    engine.run_until(20 * MS)
    tx = [parse_trace_line(x) for x in buf.getvalue().splitlines()]
    assert [e.time for e in tx if e.kind == "app_tx"] == [3 * MS, 4 * MS, 5 * MS, 6 * MS, 7 * MS]
    assert app.sent == 5 == stats.counter("h2:9000", "rx_packets")
    assert stats.counter("h2:9000", "rx_bytes") == 500


def test_cbr_rejects_zero_interval():
    engine, stats, h1, *_ = host_pair()
    with pytest.raises(ValueError):
        CbrApp("a", h1, H2, 9000, 100, 0, 0, MS)


def test_onoff_duty_cycle():
    engine, stats, h1, h2, _ = host_pair(bw=10**9)
    h2.add_sink(9000)
    stop = 900 * 10**9  # about 300 on/off cycles
    app = OnOffApp("f", h1, H2, 9000, 10, 10 * MS, 0, stop, SeededRng(7, "app/f"))
    app.start()
    engine.run_until(stop)
    full = stop // (10 * MS)
    assert abs(app.sent / full - 2 / 3) <= 0.05 * 2 / 3
    # bursts are CBR-spaced, so sent packets track the on time closely
    assert abs(app.sent - app.on_time / (10 * MS)) <= 400


def test_onoff_is_deterministic_per_seed():
    def run(seed):
        engine, stats, h1, h2, _ = host_pair(bw=10**9)
        h2.add_sink(9000)
        app = OnOffApp("f", h1, H2, 9000, 10, 10 * MS, 0, 60 * 10**9, SeededRng(seed, "app/f"))
        app.start()
        engine.run_until(60 * 10**9)
        return app.sent
    assert run(1) == run(1) != run(2)
