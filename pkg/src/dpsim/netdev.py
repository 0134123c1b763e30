"""Hosts, NIC devices, full-duplex point-to-point links, and traffic apps."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .engine import Engine, SeededRng, draw_exponential
from .packet import (
    CustomHeaderDef, HeaderError, HeaderRegistry, ParseError, insert_header, parse_stack, udp_frame,
)
from .stats import Stats
from .units import NS_PER_S, format_ipv4, serialization_ns

DEFAULT_TX_QUEUE = 1000


@dataclass
class HeaderPolicy:
    """Insert ``header`` into UDP/TCP frames whose destination port is in range.

    ``values`` maps destination IPv4 (as int) to per-destination field values.
    """

    header: CustomHeaderDef
    port_lo: int = 10_000
    port_hi: int = 12_000
    values: dict[int, dict[str, int]] = field(default_factory=dict)

    def applies(self, dst_port: int) -> bool:
        return self.port_lo <= dst_port <= self.port_hi


class _Direction:
    __slots__ = ("link", "dst", "busy_until", "point", "starts", "rx_packets", "rx_bytes")

    def __init__(self, link: "Link", dst: "NetDevice", point: str) -> None:
        self.link = link
        self.dst = dst
        self.busy_until = 0
        self.point = point
        self.starts: deque = deque()  # start times of frames still waiting for the wire
        self.rx_packets = 0
        self.rx_bytes = 0


class Link:
    """Full-duplex channel; each direction serializes frames FIFO, independently."""

    def __init__(self, engine: Engine, a: "NetDevice", b: "NetDevice", bandwidth_bps: int,
                 delay_ns: int, stats: Stats, name_ab: str | None = None,
                 name_ba: str | None = None) -> None:
        if bandwidth_bps <= 0:
            raise ValueError("link bandwidth must be positive")
        if delay_ns < 0:
            raise ValueError("propagation delay cannot be negative")
        self.engine = engine
        self.stats = stats
        self.bandwidth_bps = bandwidth_bps
        self.delay = delay_ns
        self.ab = _Direction(self, b, name_ab or f"{a.name}->{b.name}")
        self.ba = _Direction(self, a, name_ba or f"{b.name}->{a.name}")
        a.attach(self.ab)
        b.attach(self.ba)
        a.inbound = self.ba
        b.inbound = self.ab
        stats.add_source(self._flush_counters)

    def _flush_counters(self, stats: Stats) -> None:
        for d in (self.ab, self.ba):
            if d.rx_packets:
                c = stats.counters[d.point]
                c["rx_packets"] = d.rx_packets
                c["rx_bytes"] = d.rx_bytes

    def transmit(self, direction: _Direction, pkt_id: int, data: bytes, now: int) -> int:
        """Commit a frame to the wire; returns its delivery time."""
        if len(data) < 14:
            raise ValueError(f"frame {pkt_id}: {len(data)} bytes is shorter than Ethernet II")
        start = direction.busy_until if direction.busy_until > now else now
        end = start + serialization_ns(len(data), self.bandwidth_bps)
        direction.busy_until = end
        if start > now:
            direction.starts.append(start)
        stats = self.stats
        detail = {"bytes": len(data), "start": start, "end": end} if stats.trace is not None else None
        stats.record(now, "link_tx", direction.point, pkt_id, detail, nbytes=len(data), at=start)
        at = end + self.delay
        self.engine.post(at, direction.dst.deliver, (pkt_id, data), kind="link_delivery")
        return at


class NetDevice:
    """A NIC or switch port: drop-tail transmit queue in front of a link direction."""

    def __init__(self, engine: Engine, owner, port: int, name: str, stats: Stats,
                 tx_capacity: int = DEFAULT_TX_QUEUE, policy: HeaderPolicy | None = None) -> None:
        if tx_capacity < 1:
            raise ValueError("tx queue capacity must be >= 1")
        self.engine = engine
        self.owner = owner
        self.port = port
        self.name = name
        self.stats = stats
        self.tx_capacity = tx_capacity
        self.policy = policy
        self._policy_registry = HeaderRegistry([policy.header]) if policy else None
        self.out: _Direction | None = None
        self.inbound: _Direction | None = None
        self.tx_drops = 0

    def attach(self, direction: _Direction) -> None:
        if self.out is not None:
            raise ValueError(f"{self.name} is already connected")
        self.out = direction

    def augment(self, data: bytes, dst_ip: int, dst_port: int) -> bytes:
        """Apply the header policy. A frame already carrying the header is left alone."""
        policy = self.policy
        if policy is None or not policy.applies(dst_port):
            return data
        stack = parse_stack(data, self._policy_registry)
        if stack.get(policy.header.name) is not None:
            return data
        insert_header(stack, policy.header, policy.values.get(dst_ip, {}))
        return stack.deparse()

    def send(self, pkt_id: int, data: bytes) -> bool:
        out = self.out
        if out is None:
            raise RuntimeError(f"{self.name} has no link")
        now = self.engine.now
        starts = out.starts
        while starts and starts[0] <= now:
            starts.popleft()
        if len(starts) >= self.tx_capacity:
            self.tx_drops += 1
            self.stats.record(now, "drop", self.name, pkt_id, {"cause": "tx_overflow"})
            return False
        out.link.transmit(out, pkt_id, data, now)
        return True

    def deliver(self, arg) -> None:
        pkt_id, data = arg
        d = self.inbound
        d.rx_packets += 1
        d.rx_bytes += len(data)
        if self.stats.trace is not None:
            self.stats.write_trace(self.engine.now, "link_rx", d.point, pkt_id, {"bytes": len(data)})
        self.owner.receive(self.port, pkt_id, data)


class Host:
    """An end host with a single NIC and static L2 resolution."""

    def __init__(self, name: str, engine: Engine, stats: Stats, ip: int, mac: int,
                 registry: HeaderRegistry | None = None, arp: dict[int, int] | None = None) -> None:
        self.name = name
        self.engine = engine
        self.stats = stats
        self.ip = ip
        self.mac = mac
        self.registry = registry or HeaderRegistry()
        self.arp = arp if arp is not None else {}
        self.device: NetDevice | None = None
        self.sinks: dict[int, str] = {}
        self._ident = 0
        self._payloads: dict[int, bytes] = {}
        self.unmatched = 0

    def add_device(self, tx_capacity: int = DEFAULT_TX_QUEUE,
                   policy: HeaderPolicy | None = None) -> NetDevice:
        if self.device is not None:
            raise ValueError(f"host {self.name} already has a NIC")
        self.device = NetDevice(self.engine, self, 0, f"{self.name}:nic", self.stats,
                                tx_capacity, policy)
        return self.device

    def add_sink(self, port: int) -> str:
        point = f"{self.name}:{port}"
        self.sinks[port] = point
        return point

    def build_frame(self, dst_ip: int, src_port: int, dst_port: int, payload_size: int) -> bytes:
        payload = self._payloads.get(payload_size)
        if payload is None:
            payload = self._payloads[payload_size] = bytes(payload_size)
        dst_mac = self.arp.get(dst_ip)
        if dst_mac is None:
            raise KeyError(f"host {self.name}: no MAC known for destination {dst_ip:#010x}")
        self._ident += 1
        frame = udp_frame(self.mac, dst_mac, self.ip, dst_ip, src_port, dst_port, payload,
                          identification=self._ident)
        return self.device.augment(frame, dst_ip, dst_port)

    def send_udp(self, pkt_id: int, dst_ip: int, src_port: int, dst_port: int,
                 payload_size: int) -> bool:
        return self.device.send(pkt_id, self.build_frame(dst_ip, src_port, dst_port, payload_size))

    def _unmatched(self, pkt_id: int, cause: str) -> None:
        self.unmatched += 1
        self.stats.record(self.engine.now, "drop", self.name, pkt_id, {"cause": cause})

    def receive(self, port: int, pkt_id: int, data: bytes) -> None:
        try:
            stack = parse_stack(data, self.registry)
        except (ParseError, HeaderError):
            self._unmatched(pkt_id, "malformed")
            return
        ip = stack.get("ipv4")
        udp = stack.get("udp")
        if ip is None or udp is None or ip.fields["dst_ip"] != self.ip:
            self._unmatched(pkt_id, "unmatched")
            return
        point = self.sinks.get(udp.fields["dst_port"])
        if point is None:
            self._unmatched(pkt_id, "unmatched")
            return
        payload = len(data) - stack.payload_offset
        stats = self.stats
        detail = {"bytes": payload, "frame_bytes": len(data)} if stats.trace is not None else None
        stats.record(self.engine.now, "sink_rx", point, pkt_id, detail, nbytes=payload,
                     frame_bytes=len(data))


class CbrApp:
    """Constant rate UDP source; first packet at ``start``, none at or after ``stop``."""

    def __init__(self, name: str, host: Host, dst_ip: int, dst_port: int, payload_size: int,
                 interval_ns: int, start: int, stop: int, src_port: int = 49152) -> None:
        if interval_ns <= 0:
            raise ValueError("CBR interval must be positive")
        self.name = name
        self.host = host
        self.engine = host.engine
        self.stats = host.stats
        self.dst_ip = dst_ip
        self._dst_text = format_ipv4(dst_ip)
        self.dst_port = dst_port
        self.src_port = src_port
        self.payload_size = payload_size
        self.interval = interval_ns
        self.start_at = start
        self.stop_at = stop
        self.sent = 0

    def start(self) -> None:
        if self.start_at < self.stop_at:
            self.engine.post(self.start_at, self._fire, kind="app_fire")

    def _emit(self) -> None:
        engine = self.engine
        pkt_id = engine.next_packet_id()
        self.sent += 1
        stats = self.stats
        detail = ({"bytes": self.payload_size, "dst": self._dst_text, "dport": self.dst_port}
                  if stats.trace is not None else None)
        stats.record(engine.now, "app_tx", self.name, pkt_id, detail, nbytes=self.payload_size)
        self.host.send_udp(pkt_id, self.dst_ip, self.src_port, self.dst_port, self.payload_size)

    def _fire(self, _=None) -> None:
        self._emit()
        nxt = self.engine.now + self.interval
        if nxt < self.stop_at:
            self.engine.post(nxt, self._fire, kind="app_fire")


class OnOffApp(CbrApp):
    """Alternating exponential on/off periods, CBR spacing while on.

    Starts in the on state. A period boundary cuts the spacing short; packets
    are never split.
    """

    def __init__(self, name: str, host: Host, dst_ip: int, dst_port: int, payload_size: int,
                 interval_ns: int, start: int, stop: int, rng: SeededRng,
                 on_mean: float = 2.0, off_mean: float = 1.0, src_port: int = 49152) -> None:
        super().__init__(name, host, dst_ip, dst_port, payload_size, interval_ns, start, stop,
                         src_port)
        if on_mean <= 0 or off_mean <= 0:
            raise ValueError("on/off means must be positive")
        self.rng = rng
        self.on_mean = on_mean
        self.off_mean = off_mean
        self.on_end = 0
        self.on_time = 0

    def start(self) -> None:
        if self.start_at < self.stop_at:
            self.engine.post(self.start_at, self._on, kind="app_fire")

    def _on(self, _=None) -> None:
        now = self.engine.now
        dur = round(draw_exponential(self.rng, self.on_mean) * NS_PER_S)
        self.on_end = now + dur
        self.on_time += min(self.on_end, self.stop_at) - now
        if dur > 0:
            self._fire()
        else:
            self._off()

    def _off(self) -> None:
        nxt = self.on_end + round(draw_exponential(self.rng, self.off_mean) * NS_PER_S)
        if nxt < self.stop_at:
            self.engine.post(nxt, self._on, kind="app_fire")

    def _fire(self, _=None) -> None:
        self._emit()
        nxt = self.engine.now + self.interval
        if nxt < self.on_end and nxt < self.stop_at:
            self.engine.post(nxt, self._fire, kind="app_fire")
        else:
            self._off()
