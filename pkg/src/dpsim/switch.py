"""The programmable switch: input buffer, per-port virtual queues, poll scheduler.

Packets received from a port land in the low-priority input subqueue;
resubmitted and recirculated packets use the high one, which always drains
first. Ingress runs at the arrival instant. A forwarded packet joins virtual
queue ``(egress_port, priority)`` carrying a label, its expected dequeue time.
A single poll event per switch, on a grid of period 1/switch_rate, dequeues at
most one eligible packet (label <= now) per attempt: ports are scanned round
robin and qids in strict priority order, 0 first.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import asdict, dataclass

from .engine import Engine
from .packet import InstanceType, Packet, PacketMeta, ParseError, parse_stack
from .pipeline import Pipeline
from .stats import Stats
from .units import interval_ns

log = logging.getLogger(__name__)

NUM_QUEUES = 8
LABEL_MODES = ("finish", "start")


@dataclass
class SwitchConfig:
    """Switch model parameters.

    ``label_mode`` picks the queue label recurrence. ``finish`` (default):
    label = max(now, next_available) + 1/rate, i.e. the instant the queue has
    served the packet. ``start``: label = max(now, next_available), with
    next_available advanced by 1/rate afterwards.
    """

    num_ports: int = 4
    switch_rate_pps: float = 1_000_000
    input_buffer_capacity: int = 1024
    queue_capacity: int = 1000
    default_queue_rate_pps: float | None = None
    max_internal_passes: int = 4
    label_mode: str = "finish"
    hash_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_ports < 1:
            raise ValueError("num_ports must be >= 1")
        if self.switch_rate_pps <= 0:
            raise ValueError("switch_rate_pps must be > 0")
        if self.input_buffer_capacity < 1 or self.queue_capacity < 1:
            raise ValueError("buffer capacities must be >= 1")
        if self.max_internal_passes < 1:
            raise ValueError("max_internal_passes must be >= 1")
        if self.default_queue_rate_pps is None:
            self.default_queue_rate_pps = self.switch_rate_pps
        if self.default_queue_rate_pps <= 0:
            raise ValueError("default_queue_rate_pps must be > 0")
        if self.label_mode not in LABEL_MODES:
            raise ValueError(f"label_mode must be one of {LABEL_MODES}")


class VirtualQueue:
    __slots__ = ("qid", "rate_pps", "interval", "capacity", "fifo", "next_available", "finish")

    def __init__(self, qid: int, rate_pps: float, capacity: int, finish: bool = True) -> None:
        self.qid = qid
        self.rate_pps = rate_pps
        self.interval = interval_ns(rate_pps)
        self.capacity = capacity
        self.fifo: deque = deque()  # (label, packet, header stack)
        self.next_available = 0
        self.finish = finish

    def next_label(self, now: int) -> int:
        start = self.next_available if self.next_available > now else now
        if self.finish:
            label = start + self.interval
            self.next_available = label
        else:
            label = start
            self.next_available = start + self.interval
        return label

    def set_rate(self, rate_pps: float, now: int) -> None:
        """New rate applies from the next enqueue; queued labels stay as they are."""
        self.rate_pps = rate_pps
        self.interval = interval_ns(rate_pps)
        if not self.fifo:
            self.next_available = now
            return
        tail = self.fifo[-1][0]
        if self.finish:
            self.next_available = max(now, tail)
        else:
            self.next_available = max(now, tail + self.interval)


class Switch:
    def __init__(self, name: str, engine: Engine, config: SwitchConfig, pipeline: Pipeline,
                 stats: Stats | None = None) -> None:
        self.name = name
        self.engine = engine
        self.config = config
        self.pipeline = pipeline
        self.stats = stats if stats is not None else Stats()
        self.num_ports = config.num_ports
        self.ports: list = [None] * config.num_ports
        finish = config.label_mode == "finish"
        self.queues = [
            [VirtualQueue(q, config.default_queue_rate_pps, config.queue_capacity, finish)
             for q in range(NUM_QUEUES)]
            for _ in range(config.num_ports)
        ]
        self.input_high: deque = deque()
        self.input_low: deque = deque()
        self._input_pending = False
        self._backlog = [0] * config.num_ports
        self._queued = 0
        self._tick = interval_ns(config.switch_rate_pps)
        self._anchor: int | None = None
        self._last_poll: int | None = None
        self._poll = None
        self._rr = config.num_ports - 1
        self._cur_pkt = 0
        # conservation counters
        self.rx = 0
        self.clones = 0
        self.emitted = 0
        self.drops: dict[str, int] = {}
        self.polls = 0
        self.idle_polls = 0

        self._tracing = self.stats.trace is not None
        self._port_points = [f"{name}:p{p}" for p in range(config.num_ports)]
        self._table_points = {t: f"{name}:{t}" for t in pipeline.tables}
        self._enqueued = [0] * config.num_ports
        if self._tracing:
            pipeline.observer = self._observe_lookup
        self.stats.add_source(self._flush_counters)

    # -- wiring -------------------------------------------------------------------

    def attach(self, port: int, device) -> None:
        if not 0 <= port < self.num_ports:
            raise ValueError(f"{self.name}: port {port} outside 0..{self.num_ports - 1}")
        if self.ports[port] is not None:
            raise ValueError(f"{self.name}: port {port} already attached")
        self.ports[port] = device

    # -- accounting ---------------------------------------------------------------

    def _drop(self, pkt_id: int, cause: str, point: str | None = None, **extra) -> None:
        self.drops[cause] = self.drops.get(cause, 0) + 1
        detail = {"cause": cause}
        detail.update(extra)
        self.stats.record(self.engine.now, "drop", point or self.name, pkt_id, detail)

    def buffered(self) -> int:
        return len(self.input_high) + len(self.input_low) + self._queued

    def conservation(self) -> dict:
        dropped = sum(self.drops.values())
        return {
            "rx": self.rx,
            "clones": self.clones,
            "emitted": self.emitted,
            "drops": dict(sorted(self.drops.items())),
            "buffered": self.buffered(),
            "balanced": self.rx + self.clones == self.emitted + dropped + self.buffered(),
            "polls": self.polls,
            "idle_polls": self.idle_polls,
            "config": asdict(self.config),
        }

    def _observe_lookup(self, table: str, hit: bool, action: str, meta) -> None:
        detail = {"table": table, "action": action, "inst": meta.instance_type.name}
        self.stats.write_trace(self.engine.now, "table_hit" if hit else "table_miss",
                               self._table_points[table], self._cur_pkt, detail)

    def _flush_counters(self, stats: Stats) -> None:
        # lookups and enqueues are tallied locally; only the trace sees them one by one
        for tname, table in self.pipeline.tables.items():
            c = stats.counters[self._table_points[tname]]
            if table.hits:
                c["hits"] = table.hits
            if table.misses:
                c["misses"] = table.misses
        for port, n in enumerate(self._enqueued):
            if n:
                stats.counters[self._port_points[port]]["enqueued"] = n

    # -- input side ---------------------------------------------------------------

    def receive(self, port: int, pkt_id: int, data: bytes) -> bool:
        """Accept an external frame into the low input subqueue."""
        now = self.engine.now
        self.rx += 1
        if len(self.input_low) >= self.config.input_buffer_capacity:
            self._drop(pkt_id, "input_overflow")
            return False
        meta = PacketMeta(ingress_port=port, ingress_global_timestamp=now)
        self.input_low.append(Packet(pkt_id, data, meta))
        self._kick_input()
        return True

    def _kick_input(self) -> None:
        if not self._input_pending:
            self._input_pending = True
            self.engine.post(self.engine.now, self._process_input, kind="process_input")

    def _process_input(self, _=None) -> None:
        self._input_pending = False
        high, low = self.input_high, self.input_low
        while high or low:
            self._ingress(high.popleft() if high else low.popleft())

    def _reinject(self, pkt: Packet, data: bytes, inst: InstanceType) -> None:
        now = self.engine.now
        passes = pkt.meta.passes + 1
        if passes > self.config.max_internal_passes:
            self._drop(pkt.id, "loop_guard")
            return
        if len(self.input_high) >= self.config.input_buffer_capacity:
            self._drop(pkt.id, "input_overflow")
            return
        meta = PacketMeta(ingress_port=pkt.meta.ingress_port, instance_type=inst,
                          ingress_global_timestamp=now, passes=passes)
        self.input_high.append(Packet(pkt.id, data, meta))
        self._kick_input()

    def _ingress(self, pkt: Packet) -> None:
        self._cur_pkt = pkt.id
        try:
            stack = parse_stack(pkt.data, self.pipeline.registry)
        except ParseError:
            self._drop(pkt.id, "parse_error")
            return
        verdict = self.pipeline.run_ingress(stack, pkt.meta)
        if verdict.clone_port is not None and pkt.meta.instance_type is not InstanceType.CLONE:
            self._clone(pkt, stack, verdict.clone_port)
        kind = verdict.kind
        if kind == "forward":
            self._enqueue(pkt, stack, verdict.port)
        elif kind == "resubmit":
            self._reinject(pkt, pkt.data, InstanceType.RESUBMIT)
        else:
            self._drop(pkt.id, verdict.cause)

    def _clone(self, pkt: Packet, stack, port: int) -> None:
        self.clones += 1
        meta = pkt.meta
        copy_meta = PacketMeta(ingress_port=meta.ingress_port, instance_type=InstanceType.CLONE,
                               priority=meta.priority,
                               ingress_global_timestamp=self.engine.now)
        clone = Packet(self.engine.next_packet_id(), pkt.data, copy_meta)
        self._enqueue(clone, stack.copy(), port)

    def _enqueue(self, pkt: Packet, stack, port: int) -> None:
        now = self.engine.now
        if port is None or not 0 <= port < self.num_ports or self.ports[port] is None:
            self._drop(pkt.id, "bad_port")
            return
        meta = pkt.meta
        vq = self.queues[port][meta.priority]
        if len(vq.fifo) >= vq.capacity:
            self._drop(pkt.id, "queue_overflow", f"{self.name}:p{port}:q{vq.qid}",
                       port=port, qid=vq.qid)
            return
        meta.egress_port = port
        meta.enq_timestamp = now
        label = vq.next_label(now)
        vq.fifo.append((label, pkt, stack))
        self._backlog[port] += 1
        self._queued += 1
        self._enqueued[port] += 1
        if self._tracing:
            detail = {"port": port, "qid": vq.qid, "label": label, "inst": meta.instance_type.name}
            self.stats.write_trace(now, "enqueue", self._port_points[port], pkt.id, detail)
        self._arm(label)

    # -- scheduler ----------------------------------------------------------------

    def _grid_ceil(self, t: int) -> int:
        anchor = self._anchor
        if anchor is None:
            self._anchor = t
            return t
        tick = self._tick
        return anchor + (-((anchor - t) // tick)) * tick

    def _arm(self, earliest: int) -> None:
        now = self.engine.now
        t = self._grid_ceil(earliest if earliest > now else now)
        last = self._last_poll
        if last is not None and t <= last:
            t = last + self._tick
        poll = self._poll
        if poll is not None:
            if t >= poll.time:
                return
            poll.cancel()
        self._poll = self.engine.schedule(t, self._dequeue_attempt, kind="dequeue_attempt")

    def _earliest_label(self) -> int | None:
        best = None
        for p in range(self.num_ports):
            if self._backlog[p]:
                for vq in self.queues[p]:
                    if vq.fifo:
                        lab = vq.fifo[0][0]
                        if best is None or lab < best:
                            best = lab
        return best

    def _dequeue_attempt(self, _=None) -> None:
        now = self.engine.now
        self._poll = None
        self._last_poll = now
        self.polls += 1
        n = self.num_ports
        chosen = None
        p = self._rr
        for _ in range(n):
            p += 1
            if p == n:
                p = 0
            if not self._backlog[p]:
                continue
            for vq in self.queues[p]:
                fifo = vq.fifo
                if fifo and fifo[0][0] <= now:
                    chosen = vq
                    break
            if chosen is not None:
                break
        if chosen is None:
            self.idle_polls += 1
        else:
            self._rr = p
            self._backlog[p] -= 1
            self._queued -= 1
            _, pkt, stack = chosen.fifo.popleft()
            self._egress(pkt, stack, p, chosen.qid)
        if self._queued:
            earliest = self._earliest_label()
            nxt = now + self._tick
            self._arm(earliest if earliest > nxt else nxt)

    def _egress(self, pkt: Packet, stack, port: int, qid: int) -> None:
        now = self.engine.now
        meta = pkt.meta
        meta.deq_timedelta = now - meta.enq_timestamp
        meta.egress_global_timestamp = now
        self._cur_pkt = pkt.id
        verdict = self.pipeline.run_egress(stack, meta)
        data = None
        if verdict.kind != "drop":
            data = stack.deparse()
        if self._tracing:
            detail = {"port": port, "qid": qid, "inst": meta.instance_type.name,
                      "ingress_ts": meta.ingress_global_timestamp, "enq_ts": meta.enq_timestamp,
                      "deq_td": meta.deq_timedelta, "egress_ts": meta.egress_global_timestamp}
        else:
            detail = None
        self.stats.record(now, "dequeue", self._port_points[port], pkt.id, detail,
                          nbytes=len(data) if verdict.kind == "emit" else 0)
        if verdict.clone_port is not None and meta.instance_type is not InstanceType.CLONE:
            self._clone(pkt, stack, verdict.clone_port)
        if verdict.kind == "drop":
            self._drop(pkt.id, verdict.cause)
        elif verdict.kind == "recirculate":
            self._reinject(pkt, data, InstanceType.RECIRCULATE)
        else:
            self.emitted += 1
            self.ports[port].send(pkt.id, data)

    # -- runtime reconfiguration --------------------------------------------------

    def set_queue_rate(self, port: int, qid: int, rate_pps: float) -> None:
        if not 0 <= port < self.num_ports:
            raise ValueError(f"{self.name}: port {port} outside 0..{self.num_ports - 1}")
        if not 0 <= qid < NUM_QUEUES:
            raise ValueError(f"{self.name}: qid {qid} outside 0..{NUM_QUEUES - 1}")
        if rate_pps <= 0:
            raise ValueError("queue rate must be positive")
        self.queues[port][qid].set_rate(rate_pps, self.engine.now)

    def set_switch_rate(self, rate_pps: float) -> None:
        if rate_pps <= 0:
            raise ValueError("switch rate must be positive")
        self.config.switch_rate_pps = rate_pps
        self._tick = interval_ns(rate_pps)
        self._anchor = self._last_poll
        if self._poll is not None:
            self._poll.cancel()
            self._poll = None
            earliest = self._earliest_label()
            if earliest is not None:
                self._arm(earliest)

    def on_command(self, cmd) -> None:
        log.debug("%s: t=%d applied %s", self.name, self.engine.now, cmd.text)
