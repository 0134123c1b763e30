"""Shared builders for switch-level tests."""
from __future__ import annotations

from dpsim.engine import Engine
from dpsim.packet import udp_frame
from dpsim.pipeline import PipelineConfig, load_flow_commands
from dpsim.stats import Stats
from dpsim.switch import Switch, SwitchConfig
from dpsim.units import parse_ipv4

SRC_MAC, DST_MAC = 0x0000000A0001, 0x0000000A0002
SRC_IP, DST_IP = parse_ipv4("10.0.1.1"), parse_ipv4("10.0.2.2")

# udp.dst_port picks (egress port, queue); other knobs come from extra actions
PORT_MAP_PROGRAM = {
    "name": "port_map",
    "actions": {
        "to": {"params": [["port", 9], ["qid", 3]],
               "body": [["set_egress_port", "$port"], ["set_queue_priority", "$qid"]]},
        "bounce": {"params": [["port", 9]],
                   "body": [["set_egress_port", "$port"], ["resubmit"]]},
        "again": {"body": [["recirculate"]]},
        "copy_to": {"params": [["port", 9]], "body": [["clone_to_port", "$port"]]},
    },
    "tables": {
        "by_dport": {"match": "exact", "key": ["udp.dst_port"], "actions": ["to", "bounce"]},
        "egress_by_dport": {"match": "exact", "key": ["udp.dst_port"],
                            "actions": ["again", "copy_to"], "default": "no_action"},
    },
    "ingress": ["by_dport"],
    "egress": ["egress_by_dport"],
}


class CaptureDevice:
    """Stands in for a port device; remembers (time, packet id, bytes)."""

    def __init__(self, engine: Engine) -> None:
        self.engine = engine
        self.frames: list[tuple[int, int, bytes]] = []

    def send(self, pkt_id: int, data: bytes) -> bool:
        self.frames.append((self.engine.now, pkt_id, data))
        return True


def frame(dport: int = 9000, sport: int = 1234, payload: int = 100, ttl: int = 64) -> bytes:
    return udp_frame(SRC_MAC, DST_MAC, SRC_IP, DST_IP, sport, dport, bytes(payload), ttl=ttl)


def make_switch(commands: str = "", program: dict | None = None, stats: Stats | None = None,
                **config) -> tuple[Engine, Switch, list[CaptureDevice]]:
    engine = Engine()
    cfg = SwitchConfig(**config)
    pipeline = PipelineConfig(program or PORT_MAP_PROGRAM).instantiate(cfg.hash_seed)
    sw = Switch("sw", engine, cfg, pipeline, stats)
    devices = []
    for p in range(cfg.num_ports):
        dev = CaptureDevice(engine)
        sw.attach(p, dev)
        devices.append(dev)
    if commands:
        load_flow_commands(pipeline, commands, sw)
    return engine, sw, devices


def inject(engine: Engine, sw: Switch, at: int, port: int, data: bytes) -> int:
    """Schedule an external arrival; returns the packet id it will carry."""
    pkt_id = engine.next_packet_id()
    engine.schedule(at, lambda _: sw.receive(port, pkt_id, data))
    return pkt_id


# one "criterion N PASS|FAIL: detail" line per acceptance check, printed at session end
ACCEPTANCE: list[str] = []
