"""Scenario bundle generators: single-switch forwarding, tunneling, spine-leaf ECMP.

Each generator writes ``scenario.yaml`` plus the pipeline and command files it
references into one directory and returns the scenario path.
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .units import format_ipv4, parse_rate

TEMPLATES = ("forward", "tunnel", "ecmp")

_FORWARD_ACTION = {
    "params": [["dst_mac", 48], ["port", 9]],
    "body": [["set_field", "ethernet.dst_mac", "$dst_mac"],
             ["set_egress_port", "$port"],
             ["decrement_ttl"]],
}

FORWARD_PIPELINE = {
    "name": "ipv4_forward",
    "actions": {"ipv4_forward": _FORWARD_ACTION},
    "tables": {
        "ipv4_lpm": {"match": "lpm", "key": ["ipv4.dst_ip"], "actions": ["ipv4_forward"],
                     "default": "drop"},
    },
    "ingress": [{"if_valid": "ipv4", "then": ["ipv4_lpm"]}],
}

TUNNEL_PIPELINE = {
    "name": "basic_tunnel",
    "headers": ["myTunnel"],
    "actions": {
        "ipv4_forward": _FORWARD_ACTION,
        "myTunnel_forward": {"params": [["port", 9]], "body": [["set_egress_port", "$port"]]},
    },
    "tables": {
        "ipv4_lpm": {"match": "lpm", "key": ["ipv4.dst_ip"], "actions": ["ipv4_forward"],
                     "default": "drop"},
        "myTunnel_exact": {"match": "exact", "key": ["myTunnel.dst_id"],
                           "actions": ["myTunnel_forward"], "default": "drop"},
    },
    "ingress": [{"if_valid": "myTunnel", "then": ["myTunnel_exact"],
                 "else": [{"if_valid": "ipv4", "then": ["ipv4_lpm"]}]}],
}

ECMP_PIPELINE = {
    "name": "ecmp",
    "metadata": {"ecmp_select": 14},
    "actions": {
        "set_ecmp_select": {"params": [["base", 14], ["count", 14]],
                            "body": [["hash_select", "meta.ecmp_select", "$base", "$count"]]},
        "set_nhop": _FORWARD_ACTION,
    },
    "tables": {
        "ecmp_group": {"match": "lpm", "key": ["ipv4.dst_ip"], "actions": ["set_ecmp_select"],
                       "default": "drop"},
        "ecmp_nhop": {"match": "exact", "key": ["meta.ecmp_select"], "actions": ["set_nhop"],
                      "default": "drop"},
    },
    "ingress": [{"if_valid": "ipv4", "then": ["ecmp_group", "ecmp_nhop"]}],
}

TUNNEL_HEADER = {
    "name": "myTunnel", "layer": 3, "op": "ADD_BEFORE", "ethertype": 0x1212,
    "fields": [["proto_id", 16], ["dst_id", 16]],
    "defaults": {"proto_id": 0x0800, "dst_id": 0x22},
}


def _mac(n: int) -> str:
    return "00:00:00:00:{:02x}:{:02x}".format(n >> 8 & 0xFF, n & 0xFF)


def _ip(subnet: int, host: int) -> str:
    return f"10.0.{subnet}.{host}"


def _dump(path: Path, doc) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None, width=100)


def _write_bundle(out: Path, scenario: dict, pipelines: dict[str, dict],
                  commands: dict[str, list[str]]) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    for fname, doc in pipelines.items():
        _dump(out / fname, doc)
    for fname, lines in commands.items():
        (out / fname).write_text("\n".join(lines) + "\n")
    path = out / "scenario.yaml"
    _dump(path, scenario)
    return path


def _check_positive(**values) -> None:
    for name, v in values.items():
        if v <= 0:
            raise ValueError(f"{name} must be positive, got {v}")


def generate_forward(out: str | Path, rate: str = "50Mbps", size: int = 1000,
                     duration: str = "1s", link: str = "10Gbps", switch_rate: float = 1e6,
                     seed: int = 1) -> Path:
    """h1 -- s1 -- h2, one CBR flow h1 -> h2 over IPv4 LPM forwarding."""
    _check_positive(rate=parse_rate(rate), size=size, link=parse_rate(link),
                    switch_rate=switch_rate)
    scenario = {
        "name": "forward",
        "duration": duration,
        "seed": seed,
        "hosts": {"h1": {"ip": _ip(1, 1), "mac": _mac(0x101)},
                  "h2": {"ip": _ip(2, 2), "mac": _mac(0x202)}},
        "switches": {"s1": {"pipeline": "forward.p4.yaml", "commands": "s1.commands",
                            "ports": 2, "switch_rate": switch_rate}},
        "links": [{"a": "h1", "b": "s1:0", "bandwidth": link},
                  {"a": "s1:1", "b": "h2", "bandwidth": link}],
        "apps": [
            {"name": "cbr", "kind": "cbr", "host": "h1", "dst": "h2", "dport": 9000,
             "size": size, "rate": rate},
            {"name": "sink", "kind": "sink", "host": "h2", "ports": [9000]},
        ],
    }
    commands = {"s1.commands": [
        f"table_add ipv4_lpm ipv4_forward {_ip(1, 1)}/32 => {_mac(0x101)} 0",
        f"table_add ipv4_lpm ipv4_forward {_ip(2, 2)}/32 => {_mac(0x202)} 1",
    ]}
    return _write_bundle(Path(out), scenario, {"forward.p4.yaml": FORWARD_PIPELINE}, commands)


def generate_tunnel(out: str | Path, duration: str = "10s", size: int = 1000,
                    tunnel_rate: str = "10Mbps", normal_rate: str = "40Mbps",
                    link: str = "1Gbps", tunnel_port: int = 11000, normal_port: int = 9000,
                    switch_rate: float = 1e6, seed: int = 1) -> Path:
    """h1 -- s1 -- s2 -- h2 with a detour s1 -- s3 -- s2.

    Frames to ``tunnel_port`` get the tunnel header at h1's NIC and ride
    s1 -> s2 on the dst_id table; plain IPv4 takes s1 -> s3 -> s2.
    """
    _check_positive(size=size, tunnel_rate=parse_rate(tunnel_rate),
                    normal_rate=parse_rate(normal_rate), link=parse_rate(link),
                    switch_rate=switch_rate)
    h1, h2 = _ip(1, 1), _ip(2, 2)
    m1, m2 = _mac(0x101), _mac(0x202)
    sw = {"pipeline": "tunnel.p4.yaml", "ports": 3, "switch_rate": switch_rate}
    scenario = {
        "name": "tunnel",
        "duration": duration,
        "seed": seed,
        "headers": [TUNNEL_HEADER],
        "hosts": {
            "h1": {"ip": h1, "mac": m1,
                   "policy": {"header": "myTunnel", "ports": [10000, 12000],
                              "values": {"h2": {"dst_id": 0x22}}}},
            "h2": {"ip": h2, "mac": m2},
        },
        "switches": {f"s{i}": dict(sw, commands=f"s{i}.commands") for i in (1, 2, 3)},
        "links": [
            {"a": "h1", "b": "s1:0", "bandwidth": link},
            {"a": "s1:1", "b": "s2:1", "bandwidth": link},
            {"a": "s1:2", "b": "s3:1", "bandwidth": link},
            {"a": "s3:2", "b": "s2:2", "bandwidth": link},
            {"a": "s2:0", "b": "h2", "bandwidth": link},
        ],
        "apps": [
            {"name": "tunneled", "kind": "cbr", "host": "h1", "dst": "h2", "dport": tunnel_port,
             "size": size, "rate": tunnel_rate},
            {"name": "normal", "kind": "cbr", "host": "h1", "dst": "h2", "dport": normal_port,
             "size": size, "rate": normal_rate},
            {"name": "sink", "kind": "sink", "host": "h2", "ports": [tunnel_port, normal_port]},
        ],
        "metrics": [
            {"name": "tunnel_share", "numerator": "s1->s2:tx_packets",
             "denominator": "s2->h2:tx_packets"},
        ],
    }
    commands = {
        "s1.commands": [f"table_add myTunnel_exact myTunnel_forward 0x22 => 1",
                        f"table_add ipv4_lpm ipv4_forward {h2}/32 => {m2} 2",
                        f"table_add ipv4_lpm ipv4_forward {h1}/32 => {m1} 0"],
        "s2.commands": [f"table_add myTunnel_exact myTunnel_forward 0x22 => 0",
                        f"table_add ipv4_lpm ipv4_forward {h2}/32 => {m2} 0",
                        f"table_add ipv4_lpm ipv4_forward {h1}/32 => {m1} 2"],
        "s3.commands": [f"table_add ipv4_lpm ipv4_forward {h2}/32 => {m2} 2",
                        f"table_add ipv4_lpm ipv4_forward {h1}/32 => {m1} 1"],
    }
    return _write_bundle(Path(out), scenario, {"tunnel.p4.yaml": TUNNEL_PIPELINE}, commands)


def generate_ecmp(out: str | Path, flows: int = 1000, flow_rate: str = "10Mbps",
                  duration: str = "40s", size: int = 1000, host_link: str = "10Gbps",
                  spine_link: str = "40Gbps", switch_rate: float = 2e6, base_port: int = 20000,
                  on_mean: float = 2.0, off_mean: float = 1.0, seed: int = 1,
                  desk: bool = False) -> Path:
    """Spine-leaf: spines s2, s3; leaves s0, s1, s4, s5; h1-h3 on s0, h4-h6 on s1.

    ``flows`` on-off UDP flows from h1 to h4, one destination port each. s0
    hashes every packet's 5-tuple over its two spine uplinks.
    """
    if desk:
        flows, flow_rate, duration = 100, "1Mbps", "40s"
    _check_positive(flows=flows, flow_rate=parse_rate(flow_rate), size=size,
                    host_link=parse_rate(host_link), spine_link=parse_rate(spine_link),
                    switch_rate=switch_rate, on_mean=on_mean, off_mean=off_mean)
    if base_port + flows - 1 > 0xFFFF:
        raise ValueError("base_port + flows exceeds the UDP port space")
    hosts = {}
    for i in range(1, 7):
        subnet = 1 if i <= 3 else 2
        hosts[f"h{i}"] = {"ip": _ip(subnet, i), "mac": _mac(subnet << 8 | i)}
    leaves, spines = ["s0", "s1", "s4", "s5"], ["s2", "s3"]
    switches = {}
    for s in leaves:
        switches[s] = {"pipeline": "ecmp.p4.yaml", "commands": f"{s}.commands", "ports": 5,
                       "switch_rate": switch_rate}
    for s in spines:
        switches[s] = {"pipeline": "ecmp.p4.yaml", "commands": f"{s}.commands", "ports": 4,
                       "switch_rate": switch_rate}
    links = []
    for i in range(1, 4):
        links.append({"a": f"h{i}", "b": f"s0:{i - 1}", "bandwidth": host_link})
    for i in range(4, 7):
        links.append({"a": f"h{i}", "b": f"s1:{i - 4}", "bandwidth": host_link})
    # leaf port 3 -> s2, port 4 -> s3; spine port k -> leaves[k]
    for k, leaf in enumerate(leaves):
        for j, spine in enumerate(spines):
            links.append({"a": f"{leaf}:{3 + j}", "b": f"{spine}:{k}", "bandwidth": spine_link})

    apps = []
    for f in range(flows):
        apps.append({"name": f"flow{f}", "kind": "onoff", "host": "h1", "dst": "h4",
                     "dport": base_port + f, "size": size, "rate": flow_rate,
                     "on_mean": on_mean, "off_mean": off_mean})
    apps.append({"name": "sink", "kind": "sink", "host": "h4",
                 "ports": list(range(base_port, base_port + flows))})

    scenario = {
        "name": "ecmp",
        "duration": duration,
        "seed": seed,
        "series_interval": "1s",
        "hosts": hosts,
        "switches": switches,
        "links": links,
        "apps": apps,
        "metrics": [{"name": "path_ratio", "numerator": "s2->s1:tx_bytes",
                     "denominator": "s3->s1:tx_bytes"}],
    }

    def host_entries(leaf_hosts: range, port0: int, base: int) -> list[str]:
        lines = []
        for n, i in enumerate(leaf_hosts):
            h = hosts[f"h{i}"]
            lines.append(f"table_add ecmp_group set_ecmp_select {h['ip']}/32 => {base + n} 1")
            lines.append(f"table_add ecmp_nhop set_nhop {base + n} => {h['mac']} {port0 + n}")
        return lines

    uplinks = ["table_add ecmp_nhop set_nhop 0 => 00:00:00:00:00:02 3",
               "table_add ecmp_nhop set_nhop 1 => 00:00:00:00:00:03 4"]
    commands = {
        "s0.commands": [f"table_add ecmp_group set_ecmp_select {_ip(2, 0)}/24 => 0 2",
                        *uplinks, *host_entries(range(1, 4), 0, 10)],
        "s1.commands": [f"table_add ecmp_group set_ecmp_select {_ip(1, 0)}/24 => 0 2",
                        *uplinks, *host_entries(range(4, 7), 0, 10)],
    }
    for s in ("s4", "s5"):
        commands[f"{s}.commands"] = [
            f"table_add ecmp_group set_ecmp_select {_ip(1, 0)}/24 => 0 2",
            f"table_add ecmp_group set_ecmp_select {_ip(2, 0)}/24 => 0 2",
            *uplinks]
    for s in spines:
        commands[f"{s}.commands"] = [
            f"table_add ecmp_group set_ecmp_select {_ip(1, 0)}/24 => 0 1",
            f"table_add ecmp_group set_ecmp_select {_ip(2, 0)}/24 => 1 1",
            "table_add ecmp_nhop set_nhop 0 => 00:00:00:00:00:00 0",
            "table_add ecmp_nhop set_nhop 1 => 00:00:00:00:00:01 1"]
    return _write_bundle(Path(out), scenario, {"ecmp.p4.yaml": ECMP_PIPELINE}, commands)


GENERATORS = {"forward": generate_forward, "tunnel": generate_tunnel, "ecmp": generate_ecmp}


def generate(template: str, out: str | Path, **params) -> Path:
    try:
        fn = GENERATORS[template]
    except KeyError:
        raise ValueError(f"unknown template {template!r}; choose from {', '.join(TEMPLATES)}") from None
    return fn(out, **params)
