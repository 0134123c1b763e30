"""Scenario files: schema, load-time validation, and construction of a runnable network.

A scenario is a YAML mapping::

    name: tunnel
    duration: 10s
    seed: 1
    headers:    [{name, layer, op, ethertype | ip_protocol, fields, defaults}]
    hosts:      {h1: {ip, mac, tx_queue, policy: {header, ports, values}}}
    switches:   {s1: {pipeline, commands, ports, switch_rate, ...}}
    links:      [{a: h1, b: "s1:0", bandwidth: 1Gbps, delay: 0}]
    apps:       [{name, kind: cbr|onoff|sink, host, dst, dport, size, rate, ...}]
    metrics:    [{name, numerator: "<point>:<counter>", denominator: ...}]

Relative file paths resolve against the scenario file's directory.
"""
from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .engine import Engine, SeededRng
from .netdev import CbrApp, Host, HeaderPolicy, Link, NetDevice, OnOffApp
from .packet import CustomHeaderDef, HeaderError, HeaderRegistry, Layer, Op, PacketMeta, parse_stack
from .pipeline import (
    CommandError, Pipeline, PipelineConfig, PipelineError, load_flow_commands, parse_commands,
)
from .stats import Stats
from .switch import Switch, SwitchConfig
from .units import parse_ipv4, parse_mac, parse_rate, parse_time

log = logging.getLogger(__name__)


class ScenarioError(Exception):
    """The scenario cannot be loaded; ``problems`` lists every diagnostic found."""

    def __init__(self, problems: list[str]) -> None:
        super().__init__("\n".join(problems))
        self.problems = problems


def _time(v: Any) -> int:
    return parse_time(v)


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HeaderSpec(_Model):
    name: str
    layer: int | str = 3
    op: Literal["ADD_BEFORE", "ADD_AFTER", "REPLACE"] = "ADD_BEFORE"
    ethertype: int | None = None
    ip_protocol: int | None = None
    fields: list[tuple[str, int]]
    defaults: dict[str, int] = Field(default_factory=dict)
    chain_field: str = "proto_id"

    @field_validator("layer")
    @classmethod
    def _layer(cls, v):
        if isinstance(v, str):
            v = v.upper()
            if v.startswith("LAYER_"):
                v = v[6:]
            v = int(v)
        if v not in (2, 3, 4):
            raise ValueError("layer must be 2, 3 or 4")
        return v

    def build(self) -> CustomHeaderDef:
        return CustomHeaderDef(self.name, self.fields, Layer(self.layer), Op[self.op],
                               ethertype=self.ethertype, ip_protocol=self.ip_protocol,
                               defaults=self.defaults, chain_field=self.chain_field)


class PolicySpec(_Model):
    header: str
    ports: tuple[int, int] = (10_000, 12_000)
    # destination (host name or dotted IPv4) -> field values
    values: dict[str, dict[str, int]] = Field(default_factory=dict)

    @field_validator("ports")
    @classmethod
    def _ports(cls, v):
        if not 0 <= v[0] <= v[1] <= 0xFFFF:
            raise ValueError("port range must satisfy 0 <= lo <= hi <= 65535")
        return v


class HostSpec(_Model):
    ip: str
    mac: str
    tx_queue: int = Field(1000, ge=1)
    policy: PolicySpec | None = None

    @field_validator("ip")
    @classmethod
    def _ip(cls, v):
        parse_ipv4(v)
        return v

    @field_validator("mac")
    @classmethod
    def _mac(cls, v):
        parse_mac(v)
        return v


class SwitchSpec(_Model):
    pipeline: str
    commands: str | None = None
    ports: int = Field(4, ge=1, le=511)
    switch_rate: float = Field(1_000_000, gt=0)
    queue_rate: float | None = Field(None, gt=0)
    input_buffer: int = Field(1024, ge=1)
    queue_capacity: int = Field(1000, ge=1)
    tx_queue: int = Field(1000, ge=1)
    max_internal_passes: int = Field(4, ge=1)
    label_mode: Literal["finish", "start"] = "finish"
    hash_seed: int | None = Field(None, ge=0, lt=2**32)


class LinkSpec(_Model):
    a: str
    b: str
    bandwidth: int
    delay: int = 0
    name_ab: str | None = None
    name_ba: str | None = None

    @field_validator("bandwidth", mode="before")
    @classmethod
    def _bw(cls, v):
        bw = parse_rate(v)
        if bw <= 0:
            raise ValueError("bandwidth must be positive")
        return bw

    @field_validator("delay", mode="before")
    @classmethod
    def _delay(cls, v):
        return _time(v)


class AppSpec(_Model):
    name: str
    kind: Literal["cbr", "onoff", "sink"]
    host: str
    dst: str | None = None
    dport: int | None = Field(None, ge=0, le=0xFFFF)
    sport: int = Field(49152, ge=0, le=0xFFFF)
    ports: list[int] = Field(default_factory=list)
    size: int = Field(1000, ge=0, le=1472)
    rate: int | None = None
    pps: float | None = Field(None, gt=0)
    start: int = 0
    stop: int | None = None
    on_mean: float = Field(2.0, gt=0)
    off_mean: float = Field(1.0, gt=0)

    @field_validator("rate", mode="before")
    @classmethod
    def _rate(cls, v):
        return None if v is None else parse_rate(v)

    @field_validator("start", "stop", mode="before")
    @classmethod
    def _times(cls, v):
        return None if v is None else _time(v)

    @model_validator(mode="after")
    def _shape(self):
        if self.kind == "sink":
            if not self.ports:
                raise ValueError("a sink needs 'ports'")
            return self
        if self.dst is None or self.dport is None:
            raise ValueError(f"a {self.kind} app needs 'dst' and 'dport'")
        if (self.rate is None) == (self.pps is None):
            raise ValueError("give exactly one of 'rate' (bits/s of payload) or 'pps'")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("rate must be positive")
        return self

    def interval_ns(self) -> int:
        if self.pps is not None:
            return max(1, round(1e9 / self.pps))
        return max(1, round(1e9 * self.size * 8 / self.rate))


class MetricSpec(_Model):
    name: str
    numerator: str
    denominator: str


class ScenarioSpec(_Model):
    name: str = "scenario"
    duration: int
    drain: int = 100_000_000
    seed: int = Field(1, ge=0, lt=2**64)
    series_interval: int = 100_000_000
    trace: bool = False
    headers: list[HeaderSpec] = Field(default_factory=list)
    hosts: dict[str, HostSpec] = Field(default_factory=dict)
    switches: dict[str, SwitchSpec] = Field(default_factory=dict)
    links: list[LinkSpec] = Field(default_factory=list)
    apps: list[AppSpec] = Field(default_factory=list)
    metrics: list[MetricSpec] = Field(default_factory=list)

    @field_validator("duration", "drain", "series_interval", mode="before")
    @classmethod
    def _times(cls, v):
        return _time(v)

    @field_validator("duration", "series_interval")
    @classmethod
    def _positive(cls, v):
        if v <= 0:
            raise ValueError("must be positive")
        return v


class Scenario:
    """A validated scenario with its resolved pipelines and command scripts."""

    def __init__(self, spec: ScenarioSpec, base_dir: Path, source: Path | None = None) -> None:
        self.spec = spec
        self.base_dir = base_dir
        self.source = source
        self.warnings: list[str] = []
        self.header_defs: dict[str, CustomHeaderDef] = {}
        self.pipelines: dict[str, PipelineConfig] = {}
        self.command_text: dict[str, str] = {}
        self.endpoints: dict[str, tuple[str, int]] = {}  # "node:port" -> link index side

    @property
    def name(self) -> str:
        return self.spec.name

    def resolved(self, seed: int | None = None) -> dict:
        """The fully defaulted configuration, as echoed into run summaries."""
        doc = self.spec.model_dump(mode="json")
        if seed is not None:
            doc["seed"] = seed
        for sname, sw in doc["switches"].items():
            if sw["queue_rate"] is None:
                sw["queue_rate"] = sw["switch_rate"]
            if sw["hash_seed"] is None:
                sw["hash_seed"] = derive_hash_seed(doc["seed"], sname)
        for app in doc["apps"]:
            if app["kind"] != "sink" and app["stop"] is None:
                app["stop"] = doc["duration"]
        return doc


def derive_hash_seed(seed: int, switch: str) -> int:
    digest = hashlib.sha256(f"{seed}/hash/{switch}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _split_endpoint(text: str) -> tuple[str, int | None]:
    node, sep, port = text.partition(":")
    if not sep:
        return node, None
    return node, int(port)


def _format_validation(exc: ValidationError, where: str) -> list[str]:
    out = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"])
        out.append(f"{where}: {path}: {err['msg']}")
    return out


def _host_ip(spec: ScenarioSpec, ref: str) -> int:
    if ref in spec.hosts:
        return parse_ipv4(spec.hosts[ref].ip)
    return parse_ipv4(ref)


class _UniqueKeyLoader(yaml.SafeLoader):
    """Safe loader that refuses repeated mapping keys instead of keeping the last one."""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, _ in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise yaml.constructor.ConstructorError(
                    None, None, f"duplicate key {key!r}", key_node.start_mark)
            seen.add(key)
        return super().construct_mapping(node, deep)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        raw = yaml.load(path.read_text(), Loader=_UniqueKeyLoader)
    except OSError as exc:
        raise ScenarioError([f"{path}: cannot read scenario: {exc.strerror}"]) from None
    except yaml.YAMLError as exc:
        raise ScenarioError([f"{path}: not valid YAML: {exc}"]) from None
    return scenario_from_dict(raw, path.parent, path)


def scenario_from_dict(raw: Any, base_dir: Path | str = ".", source: Path | None = None) -> Scenario:
    where = str(source or "<scenario>")
    if not isinstance(raw, dict):
        raise ScenarioError([f"{where}: top level must be a mapping"])
    try:
        spec = ScenarioSpec.model_validate(raw)
    except ValidationError as exc:
        raise ScenarioError(_format_validation(exc, where)) from None
    sc = Scenario(spec, Path(base_dir), source)
    problems: list[str] = []

    for i, h in enumerate(spec.headers):
        if h.name in sc.header_defs:
            problems.append(f"{where}: headers.{i}: duplicate header name {h.name!r}")
            continue
        try:
            sc.header_defs[h.name] = h.build()
        except HeaderError as exc:
            problems.append(f"{where}: headers.{i}: {exc}")
    try:
        HeaderRegistry(sc.header_defs.values())
    except HeaderError as exc:
        problems.append(f"{where}: headers: {exc}")

    dup = set(spec.hosts) & set(spec.switches)
    for name in sorted(dup):
        problems.append(f"{where}: node name {name!r} is used by a host and a switch")
    seen_ip: dict[int, str] = {}
    for hname, host in spec.hosts.items():
        ip = parse_ipv4(host.ip)
        if ip in seen_ip:
            problems.append(f"{where}: hosts.{hname}.ip: {host.ip} already assigned to {seen_ip[ip]}")
        seen_ip[ip] = hname
        if host.policy is not None:
            if host.policy.header not in sc.header_defs:
                problems.append(f"{where}: hosts.{hname}.policy.header: unknown header {host.policy.header!r}")
            for dst in host.policy.values:
                try:
                    _host_ip(spec, dst)
                except ValueError:
                    problems.append(f"{where}: hosts.{hname}.policy.values: unknown destination {dst!r}")

    for sname, sw in spec.switches.items():
        ppath = sc.base_dir / sw.pipeline
        if not ppath.is_file():
            problems.append(f"{where}: switches.{sname}.pipeline: file not found: {ppath}")
        else:
            try:
                pspec = yaml.safe_load(ppath.read_text())
                if not isinstance(pspec, dict):
                    raise PipelineError("pipeline file must be a mapping")
                sc.pipelines[sname] = PipelineConfig(pspec, sc.header_defs)
            except (PipelineError, HeaderError, ValueError, yaml.YAMLError) as exc:
                problems.append(f"{where}: switches.{sname}.pipeline: {ppath}: {exc}")
        if sw.commands is not None:
            cpath = sc.base_dir / sw.commands
            if not cpath.is_file():
                problems.append(f"{where}: switches.{sname}.commands: file not found: {cpath}")
            else:
                sc.command_text[sname] = cpath.read_text()
                try:
                    parse_commands(sc.command_text[sname])
                except CommandError as exc:
                    problems.append(f"{where}: switches.{sname}.commands: {cpath}: {exc}")

    used: dict[str, int] = {}
    for i, link in enumerate(spec.links):
        for side in ("a", "b"):
            text = getattr(link, side)
            try:
                node, port = _split_endpoint(text)
            except ValueError:
                problems.append(f"{where}: links.{i}.{side}: bad endpoint {text!r}")
                continue
            if node in spec.hosts:
                if port not in (None, 0):
                    problems.append(f"{where}: links.{i}.{side}: hosts have a single port 0")
                key = f"{node}:0"
            elif node in spec.switches:
                if port is None or not 0 <= port < spec.switches[node].ports:
                    problems.append(
                        f"{where}: links.{i}.{side}: switch endpoint needs a port in "
                        f"0..{spec.switches[node].ports - 1}")
                    continue
                key = f"{node}:{port}"
            else:
                problems.append(f"{where}: links.{i}.{side}: unknown node {node!r}")
                continue
            if key in used:
                problems.append(f"{where}: links.{i}.{side}: {key} is already used by links.{used[key]}")
            used[key] = i
    for hname in spec.hosts:
        if f"{hname}:0" not in used:
            sc.warnings.append(f"host {hname} is not linked")

    app_names = set()
    for i, app in enumerate(spec.apps):
        if app.name in app_names:
            problems.append(f"{where}: apps.{i}.name: duplicate app name {app.name!r}")
        app_names.add(app.name)
        if app.host not in spec.hosts:
            problems.append(f"{where}: apps.{i}.host: unknown host {app.host!r}")
        if app.kind != "sink":
            try:
                _host_ip(spec, app.dst)
            except ValueError:
                problems.append(f"{where}: apps.{i}.dst: unknown destination {app.dst!r}")
            if app.start >= (app.stop if app.stop is not None else spec.duration):
                problems.append(f"{where}: apps.{i}: start must come before stop")

    if problems:
        raise ScenarioError(problems)

    # command scripts are checked semantically against a throwaway network
    try:
        net = build_network(sc)
    except (CommandError, PipelineError, ValueError, KeyError) as exc:
        raise ScenarioError([f"{where}: {exc}"]) from None
    sc.warnings.extend(reachability_warnings(sc, net, problems))
    if problems:
        raise ScenarioError(problems)
    for w in sc.warnings:
        log.warning("%s: %s", where, w)
    return sc


class Network:
    """Everything one run needs, wired together."""

    def __init__(self, engine: Engine, stats: Stats, seed: int) -> None:
        self.engine = engine
        self.stats = stats
        self.seed = seed
        self.hosts: dict[str, Host] = {}
        self.switches: dict[str, Switch] = {}
        self.links: list[Link] = []
        self.apps: list = []
        # node name -> port -> (peer node name, peer port)
        self.adjacency: dict[str, dict[int, tuple[str, int]]] = {}

    def start(self) -> None:
        for app in self.apps:
            app.start()


def build_network(sc: Scenario, seed: int | None = None, stats: Stats | None = None) -> Network:
    spec = sc.spec
    seed = spec.seed if seed is None else seed
    engine = Engine()
    stats = stats if stats is not None else Stats(spec.series_interval)
    net = Network(engine, stats, seed)
    registry = HeaderRegistry(sc.header_defs.values())
    arp = {parse_ipv4(h.ip): parse_mac(h.mac) for h in spec.hosts.values()}

    for hname, hs in spec.hosts.items():
        host = Host(hname, engine, stats, parse_ipv4(hs.ip), parse_mac(hs.mac), registry, arp)
        policy = None
        if hs.policy is not None:
            values = {_host_ip(spec, dst): v for dst, v in hs.policy.values.items()}
            policy = HeaderPolicy(sc.header_defs[hs.policy.header], hs.policy.ports[0],
                                  hs.policy.ports[1], values)
        host.add_device(hs.tx_queue, policy)
        net.hosts[hname] = host

    devices: dict[str, NetDevice] = {}
    for sname, ss in spec.switches.items():
        hash_seed = derive_hash_seed(seed, sname) if ss.hash_seed is None else ss.hash_seed
        cfg = SwitchConfig(num_ports=ss.ports, switch_rate_pps=ss.switch_rate,
                           input_buffer_capacity=ss.input_buffer, queue_capacity=ss.queue_capacity,
                           default_queue_rate_pps=ss.queue_rate,
                           max_internal_passes=ss.max_internal_passes, label_mode=ss.label_mode,
                           hash_seed=hash_seed)
        pipeline = Pipeline(sc.pipelines[sname], hash_seed)
        sw = Switch(sname, engine, cfg, pipeline, stats)
        net.switches[sname] = sw

    def device_for(text: str) -> tuple[str, int, NetDevice]:
        node, port = _split_endpoint(text)
        if node in net.hosts:
            return node, 0, net.hosts[node].device
        sw = net.switches[node]
        dev = NetDevice(engine, sw, port, f"{node}:p{port}:tx", stats, spec.switches[node].tx_queue)
        sw.attach(port, dev)
        return node, port, dev

    names: dict[str, int] = {}
    for ls in spec.links:
        na, pa, da = device_for(ls.a)
        nb, pb, db = device_for(ls.b)
        ab = ls.name_ab or f"{na}->{nb}"
        ba = ls.name_ba or f"{nb}->{na}"
        for key in (ab, ba):
            names[key] = names.get(key, 0) + 1
        if names[ab] > 1 or names[ba] > 1:
            ab = ls.name_ab or f"{na}:{pa}->{nb}:{pb}"
            ba = ls.name_ba or f"{nb}:{pb}->{na}:{pa}"
        net.links.append(Link(engine, da, db, ls.bandwidth, ls.delay, stats, ab, ba))
        net.adjacency.setdefault(na, {})[pa] = (nb, pb)
        net.adjacency.setdefault(nb, {})[pb] = (na, pa)

    for sname, text in sc.command_text.items():
        load_flow_commands(net.switches[sname].pipeline, text, net.switches[sname])

    for app in spec.apps:
        host = net.hosts[app.host]
        if app.kind == "sink":
            for port in app.ports:
                host.add_sink(port)
            continue
        stop = spec.duration if app.stop is None else app.stop
        dst = _host_ip(spec, app.dst)
        if app.kind == "cbr":
            net.apps.append(CbrApp(app.name, host, dst, app.dport, app.size, app.interval_ns(),
                                   app.start, stop, app.sport))
        else:
            rng = SeededRng(seed, f"app/{app.name}")
            net.apps.append(OnOffApp(app.name, host, dst, app.dport, app.size, app.interval_ns(),
                                     app.start, stop, rng, app.on_mean, app.off_mean, app.sport))
    return net


MAX_HOPS = 64


def _walk(net: Network, app, problems: list[str]) -> str | None:
    """Follow a probe frame from the app's host; returns a warning or None."""
    host = app.host
    data = host.build_frame(app.dst_ip, app.src_port, app.dst_port, app.payload_size)
    node, port = host.name, 0
    for _ in range(MAX_HOPS):
        peer = net.adjacency.get(node, {}).get(port)
        if peer is None:
            problems.append(f"app {app.name}: probe leaves {node} port {port}, which has no link")
            return None
        node, port = peer
        if node in net.hosts:
            dst_host = net.hosts[node]
            if dst_host.ip != app.dst_ip:
                problems.append(f"app {app.name}: probe reaches {node}, not its destination")
            elif app.dst_port not in dst_host.sinks:
                return f"app {app.name}: no sink listens on {node} port {app.dst_port}"
            return None
        sw = net.switches[node]
        pipeline = sw.pipeline
        observer, pipeline.observer = pipeline.observer, None
        try:
            stack = parse_stack(data, pipeline.registry)
            meta = PacketMeta(ingress_port=port)
            verdict = pipeline.run_ingress(stack, meta)
            if verdict.kind != "forward":
                if verdict.kind == "drop":
                    problems.append(f"app {app.name}: probe dropped at {node} ({verdict.cause})")
                    return None
                return f"app {app.name}: reachability past {node} is not statically decidable ({verdict.kind})"
            eg = pipeline.run_egress(stack, meta)
            if eg.kind == "drop":
                problems.append(f"app {app.name}: probe dropped at {node} egress ({eg.cause})")
                return None
            if eg.kind != "emit":
                return f"app {app.name}: reachability past {node} is not statically decidable ({eg.kind})"
            data = stack.deparse()
        except Exception as exc:  # noqa: BLE001 - any failure makes the walk undecidable
            return f"app {app.name}: reachability walk stopped at {node}: {exc}"
        finally:
            pipeline.observer = observer
        port = verdict.port
    return f"app {app.name}: probe exceeded {MAX_HOPS} hops"


def reachability_warnings(sc: Scenario, net: Network, problems: list[str]) -> list[str]:
    timed = {s for s, t in sc.command_text.items() if any(c.at is not None for c in parse_commands(t))}
    warnings = []
    for app in net.apps:
        w = _walk(net, app, problems)
        if w:
            warnings.append(w)
    if timed:
        warnings.append(f"timed commands on {', '.join(sorted(timed))} may change paths after load")
    return warnings
