"""Run a loaded scenario and collect its outputs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .scenario import Network, Scenario, build_network
from .stats import Stats, report, write_outputs


@dataclass
class RunResult:
    summary: dict
    network: Network
    stats: Stats


def run_scenario(sc: Scenario, seed: int | None = None, out_dir: str | Path | None = None,
                 trace: bool | None = None, series_interval_ns: int | None = None) -> RunResult:
    """Simulate ``duration + drain`` and build the summary.

    Rates in the summary are per second of ``duration``; the drain only lets
    in-flight packets land.
    """
    spec = sc.spec
    seed = spec.seed if seed is None else seed
    trace = spec.trace if trace is None else trace
    interval = series_interval_ns or spec.series_interval
    out = Path(out_dir) if out_dir is not None else None
    trace_fh = None
    if trace:
        if out is None:
            raise ValueError("tracing needs an output directory")
        out.mkdir(parents=True, exist_ok=True)
        trace_fh = open(out / "trace.txt", "w")
    try:
        stats = Stats(interval, trace_fh)
        net = build_network(sc, seed, stats)
        net.start()
        end = spec.duration + spec.drain
        run = net.engine.run_until(end)
    finally:
        if trace_fh is not None:
            trace_fh.close()

    switches = {name: sw.conservation() for name, sw in net.switches.items()}
    offered = sum(app.sent * app.payload_size for app in net.apps)
    delivered = sum(stats.counter(point, "rx_bytes")
                    for host in net.hosts.values() for point in host.sinks.values())
    resolved = sc.resolved(seed)
    resolved["series_interval"] = interval
    resolved["trace"] = bool(trace)
    extra = {
        "scenario": resolved,
        "seed": seed,
        "events": run.events,
        "end_time_ns": run.time,
        "offered_payload_bytes": offered,
        "delivered_payload_bytes": delivered,
        "conserved": all(s["balanced"] for s in switches.values()),
    }
    summary = report(stats, spec.duration, [m.model_dump() for m in spec.metrics], switches, extra)
    summary = {"name": sc.name, **summary}
    if out is not None:
        write_outputs(stats, summary, out, spec.duration)
    return RunResult(summary, net, stats)
