"""Counters, interval time series, the line trace, and the run report.

Trace records are one line each::

    t=<ns> kind=<kind> point=<id> pkt=<id> [key=value ...]

Detail keys per kind, in emitted order:

=========== ==========================================================
app_tx      bytes dst dport
link_tx     bytes start end
link_rx     bytes
enqueue     port qid label inst
dequeue     port qid inst ingress_ts enq_ts deq_td egress_ts
drop        cause [port qid]
table_hit   table action inst
table_miss  table action inst
sink_rx     bytes frame_bytes
=========== ==========================================================
"""
from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Any, Callable, Mapping

KINDS = ("enqueue", "dequeue", "drop", "link_tx", "link_rx", "table_hit", "table_miss",
         "app_tx", "sink_rx")
SERIES_KINDS = frozenset(("app_tx", "link_tx", "dequeue", "sink_rx"))


@dataclass
class TraceEvent:
    time: int
    kind: str
    point: str
    packet_id: int
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        parts = [f"t={self.time} kind={self.kind} point={self.point} pkt={self.packet_id}"]
        parts.extend(f"{k}={v}" for k, v in self.detail.items())
        return " ".join(parts)


def parse_trace_line(line: str) -> TraceEvent:
    items = dict(tok.split("=", 1) for tok in line.split())
    t = int(items.pop("t"))
    kind = items.pop("kind")
    point = items.pop("point")
    pkt = int(items.pop("pkt"))
    return TraceEvent(t, kind, point, pkt, items)


# kind -> (packet counter, byte counter)
_COUNTS = {
    "app_tx": ("tx_packets", "tx_bytes"),
    "link_tx": ("tx_packets", "tx_bytes"),
    "dequeue": ("tx_packets", "tx_bytes"),
    "link_rx": ("rx_packets", "rx_bytes"),
    "sink_rx": ("rx_packets", "rx_bytes"),
    "enqueue": ("enqueued", None),
    "table_hit": ("hits", None),
    "table_miss": ("misses", None),
}


class Stats:
    """Run-owned observation state. ``trace`` is an open text file or None.

    Components that keep their own tallies for speed register a source with
    :meth:`add_source`; sources write their totals in :meth:`flush`.
    """

    def __init__(self, series_interval_ns: int = 100_000_000, trace: IO[str] | None = None) -> None:
        if series_interval_ns <= 0:
            raise ValueError("series interval must be positive")
        self.interval = series_interval_ns
        self.trace = trace
        self.counters: dict[str, dict[str, int]] = defaultdict(lambda: defaultdict(int))
        self.series: dict[str, dict[int, list[int]]] = defaultdict(dict)
        self.series_kind: dict[str, str] = {}
        self._sources: list[Callable[["Stats"], None]] = []

    def add_source(self, fn: Callable[["Stats"], None]) -> None:
        self._sources.append(fn)

    def flush(self) -> None:
        for fn in self._sources:
            fn(self)

    def record(self, t: int, kind: str, point: str, pkt: int, detail: dict | None = None,
               nbytes: int = 0, frame_bytes: int = 0, at: int | None = None) -> None:
        """Update counters/series for one observation and append it to the trace.

        ``nbytes`` is the byte count the kind accounts for (payload for app/sink,
        frame for links and switch ports); ``at`` overrides the series bucket time.
        """
        c = self.counters[point]
        names = _COUNTS.get(kind)
        if names is not None:
            c[names[0]] += 1
            if names[1] is not None:
                c[names[1]] += nbytes
            if kind == "sink_rx":
                c["rx_frame_bytes"] += frame_bytes
        elif kind == "drop":
            c["drop:" + detail["cause"]] += 1
        else:
            raise ValueError(f"unknown trace kind {kind!r}")
        if kind in SERIES_KINDS:
            bucket = (t if at is None else at) // self.interval
            series = self.series[point]
            b = series.get(bucket)
            if b is None:
                series[bucket] = [1, nbytes]
                self.series_kind[point] = kind
            else:
                b[0] += 1
                b[1] += nbytes
        if self.trace is not None:
            self.write_trace(t, kind, point, pkt, detail)

    def write_trace(self, t: int, kind: str, point: str, pkt: int, detail: dict | None) -> None:
        """Trace line only; for observations whose counters live in a source."""
        if detail:
            tail = " ".join(f"{k}={v}" for k, v in detail.items())
            self.trace.write(f"t={t} kind={kind} point={point} pkt={pkt} {tail}\n")
        else:
            self.trace.write(f"t={t} kind={kind} point={point} pkt={pkt}\n")

    def record_event(self, event: TraceEvent, nbytes: int = 0) -> None:
        self.record(event.time, event.kind, event.point, event.packet_id, event.detail, nbytes)

    def counter(self, point: str, name: str) -> int:
        if point not in self.counters:
            return 0
        return self.counters[point].get(name, 0)

    def series_rows(self, point: str, until_ns: int | None = None) -> list[tuple[float, int, int]]:
        """Dense (time_s, packets, bytes) rows from bucket 0 to the last bucket."""
        buckets = self.series.get(point, {})
        last = max(buckets) if buckets else -1
        if until_ns is not None:
            last = max(last, (until_ns - 1) // self.interval)
        rows = []
        for i in range(last + 1):
            pkts, nbytes = buckets.get(i, (0, 0))
            rows.append((i * self.interval / 1e9, pkts, nbytes))
        return rows


def _resolve_metric_term(stats: Stats, term: str) -> int:
    point, _, name = term.rpartition(":")
    if not point:
        raise ValueError(f"metric term {term!r} must be <point>:<counter>")
    return stats.counter(point, name)


def report(stats: Stats, duration_ns: int, metrics: list[Mapping[str, str]] | None = None,
           switches: Mapping[str, Mapping[str, Any]] | None = None,
           extra: Mapping[str, Any] | None = None) -> dict:
    """Summary document: per-point totals and means, derived ratios, conservation."""
    stats.flush()
    seconds = duration_ns / 1e9 if duration_ns else 0.0
    points = {}
    for point in sorted(stats.counters):
        c = dict(sorted(stats.counters[point].items()))
        entry: dict[str, Any] = {"counters": c}
        drops = {k[5:]: v for k, v in c.items() if k.startswith("drop:")}
        if drops:
            entry["drops"] = drops
        if seconds:
            for side in ("tx", "rx"):
                if f"{side}_packets" in c:
                    entry[f"{side}_pps"] = c[f"{side}_packets"] / seconds
                    entry[f"{side}_bps"] = c[f"{side}_bytes"] * 8 / seconds
        points[point] = entry
    derived = {}
    for m in metrics or []:
        num = _resolve_metric_term(stats, m["numerator"])
        den = _resolve_metric_term(stats, m["denominator"])
        derived[m["name"]] = (num / den) if den else None
    doc: dict[str, Any] = {"duration_s": seconds, "points": points, "metrics": derived}
    if switches is not None:
        doc["switches"] = {k: dict(v) for k, v in sorted(switches.items())}
    if extra:
        doc.update(extra)
    return doc


_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]+")


def csv_name(point: str) -> str:
    return _UNSAFE.sub("_", point.replace("->", "-to-")) + ".csv"


def write_outputs(stats: Stats, summary: dict, out_dir: Path, until_ns: int | None = None) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [out_dir / "summary.json"]
    with open(written[0], "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=False)
        fh.write("\n")
    series_dir = out_dir / "series"
    for point in sorted(stats.series):
        series_dir.mkdir(exist_ok=True)
        path = series_dir / csv_name(point)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "packets", "bytes"])
            for t, pkts, nbytes in stats.series_rows(point, until_ns):
                w.writerow([f"{t:.6f}", pkts, nbytes])
        written.append(path)
    return written
