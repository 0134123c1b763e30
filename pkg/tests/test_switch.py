import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpsim.stats import Stats, parse_trace_line
from dpsim.switch import SwitchConfig, VirtualQueue

from helpers import PORT_MAP_PROGRAM, frame, inject, make_switch

MS = 1_000_000
ROUTES = "table_add by_dport to 9000 => 1 0\ntable_add by_dport to 9003 => 1 3\n"


def traced(**kw):
    buf = io.StringIO()
    engine, sw, devs = make_switch(stats=Stats(trace=buf), **kw)
    return engine, sw, devs, buf


def events(buf, kind=None):
    out = [parse_trace_line(line) for line in buf.getvalue().splitlines()]
    return [e for e in out if kind is None or e.kind == kind]


# input buffer

def test_first_arrival_waits_in_low_subqueue():
    engine, sw, _ = make_switch(ROUTES)
    sw.receive(0, 1, frame())
    assert len(sw.input_low) == 1 and not sw.input_high


def test_capacity_one_input_overflow():
    engine, sw, devs = make_switch(ROUTES, input_buffer_capacity=1)
    inject(engine, sw, 0, 0, frame())
    inject(engine, sw, 0, 0, frame())
    engine.run_until(10 * MS)
    assert sw.drops == {"input_overflow": 1}
    assert len(devs[1].frames) == 1


def test_ingress_timestamp_is_arrival_time():
    engine, sw, devs, buf = traced(commands=ROUTES)
    inject(engine, sw, 1234, 0, frame())
    engine.run_until(MS)
    (deq,) = events(buf, "dequeue")
    assert int(deq.detail["ingress_ts"]) == int(deq.detail["enq_ts"]) == 1234


def test_garbage_frame_is_parse_drop():
    engine, sw, _ = make_switch(ROUTES)
    inject(engine, sw, 0, 0, frame()[:20])
    engine.run_until(MS)
    assert sw.drops == {"parse_error": 1}


# labels

def test_start_labels_follow_token_bucket():
    q = VirtualQueue(0, 1000, 10, finish=False)
    assert q.next_label(0) == 0 and q.next_available == MS
    assert q.next_label(0) == MS and q.next_available == 2 * MS
    assert q.next_label(5 * MS) == 5 * MS


def test_finish_labels():
    q = VirtualQueue(0, 1000, 10)
    assert [q.next_label(0), q.next_label(0), q.next_label(5 * MS)] == [MS, 2 * MS, 6 * MS]


def test_start_mode_emit_times():
    engine, sw, devs = make_switch(ROUTES, label_mode="start", default_queue_rate_pps=1000)
    for t in (0, 0, 5 * MS):
        inject(engine, sw, t, 0, frame())
    engine.run_until(20 * MS)
    assert [f[0] for f in devs[1].frames] == [0, MS, 5 * MS]


def grid_oracle(anchor, tick, label):
    """First naive poll time >= label on the grid anchor + k*tick."""
    t = anchor
    while t < label:
        t += tick
    return t


@pytest.mark.parametrize("rate", [1e6, 3e5, 7777])
def test_idle_skip_lands_on_poll_grid(rate):
    engine, sw, devs = make_switch(ROUTES, label_mode="start", switch_rate_pps=rate,
                                   default_queue_rate_pps=1000)
    inject(engine, sw, 0, 0, frame())
    inject(engine, sw, 0, 0, frame())
    engine.run_until(10 * MS)
    tick = round(1e9 / rate)
    assert [f[0] for f in devs[1].frames] == [0, grid_oracle(0, tick, MS)]
    # idle polls between the two emits are skipped entirely
    assert sw.polls == 2


def test_empty_switch_never_polls():
    engine, sw, _ = make_switch(ROUTES)
    engine.run_until(MS)
    assert sw.polls == 0 and engine.pending() == 0


def test_strict_priority():
    engine, sw, devs, buf = traced(commands=ROUTES)
    inject(engine, sw, 0, 0, frame(dport=9003))
    inject(engine, sw, 0, 0, frame(dport=9000))
    engine.run_until(MS)
    assert [int(e.detail["qid"]) for e in events(buf, "dequeue")] == [0, 3]


def test_round_robin_across_ports():
    cmds = "table_add by_dport to 9000 => 1 0\ntable_add by_dport to 9002 => 2 0\n"
    engine, sw, devs = make_switch(cmds, default_queue_rate_pps=1e9)
    for _ in range(3):
        inject(engine, sw, 0, 0, frame(dport=9000))
    for _ in range(3):
        inject(engine, sw, 0, 0, frame(dport=9002))
    engine.run_until(MS)
    order = sorted([(t, 1) for t, _, _ in devs[1].frames] + [(t, 2) for t, _, _ in devs[2].frames])
    assert [p for _, p in order] == [1, 2, 1, 2, 1, 2]


# runtime rates

def test_rate_change_on_empty_queue():
    q = VirtualQueue(0, 1000, 10, finish=False)
    q.next_label(0)
    q.set_rate(2000, 3 * MS)
    assert q.next_label(3 * MS) == 3 * MS and q.next_available == 3 * MS + MS // 2


def test_rate_change_keeps_queued_labels():
    q = VirtualQueue(0, 1000, 10)
    labels = [q.next_label(0) for _ in range(3)]
    q.fifo.extend((lab, None, None) for lab in labels)
    q.set_rate(10, 0)
    assert [e[0] for e in q.fifo] == labels
    assert q.next_label(0) == labels[-1] + 100 * MS


def test_timed_queue_rate_command():
    cmds = ROUTES + "@10ms set_queue_rate 1 0 2000\n"
    engine, sw, devs = make_switch(cmds, label_mode="start", default_queue_rate_pps=1000)
    arrivals = [k * MS for k in range(10)] + [10 * MS + k * MS // 4 for k in range(20)]
    for t in arrivals:
        inject(engine, sw, t, 0, frame())
    engine.run_until(100 * MS)
    times = [f[0] for f in devs[1].frames]
    assert times[:10] == arrivals[:10]
    assert times[10:] == [10 * MS + k * MS // 2 for k in range(20)]


def test_bad_queue_rate_arguments():
    _, sw, _ = make_switch(ROUTES)
    with pytest.raises(ValueError, match="qid 8"):
        sw.set_queue_rate(1, 8, 1000)
    with pytest.raises(ValueError):
        sw.set_queue_rate(1, 0, 0)


def test_config_validation():
    for bad in ({"switch_rate_pps": 0}, {"queue_capacity": 0}, {"max_internal_passes": 0},
                {"label_mode": "middle"}, {"num_ports": 0}):
        with pytest.raises(ValueError):
            SwitchConfig(**bad)


# internal packets

INST_PROGRAM = dict(PORT_MAP_PROGRAM, tables={
    "by_dport": {"match": "exact", "key": ["udp.dst_port", "standard.instance_type"],
                 "actions": ["to", "bounce"]},
    "egress_by_dport": PORT_MAP_PROGRAM["tables"]["egress_by_dport"],
})


def test_resubmitted_packet_goes_first():
    cmds = ("table_add by_dport bounce 9100 0 => 1\ntable_add by_dport to 9100 1 => 1 0\n"
            "table_add by_dport to 9000 0 => 1 0\n")
    engine, sw, devs, buf = traced(commands=cmds, program=INST_PROGRAM)
    a = inject(engine, sw, 0, 0, frame(dport=9100))
    b = inject(engine, sw, 0, 0, frame(dport=9000))
    engine.run_until(MS)
    enq = [(e.packet_id, e.detail["inst"]) for e in events(buf, "enqueue")]
    assert enq == [(a, "RESUBMIT"), (b, "NORMAL")]


def test_resubmit_loop_is_bounded():
    engine, sw, _ = make_switch("table_add by_dport bounce 9100 => 1", max_internal_passes=3)
    inject(engine, sw, 0, 0, frame(dport=9100))
    engine.run_until(MS)
    assert sw.drops == {"loop_guard": 1}
    assert sw.conservation()["balanced"]


def test_recirculate_then_emit():
    cmds = ROUTES + "table_add egress_by_dport again 9000\n"
    engine, sw, devs = make_switch(cmds, max_internal_passes=2)
    inject(engine, sw, 0, 0, frame())
    engine.run_until(MS)
    # every pass recirculates, so the guard eventually drops it
    assert sw.drops == {"loop_guard": 1} and sw.polls == 3


def test_clone_doubles_output():
    cmds = ROUTES + "table_add egress_by_dport copy_to 9000 => 3\n"
    engine, sw, devs = make_switch(cmds)
    for k in range(10):
        inject(engine, sw, k * 1000, 0, frame())
    engine.run_until(MS)
    assert len(devs[1].frames) == len(devs[3].frames) == 10
    c = sw.conservation()
    assert c["rx"] == 10 and c["clones"] == 10 and c["emitted"] == 20 and c["balanced"]


def test_unknown_port_is_dropped():
    engine, sw, _ = make_switch("table_add by_dport to 9000 => 9 0")
    inject(engine, sw, 0, 0, frame())
    engine.run_until(MS)
    assert sw.drops == {"bad_port": 1}


# properties

@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2 * MS), st.sampled_from([9000, 9003, 9100, 9200, 9300]),
                          st.integers(0, 3)), max_size=80),
       st.integers(1, 4), st.integers(1, 6), st.integers(0, 3 * MS),
       st.sampled_from([500.0, 5000.0, 1e6]))
def test_conservation_and_identities(arrivals, in_cap, q_cap, stop, qrate):
    cmds = (ROUTES + "table_add by_dport bounce 9100 => 2\n"
            "table_add egress_by_dport copy_to 9003 => 2\ntable_add egress_by_dport again 9000\n")
    engine, sw, devs, buf = traced(commands=cmds, input_buffer_capacity=in_cap, queue_capacity=q_cap,
                                   default_queue_rate_pps=qrate, switch_rate_pps=2e5)
    for t, dport, port in arrivals:
        inject(engine, sw, t, port, frame(dport=dport))
    engine.run_until(stop)
    c = sw.conservation()
    assert c["rx"] + c["clones"] == c["emitted"] + sum(c["drops"].values()) + c["buffered"]
    tick = round(1e9 / 2e5)
    deqs = events(buf, "dequeue")
    for e in deqs:
        d = {k: int(v) for k, v in e.detail.items() if k != "inst"}
        assert d["egress_ts"] - d["enq_ts"] == d["deq_td"] >= 0
        if e.detail["inst"] == "NORMAL":
            assert d["ingress_ts"] == d["enq_ts"]
    times = [e.time for e in deqs]
    assert all(b - a >= tick for a, b in zip(times, times[1:]))
    per_queue = {}
    for e in deqs:
        per_queue.setdefault((e.detail["port"], e.detail["qid"]), []).append(e.time)
    spacing = round(1e9 / qrate) - tick
    for ts in per_queue.values():
        assert all(b - a >= spacing for a, b in zip(ts, ts[1:]))
