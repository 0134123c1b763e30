import json
from pathlib import Path

import pytest
import yaml

from dpsim.cli import EXIT_LOAD, EXIT_MISMATCH, EXIT_OK, EXIT_RUNTIME, main, trace_diff
from dpsim.generate import generate
from dpsim.scenario import ScenarioError, load_scenario


@pytest.fixture
def fwd(tmp_path) -> Path:
    return generate("forward", tmp_path / "fwd", duration="50ms", rate="10Mbps")


def rewrite(path: Path, edit) -> Path:
    doc = yaml.safe_load(path.read_text())
    edit(doc)
    path.write_text(yaml.safe_dump(doc))
    return path


def problems(path) -> list[str]:
    with pytest.raises(ScenarioError) as info:
        load_scenario(path)
    return info.value.problems


def test_minimal_scenario_gets_defaults(fwd):
    sc = load_scenario(fwd)
    assert sc.warnings == []
    r = sc.resolved()
    s1 = r["switches"]["s1"]
    assert (s1["queue_capacity"], s1["input_buffer"], s1["max_internal_passes"]) == (1000, 1024, 4)
    assert s1["queue_rate"] == s1["switch_rate"] and s1["label_mode"] == "finish"
    assert r["hosts"]["h1"]["tx_queue"] == 1000
    assert r["apps"][0]["stop"] == r["duration"] == 50_000_000


def test_missing_pipeline_names_path(fwd):
    (fwd.parent / "forward.p4.yaml").unlink()
    msgs = problems(fwd)
    assert any("file not found" in m and "forward.p4.yaml" in m for m in msgs)


def test_node_used_twice(fwd):
    rewrite(fwd, lambda d: d["hosts"].__setitem__("s1", {"ip": "10.9.9.9", "mac": "00:00:00:00:09:09"}))
    assert any("'s1'" in m and "host and a switch" in m for m in problems(fwd))


def test_duplicate_yaml_key(fwd):
    text = fwd.read_text().replace("hosts:\n", "hosts:\n  h2: {ip: 10.0.3.3, mac: '00:00:00:00:03:03'}\n", 1)
    fwd.write_text(text)
    assert any("duplicate key 'h2'" in m for m in problems(fwd))


def test_schema_errors_carry_paths(fwd):
    def edit(d):
        d["hosts"]["h1"]["ip"] = "10.0.300.1"
        d["switches"]["s1"]["colour"] = "blue"
    msgs = problems(rewrite(fwd, edit))
    assert any("hosts.h1.ip" in m for m in msgs)
    assert any("switches.s1.colour" in m for m in msgs)


def test_all_problems_reported_together(fwd):
    def edit(d):
        d["links"][0]["b"] = "s9:0"
        d["apps"][0]["dst"] = "h7"
    msgs = problems(rewrite(fwd, edit))
    assert any("unknown node 's9'" in m for m in msgs)
    assert any("unknown destination 'h7'" in m for m in msgs)


def test_unreachable_destination(fwd):
    cmds = fwd.parent / "s1.commands"
    cmds.write_text(cmds.read_text().splitlines()[0] + "\n")
    assert any("probe dropped at s1" in m for m in problems(fwd))


def test_bad_command_line_is_reported(fwd):
    (fwd.parent / "s1.commands").write_text("table_add ipv4_lpm nope 1 => 2\n")
    assert any("line 1" in m for m in problems(fwd))


@pytest.mark.parametrize("template,params", [
    ("forward", {}), ("tunnel", {}), ("ecmp", {"desk": True}), ("ecmp", {"flows": 8}),
])
def test_generated_bundles_load_cleanly(tmp_path, template, params):
    sc = load_scenario(generate(template, tmp_path, **params))
    assert sc.warnings == []


def test_generate_rejects_bad_params(tmp_path, capsys):
    assert main(["generate", "forward", "--rate", "0Mbps", "--out", str(tmp_path)]) == EXIT_LOAD
    assert main(["generate", "ecmp", "--flows", "0", "--out", str(tmp_path)]) == EXIT_LOAD


# CLI

def test_run_writes_outputs_and_echoes_seed(fwd, tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["run", str(fwd), "--seed", "7", "--out", str(out), "--trace"]) == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["seed"] == 7 and summary["conserved"]
    assert summary["scenario"]["switches"]["s1"]["queue_capacity"] == 1000
    assert (out / "trace.txt").stat().st_size > 0
    assert any(p.suffix == ".csv" for p in (out / "series").iterdir())
    assert "seed 7" in capsys.readouterr().out


def test_same_command_same_outputs(fwd, tmp_path):
    for d in ("a", "b"):
        assert main(["run", str(fwd), "--out", str(tmp_path / d), "--trace"]) == EXIT_OK
    for rel in ["summary.json", "trace.txt"] + [f"series/{p.name}" for p in (tmp_path / "a/series").iterdir()]:
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_load_error_exit(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) == EXIT_LOAD
    assert main(["validate", str(tmp_path / "missing.yaml")]) == EXIT_LOAD
    assert "cannot read" in capsys.readouterr().err


def test_runtime_error_exit(fwd, tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", str(fwd), "--out", str(blocker)]) == EXIT_RUNTIME
    assert "runtime error" in capsys.readouterr().err


def test_validate_prints_resolved(fwd, capsys):
    assert main(["validate", str(fwd)]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["switches"]["s1"]["input_buffer"] == 1024


def test_trace_diff(tmp_path, capsys):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    a.write_text("t=1 x\nt=2 y\n")
    b.write_text("t=1 x\nt=2 y\n")
    c.write_text("t=1 x\nt=2 z\n")
    assert main(["trace-diff", str(a), str(b)]) == EXIT_OK
    assert main(["trace-diff", str(a), str(c)]) == EXIT_MISMATCH
    assert "line 2" in trace_diff(a, c)[1]
    assert main(["trace-diff", str(a), str(tmp_path / "nope")]) == EXIT_LOAD
