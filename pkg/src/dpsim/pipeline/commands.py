"""Flow-table command scripts.

One command per line, ``#`` starts a comment, an optional ``@<time>`` prefix
defers the command to that virtual time::

    table_add <table> <action> <key...> => <param...>
    table_set_default <table> <action> [param...]
    set_queue_rate <port> <qid> <pps>
    set_switch_rate <pps>
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from ..units import format_time, parse_time
from .tables import MatchKind, PipelineError
from .values import parse_prefix, parse_value


class CommandError(ValueError):
    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class Command:
    line: int
    at: int | None
    op: str
    args: list[str]
    text: str
    apply: Callable[[], None] | None = field(default=None, repr=False)


@dataclass
class MutationReport:
    entries_added: int = 0
    defaults_set: int = 0
    rate_changes: int = 0
    scheduled: int = 0
    commands: list[Command] = field(default_factory=list)


_ARITY = {"set_queue_rate": 3, "set_switch_rate": 1}


def parse_commands(text: str) -> list[Command]:
    """Tokenize a script; only syntax is checked here."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        at = None
        if tokens[0].startswith("@"):
            try:
                at = parse_time(tokens[0][1:])
            except ValueError as exc:
                raise CommandError(lineno, str(exc)) from None
            tokens = tokens[1:]
            if not tokens:
                raise CommandError(lineno, "time prefix without a command")
        op, args = tokens[0], tokens[1:]
        if op not in ("table_add", "table_set_default", "set_queue_rate", "set_switch_rate"):
            raise CommandError(lineno, f"unknown command {op!r}")
        if op in _ARITY and len(args) != _ARITY[op]:
            raise CommandError(lineno, f"{op} takes {_ARITY[op]} argument(s), got {len(args)}")
        if op.startswith("table") and len(args) < 2:
            raise CommandError(lineno, f"{op} needs a table and an action")
        out.append(Command(lineno, at, op, args, line))
    return out


def _number(text: str, line: int, what: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise CommandError(line, f"{what} {text!r} is not a number") from None
    if value <= 0:
        raise CommandError(line, f"{what} must be positive, got {text}")
    return value


def _prepare(cmd: Command, pipeline, switch) -> Callable[[], None]:
    line = cmd.line
    if cmd.op in ("table_add", "table_set_default"):
        try:
            table = pipeline.table(cmd.args[0])
            action = table.action(cmd.args[1])
        except PipelineError as exc:
            raise CommandError(line, str(exc)) from None
        rest = cmd.args[2:]
        consts = pipeline.config.constants
        if cmd.op == "table_set_default":
            key_tokens, param_tokens = [], rest
        elif "=>" in rest:
            cut = rest.index("=>")
            key_tokens, param_tokens = rest[:cut], rest[cut + 1:]
        else:
            key_tokens, param_tokens = rest, []
        try:
            params = [parse_value(t, consts) for t in param_tokens]
            action.check_params(params)
        except (ValueError, PipelineError) as exc:
            raise CommandError(line, str(exc)) from None
        if cmd.op == "table_set_default":
            return lambda: table.set_default(action.name, params)
        if len(key_tokens) != len(table.keys):
            raise CommandError(
                line, f"table {table.name!r} expects {len(table.keys)} key(s), got {len(key_tokens)}")
        try:
            if table.kind is MatchKind.LPM:
                value, plen = parse_prefix(key_tokens[0], table.keys[0].width)
                key, prefix_len = [value], plen
            else:
                key = [parse_value(t, consts) for t in key_tokens]
                prefix_len = None
                for ref, v in zip(table.keys, key):
                    if v >> ref.width:
                        raise ValueError(f"key {v:#x} does not fit {ref} ({ref.width} bits)")
        except ValueError as exc:
            raise CommandError(line, f"malformed key: {exc}") from None
        return lambda: table.add_entry(key, action.name, params, prefix_len)
    if switch is None:
        raise CommandError(line, f"{cmd.op} needs a switch to act on")
    if cmd.op == "set_switch_rate":
        pps = _number(cmd.args[0], line, "switch rate")
        return lambda: switch.set_switch_rate(pps)
    try:
        port, qid = int(cmd.args[0]), int(cmd.args[1])
    except ValueError:
        raise CommandError(line, "port and qid must be integers") from None
    if not 0 <= port < switch.num_ports:
        raise CommandError(line, f"port {port} outside 0..{switch.num_ports - 1}")
    if not 0 <= qid <= 7:
        raise CommandError(line, f"qid {qid} outside 0..7")
    pps = _number(cmd.args[2], line, "queue rate")
    return lambda: switch.set_queue_rate(port, qid, pps)


def load_flow_commands(pipeline, text: str, switch=None) -> MutationReport:
    """Validate every command, apply the immediate ones, schedule the timed ones.

    Timed commands go on the switch's engine; they need a switch.
    """
    report = MutationReport()
    commands = parse_commands(text)
    for cmd in commands:
        cmd.apply = _prepare(cmd, pipeline, switch)
    for cmd in commands:
        report.commands.append(cmd)
        if cmd.at is not None and (switch is None or cmd.at > switch.engine.now):
            if switch is None:
                raise CommandError(cmd.line, f"@{format_time(cmd.at)} needs a switch engine")
            switch.engine.schedule(cmd.at, _run_timed, (cmd, switch), kind="command")
            report.scheduled += 1
            continue
        try:
            cmd.apply()
        except PipelineError as exc:
            raise CommandError(cmd.line, str(exc)) from None
        _count(report, cmd)
    return report


def _count(report: MutationReport, cmd: Command) -> None:
    if cmd.op == "table_add":
        report.entries_added += 1
    elif cmd.op == "table_set_default":
        report.defaults_set += 1
    else:
        report.rate_changes += 1


def _run_timed(arg) -> None:
    cmd, switch = arg
    try:
        cmd.apply()
    except PipelineError as exc:
        raise CommandError(cmd.line, str(exc)) from None
    switch.on_command(cmd)
