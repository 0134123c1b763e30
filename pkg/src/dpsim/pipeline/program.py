"""Pipeline programs: declared in a config mapping, instantiated once per switch.

A program names the custom headers it parses, user metadata fields, actions
(sequences of primitives), tables, and the ingress/egress control flow. Control
flow is a list whose items are table names or ``{if_valid: hdr, then: [...],
else: [...]}`` branches.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping

from ..packet import (
    STANDARD_HEADERS, CustomHeaderDef, HeaderError, HeaderRegistry, insert_header, remove_header,
)
from .hashing import hash_select
from .tables import ActionDef, FieldRef, MatchKind, PipelineError, Table
from .values import parse_value

STANDARD_META = {
    "ingress_port": 9,
    "egress_port": 9,
    "instance_type": 32,
    "priority": 3,
    "ingress_global_timestamp": 64,
    "enq_timestamp": 64,
    "deq_timedelta": 64,
    "egress_global_timestamp": 64,
}

# primitive name -> number of arguments
PRIMITIVES = {
    "set_egress_port": 1,
    "set_field": 2,
    "add_header": 1,
    "remove_header": 1,
    "decrement_ttl": 0,
    "set_queue_priority": 1,
    "hash_select": 3,
    "drop": 0,
    "resubmit": 0,
    "recirculate": 0,
    "clone_to_port": 1,
    "no_action": 0,
}
INGRESS_ONLY = {"resubmit", "set_egress_port"}
EGRESS_ONLY = {"recirculate"}


@dataclass(slots=True)
class Verdict:
    """Outcome of one pipeline pass.

    ingress kinds: forward, drop, resubmit. egress kinds: emit, drop, recirculate.
    """

    kind: str
    port: int | None = None
    cause: str | None = None
    clone_port: int | None = None


class _Exec:
    __slots__ = ("stack", "meta", "params", "pipeline", "drop_cause", "resubmit",
                 "recirculate", "clone_port")

    def __init__(self, stack, meta, pipeline) -> None:
        self.stack = stack
        self.meta = meta
        self.params = ()
        self.pipeline = pipeline
        self.drop_cause = None
        self.resubmit = False
        self.recirculate = False
        self.clone_port = None


class PipelineConfig:
    """A validated, switch-independent pipeline program."""

    def __init__(self, spec: Mapping[str, Any],
                 header_defs: Mapping[str, CustomHeaderDef] | None = None) -> None:
        header_defs = dict(header_defs or {})
        self.name = str(spec.get("name", "pipeline"))
        self.registry = HeaderRegistry()
        for hname in spec.get("headers", []) or []:
            if hname not in header_defs:
                raise PipelineError(f"pipeline {self.name!r} binds unknown header {hname!r}")
            self.registry.add(header_defs[hname])
        self.constants = {str(k): parse_value(v) for k, v in (spec.get("constants") or {}).items()}
        self.metadata = {}
        for mname, width in (spec.get("metadata") or {}).items():
            if not isinstance(width, int) or not 1 <= width <= 64:
                raise PipelineError(f"metadata field {mname!r}: width must be 1..64")
            self.metadata[str(mname)] = width

        self.actions: dict[str, ActionDef] = {
            "drop": self._compile_action("drop", {"body": [["drop"]]}),
            "no_action": self._compile_action("no_action", {"body": [["no_action"]]}),
        }
        for aname, aspec in (spec.get("actions") or {}).items():
            if aname in self.actions:
                raise PipelineError(f"action {aname!r} is built in")
            self.actions[aname] = self._compile_action(aname, aspec or {})

        self.table_specs: dict[str, dict] = {}
        for tname, tspec in (spec.get("tables") or {}).items():
            self.table_specs[tname] = self._check_table(tname, tspec or {})

        self.ingress = self._compile_control(spec.get("ingress") or [], "ingress")
        self.egress = self._compile_control(spec.get("egress") or [], "egress")

    # -- validation / compilation -------------------------------------------------

    def field_ref(self, text: str) -> FieldRef:
        scope_name, _, fname = str(text).partition(".")
        if not fname:
            raise PipelineError(f"{text!r} is not a field reference (expected header.field)")
        if scope_name == "meta":
            if fname not in self.metadata:
                raise PipelineError(f"undeclared metadata field {text!r}")
            return FieldRef("meta", "meta", fname, self.metadata[fname])
        if scope_name == "standard":
            if fname not in STANDARD_META:
                raise PipelineError(f"unknown standard metadata {text!r}")
            return FieldRef("std", "standard", fname, STANDARD_META[fname])
        defn = STANDARD_HEADERS.get(scope_name) or self.registry.by_name.get(scope_name)
        if defn is None:
            raise PipelineError(f"field {text!r} refers to a header this pipeline does not parse")
        if fname not in defn.width_of:
            raise PipelineError(f"header {scope_name!r} has no field {fname!r}")
        return FieldRef("hdr", scope_name, fname, defn.width_of[fname])

    def _is_ref(self, text) -> bool:
        if not isinstance(text, str) or "." not in text:
            return False
        head = text.split(".", 1)[0]
        return head in ("meta", "standard") or head in STANDARD_HEADERS or head in self.registry

    def _getter(self, arg, params: dict[str, int]) -> Callable:
        if isinstance(arg, str) and arg.startswith("$"):
            if arg[1:] not in params:
                raise PipelineError(f"unknown action parameter {arg!r}")
            idx = params[arg[1:]]
            return lambda c: c.params[idx]
        if self._is_ref(arg):
            ref = self.field_ref(arg)
            read = ref.reader()

            def get(c):
                value = read(c.stack, c.meta)
                if value is None:
                    raise PipelineError(f"read of {ref} on a packet without it")
                return value
            return get
        try:
            const = parse_value(arg, self.constants)
        except ValueError as exc:
            raise PipelineError(str(exc)) from None
        return lambda c: const

    def _compile_action(self, name: str, aspec: Mapping[str, Any]) -> ActionDef:
        params = []
        for p in aspec.get("params", []) or []:
            if isinstance(p, Mapping):
                pname, width = p.get("name"), p.get("width")
            else:
                pname, width = p
            if not isinstance(width, int) or not 1 <= width <= 64:
                raise PipelineError(f"action {name!r}: parameter {pname!r} needs a width in 1..64")
            params.append((str(pname), width))
        index = {p[0]: i for i, p in enumerate(params)}
        steps = []
        prims = []
        positive = set()
        for raw in aspec.get("body", []) or []:
            call = [raw] if isinstance(raw, str) else list(raw)
            prim, args = call[0], call[1:]
            if prim not in PRIMITIVES:
                raise PipelineError(f"action {name!r}: unknown primitive {prim!r}")
            if len(args) != PRIMITIVES[prim]:
                raise PipelineError(
                    f"action {name!r}: {prim} takes {PRIMITIVES[prim]} argument(s), got {len(args)}")
            steps.append(self._compile_primitive(name, prim, args, index))
            prims.append(prim)
            if prim == "hash_select" and isinstance(args[2], str) and args[2].startswith("$"):
                positive.add(args[2][1:])
        return ActionDef(name, tuple(params), tuple(steps), tuple(prims), frozenset(positive))

    def _custom(self, action: str, hname) -> CustomHeaderDef:
        defn = self.registry.by_name.get(str(hname))
        if defn is None:
            raise PipelineError(f"action {action!r}: {hname!r} is not a custom header of this pipeline")
        return defn

    def _compile_primitive(self, action: str, prim: str, args: list, params: dict) -> Callable:
        if prim == "set_egress_port":
            get = self._getter(args[0], params)

            def step(c):
                c.meta.egress_port = get(c)
        elif prim == "set_field":
            ref = self.field_ref(args[0])
            get = self._getter(args[1], params)
            mask = (1 << ref.width) - 1
            if ref.scope == "std":
                raise PipelineError(f"action {action!r}: standard metadata {ref} is read-only")
            if ref.scope == "meta":
                fname = ref.field

                def step(c):
                    c.meta.user[fname] = get(c) & mask
            else:
                hname, fname = ref.header, ref.field

                def step(c):
                    h = c.stack.get(hname)
                    if h is None:
                        raise PipelineError(f"set_field on missing header {hname!r}")
                    h.set(fname, get(c))
        elif prim == "add_header":
            defn = self._custom(action, args[0])

            def step(c):
                try:
                    insert_header(c.stack, defn)
                except HeaderError as exc:
                    raise PipelineError(str(exc)) from None
        elif prim == "remove_header":
            defn = self._custom(action, args[0])

            def step(c):
                try:
                    remove_header(c.stack, defn)
                except HeaderError as exc:
                    raise PipelineError(str(exc)) from None
        elif prim == "decrement_ttl":
            def step(c):
                ip = c.stack.get("ipv4")
                if ip is None:
                    raise PipelineError("decrement_ttl on a packet without IPv4")
                ttl = ip.fields["ttl"]
                if ttl <= 1:
                    c.drop_cause = c.drop_cause or "ttl_expired"
                ip.set("ttl", max(ttl - 1, 0))
        elif prim == "set_queue_priority":
            get = self._getter(args[0], params)

            def step(c):
                qid = get(c)
                if qid > 7:
                    raise PipelineError(f"queue priority {qid} outside 0..7")
                c.meta.priority = qid
        elif prim == "hash_select":
            ref = self.field_ref(args[0])
            if ref.scope != "meta":
                raise PipelineError(f"action {action!r}: hash_select must write user metadata")
            fname, mask = ref.field, (1 << ref.width) - 1
            get_base = self._getter(args[1], params)
            get_count = self._getter(args[2], params)

            def step(c):
                stack = c.stack
                ip = stack.get("ipv4")
                if ip is None:
                    raise PipelineError("hash_select on a packet without IPv4")
                l4 = stack.get("udp") or stack.get("tcp")
                sport, dport = (l4.fields["src_port"], l4.fields["dst_port"]) if l4 else (0, 0)
                count = get_count(c)
                if count < 1:
                    raise PipelineError("hash_select group size must be >= 1")
                f = ip.fields
                idx = hash_select(f["src_ip"], f["dst_ip"], f["protocol"], sport, dport,
                                  count, c.pipeline.hash_seed)
                c.meta.user[fname] = (get_base(c) + idx) & mask
        elif prim == "drop":
            def step(c):
                c.drop_cause = c.drop_cause or "pipeline"
        elif prim == "resubmit":
            def step(c):
                c.resubmit = True
        elif prim == "recirculate":
            def step(c):
                c.recirculate = True
        elif prim == "clone_to_port":
            get = self._getter(args[0], params)

            def step(c):
                c.clone_port = get(c)
        else:  # no_action
            def step(c):
                pass
        return step

    def _check_table(self, name: str, tspec: Mapping[str, Any]) -> dict:
        try:
            kind = MatchKind(str(tspec.get("match", "exact")).lower())
        except ValueError:
            raise PipelineError(f"table {name!r}: match must be exact or lpm") from None
        keys = [self.field_ref(k) for k in tspec.get("key", []) or []]
        allowed = list(tspec.get("actions", []) or [])
        for aname in allowed:
            if aname not in self.actions:
                raise PipelineError(f"table {name!r} lists unknown action {aname!r}")
        for builtin in ("drop", "no_action"):
            if builtin not in allowed:
                allowed.append(builtin)
        default = tspec.get("default", "drop")
        default = [default] if isinstance(default, str) else list(default)
        if default[0] not in allowed:
            raise PipelineError(f"table {name!r}: default action {default[0]!r} not in its action list")
        dparams = [parse_value(v, self.constants) for v in default[1:]]
        self.actions[default[0]].check_params(dparams)
        spec = {"kind": kind, "keys": keys, "actions": allowed,
                "default": (default[0], tuple(dparams))}
        Table(name, kind, keys, {a: self.actions[a] for a in allowed},
              (self.actions[default[0]], tuple(dparams)))  # structural checks
        return spec

    def _compile_control(self, items: list, stage: str) -> tuple:
        forbidden = EGRESS_ONLY if stage == "ingress" else INGRESS_ONLY
        out = []
        for item in items:
            if isinstance(item, str):
                if item not in self.table_specs:
                    raise PipelineError(f"{stage} applies unknown table {item!r}")
                for aname in self.table_specs[item]["actions"]:
                    bad = forbidden.intersection(self.actions[aname].primitives)
                    if bad:
                        raise PipelineError(
                            f"table {item!r} in {stage} allows action {aname!r} using {sorted(bad)}")
                out.append(("table", item))
            elif isinstance(item, Mapping) and "if_valid" in item:
                hname = str(item["if_valid"])
                if hname not in STANDARD_HEADERS and hname not in self.registry:
                    raise PipelineError(f"{stage}: if_valid on unknown header {hname!r}")
                out.append(("if_valid", hname,
                            self._compile_control(item.get("then") or [], stage),
                            self._compile_control(item.get("else") or [], stage)))
            else:
                raise PipelineError(f"{stage}: cannot interpret control item {item!r}")
        return tuple(out)

    def instantiate(self, hash_seed: int = 0) -> "Pipeline":
        return Pipeline(self, hash_seed)


class Pipeline:
    """A switch's running copy of a program, with its own table entries."""

    def __init__(self, config: PipelineConfig, hash_seed: int = 0) -> None:
        self.config = config
        self.hash_seed = hash_seed
        self.registry = config.registry
        self.tables: dict[str, Table] = {}
        for name, spec in config.table_specs.items():
            actions = {a: config.actions[a] for a in spec["actions"]}
            dname, dparams = spec["default"]
            self.tables[name] = Table(name, spec["kind"], spec["keys"], actions,
                                      (config.actions[dname], dparams))
        # called as observer(table_name, hit, action_name, meta) on every lookup
        self.observer: Callable | None = None

    def table(self, name: str) -> Table:
        try:
            return self.tables[name]
        except KeyError:
            raise PipelineError(f"unknown table {name!r}") from None

    def _apply(self, control: tuple, c: _Exec) -> None:
        for node in control:
            if node[0] == "table":
                table = self.tables[node[1]]
                action, params, hit = table.lookup(c.stack, c.meta)
                if self.observer is not None:
                    self.observer(table.name, hit, action.name, c.meta)
                c.params = params
                for step in action.steps:
                    step(c)
            else:
                present = c.stack.get(node[1]) is not None
                self._apply(node[2] if present else node[3], c)

    def run_ingress(self, stack, meta) -> Verdict:
        c = _Exec(stack, meta, self)
        try:
            self._apply(self.config.ingress, c)
        except PipelineError:
            return Verdict("drop", cause="pipeline_error", clone_port=c.clone_port)
        if c.drop_cause:
            return Verdict("drop", cause=c.drop_cause, clone_port=c.clone_port)
        if c.resubmit:
            return Verdict("resubmit", clone_port=c.clone_port)
        if meta.egress_port is None:
            return Verdict("drop", cause="no_egress", clone_port=c.clone_port)
        return Verdict("forward", port=meta.egress_port, clone_port=c.clone_port)

    def run_egress(self, stack, meta) -> Verdict:
        if not self.config.egress:
            return Verdict("emit", port=meta.egress_port)
        c = _Exec(stack, meta, self)
        try:
            self._apply(self.config.egress, c)
        except PipelineError:
            return Verdict("drop", cause="pipeline_error", clone_port=c.clone_port)
        if c.drop_cause:
            return Verdict("drop", cause=c.drop_cause, clone_port=c.clone_port)
        if c.recirculate:
            return Verdict("recirculate", clone_port=c.clone_port)
        return Verdict("emit", port=meta.egress_port, clone_port=c.clone_port)


def load_pipeline_file(path, header_defs: Mapping[str, CustomHeaderDef] | None = None) -> PipelineConfig:
    import yaml

    with open(path) as fh:
        spec = yaml.safe_load(fh)
    if not isinstance(spec, Mapping):
        raise PipelineError(f"{path}: pipeline file must be a mapping")
    return PipelineConfig(spec, header_defs)
