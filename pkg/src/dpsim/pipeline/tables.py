"""Match-action tables (exact and longest-prefix) and compiled actions."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence


class PipelineError(Exception):
    """Bad pipeline program, or an action that cannot run on this packet."""


class MatchKind(enum.Enum):
    EXACT = "exact"
    LPM = "lpm"


@dataclass(frozen=True)
class FieldRef:
    """``hdr.field``, ``meta.name`` (user metadata) or ``standard.name``."""

    scope: str
    header: str
    field: str
    width: int

    def __str__(self) -> str:
        return f"{self.header}.{self.field}"

    def reader(self) -> Callable:
        fname = self.field
        if self.scope == "hdr":
            hname = self.header

            def read(stack, meta):
                for h in stack.headers:
                    if h.defn.name == hname:
                        return h.fields[fname]
                return None
        elif self.scope == "meta":
            def read(stack, meta):
                return meta.user.get(fname)
        else:
            def read(stack, meta):
                return int(getattr(meta, fname))
        return read


@dataclass
class ActionDef:
    """A named sequence of primitives with a typed parameter list."""

    name: str
    params: tuple[tuple[str, int], ...]
    steps: tuple[Callable, ...]
    primitives: tuple[str, ...]
    positive: frozenset[str] = frozenset()  # params that must be >= 1, e.g. a group size

    def check_params(self, params: Sequence[int]) -> tuple[int, ...]:
        if len(params) != len(self.params):
            raise PipelineError(
                f"action {self.name!r} takes {len(self.params)} parameter(s), got {len(params)}")
        for (pname, width), value in zip(self.params, params):
            if value < 0 or value >> width:
                raise PipelineError(
                    f"action {self.name!r}: value {value} does not fit parameter {pname!r} ({width} bits)")
            if value == 0 and pname in self.positive:
                raise PipelineError(f"action {self.name!r}: parameter {pname!r} must be >= 1")
        return tuple(params)


class Table:
    """An EXACT or LPM table. Lookups are pure; a miss yields the default action."""

    def __init__(self, name: str, kind: MatchKind, keys: Sequence[FieldRef],
                 actions: dict[str, ActionDef], default: tuple[ActionDef, tuple[int, ...]]) -> None:
        if kind is MatchKind.LPM and len(keys) != 1:
            raise PipelineError(f"LPM table {name!r} must have exactly one key field")
        if not keys:
            raise PipelineError(f"table {name!r} has no key fields")
        self.name = name
        self.kind = kind
        self.keys = tuple(keys)
        self.actions = actions
        self.default = default
        self._readers = tuple(k.reader() for k in self.keys)
        self.exact: dict[tuple[int, ...], tuple[ActionDef, tuple[int, ...]]] = {}
        self.lpm: dict[int, dict[int, tuple[ActionDef, tuple[int, ...]]]] = {}
        self._lengths: list[int] = []
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        if self.kind is MatchKind.EXACT:
            return len(self.exact)
        return sum(len(v) for v in self.lpm.values())

    def action(self, name: str) -> ActionDef:
        try:
            return self.actions[name]
        except KeyError:
            raise PipelineError(f"action {name!r} is not allowed in table {self.name!r}") from None

    def add_entry(self, key: Sequence[int], action: str, params: Sequence[int],
                  prefix_len: int | None = None) -> None:
        adef = self.action(action)
        entry = (adef, adef.check_params(params))
        if len(key) != len(self.keys):
            raise PipelineError(f"table {self.name!r} expects {len(self.keys)} key field(s), got {len(key)}")
        for ref, value in zip(self.keys, key):
            if value < 0 or value >> ref.width:
                raise PipelineError(f"key {value:#x} does not fit {ref} ({ref.width} bits)")
        if self.kind is MatchKind.EXACT:
            k = tuple(key)
            if k in self.exact:
                raise PipelineError(f"duplicate entry for key {k} in table {self.name!r}")
            self.exact[k] = entry
            return
        width = self.keys[0].width
        plen = width if prefix_len is None else prefix_len
        if not 0 <= plen <= width:
            raise PipelineError(f"prefix length {plen} invalid for {width}-bit key")
        prefix = key[0] >> (width - plen)
        bucket = self.lpm.setdefault(plen, {})
        if prefix in bucket:
            raise PipelineError(f"duplicate LPM entry /{plen} in table {self.name!r}")
        bucket[prefix] = entry
        self._lengths = sorted(self.lpm, reverse=True)

    def set_default(self, action: str, params: Sequence[int]) -> None:
        adef = self.action(action)
        self.default = (adef, adef.check_params(params))

    def match_key(self, key: Sequence[int | None]):
        """Entry for already-extracted key values, or None on a miss."""
        if self.kind is MatchKind.EXACT:
            return self.exact.get(tuple(key))
        value = key[0]
        if value is None:
            return None
        width = self.keys[0].width
        for plen in self._lengths:
            entry = self.lpm[plen].get(value >> (width - plen))
            if entry is not None:
                return entry
        return None

    def lookup(self, stack, meta) -> tuple[ActionDef, tuple[int, ...], bool]:
        readers = self._readers
        if len(readers) == 1:
            value = readers[0](stack, meta)
            if value is None:
                entry = None
            elif self.kind is MatchKind.EXACT:
                entry = self.exact.get((value,))
            else:
                entry = None
                width = self.keys[0].width
                lpm = self.lpm
                for plen in self._lengths:
                    entry = lpm[plen].get(value >> (width - plen))
                    if entry is not None:
                        break
        else:
            key = []
            for read in readers:
                value = read(stack, meta)
                if value is None:
                    break
                key.append(value)
            entry = self.match_key(key) if len(key) == len(readers) else None
        if entry is None:
            self.misses += 1
            return self.default[0], self.default[1], False
        self.hits += 1
        return entry[0], entry[1], True


def lookup(table: Table, stack, meta) -> tuple[ActionDef, tuple[int, ...]]:
    action, params, _ = table.lookup(stack, meta)
    return action, params
