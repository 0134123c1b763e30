"""Programmable match-action pipelines and their runtime command loader."""
from .commands import Command, CommandError, MutationReport, load_flow_commands, parse_commands
from .hashing import hash_select
from .program import PRIMITIVES, Pipeline, PipelineConfig, Verdict, load_pipeline_file
from .tables import ActionDef, FieldRef, MatchKind, PipelineError, Table, lookup
from .values import parse_prefix, parse_value

__all__ = [
    "PRIMITIVES", "ActionDef", "Command", "CommandError", "FieldRef", "MatchKind",
    "MutationReport", "Pipeline", "PipelineConfig", "PipelineError", "Table", "Verdict",
    "hash_select", "load_flow_commands", "load_pipeline_file", "lookup", "parse_commands",
    "parse_prefix", "parse_value",
]
