"""Literal values as written in pipeline configs and flow-command scripts."""
from __future__ import annotations

from ..units import parse_ipv4, parse_mac


def parse_value(token, constants: dict | None = None) -> int:
    """Parse an integer literal: decimal, 0x/0b, dotted IPv4, MAC, or a named constant."""
    if isinstance(token, bool):
        raise ValueError(f"boolean is not a field value: {token!r}")
    if isinstance(token, int):
        if token < 0:
            raise ValueError(f"negative value {token}")
        return token
    text = str(token).strip()
    if constants and text in constants:
        return constants[text]
    if text.count(":") == 5:
        return parse_mac(text)
    if text.count(".") == 3:
        return parse_ipv4(text)
    try:
        value = int(text, 0)
    except ValueError:
        raise ValueError(f"cannot parse value {text!r}") from None
    if value < 0:
        raise ValueError(f"negative value {text!r}")
    return value


def parse_prefix(token: str, width: int) -> tuple[int, int]:
    """Parse ``value/len`` for an LPM key; a bare value is a full-width prefix."""
    if "/" in token:
        value_text, len_text = token.rsplit("/", 1)
        if not len_text.isdigit():
            raise ValueError(f"bad prefix length in {token!r}")
        plen = int(len_text)
    else:
        value_text, plen = token, width
    value = parse_value(value_text)
    if not 0 <= plen <= width:
        raise ValueError(f"prefix length {plen} outside [0, {width}] in {token!r}")
    if value >> width:
        raise ValueError(f"{token!r} does not fit a {width}-bit key")
    return value, plen
