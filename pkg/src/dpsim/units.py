"""Parsing of human-written quantities into integer simulation units.

Times become integer nanoseconds, rates become bits (or packets) per second.
Decimal arithmetic is used so that "0.1ms" or "2.5Gbps" convert exactly.
"""
from __future__ import annotations

import re
from decimal import Decimal, InvalidOperation

NS_PER_S = 1_000_000_000

_TIME_UNITS = {
    "ns": Decimal(1),
    "us": Decimal(1_000),
    "ms": Decimal(1_000_000),
    "s": Decimal(NS_PER_S),
}

_RATE_UNITS = {
    "bps": Decimal(1),
    "kbps": Decimal(10**3),
    "mbps": Decimal(10**6),
    "gbps": Decimal(10**9),
    "k": Decimal(10**3),
    "m": Decimal(10**6),
    "g": Decimal(10**9),
}

_QUANTITY = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([A-Za-z]*)\s*$")


def _split(text: str) -> tuple[Decimal, str]:
    m = _QUANTITY.match(text)
    if m is None:
        raise ValueError(f"cannot parse quantity {text!r}")
    try:
        return Decimal(m.group(1)), m.group(2)
    except InvalidOperation as exc:  # pragma: no cover - regex already filters
        raise ValueError(f"cannot parse quantity {text!r}") from exc


def parse_time(value: str | int | float) -> int:
    """Convert ``value`` to integer nanoseconds.

    Bare numbers are seconds. Strings may carry one of ns/us/ms/s.
    """
    if isinstance(value, bool):
        raise ValueError("boolean is not a time")
    if isinstance(value, (int, float)):
        number, unit = Decimal(str(value)), "s"
    else:
        number, unit = _split(value)
        unit = unit or "s"
    scale = _TIME_UNITS.get(unit.lower())
    if scale is None:
        raise ValueError(f"unknown time unit {unit!r} in {value!r}")
    ns = number * scale
    if ns < 0:
        raise ValueError(f"negative time {value!r}")
    return int(ns.to_integral_value())


def parse_rate(value: str | int | float) -> int:
    """Convert a link or application rate to integer bits per second."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a rate")
    if isinstance(value, (int, float)):
        number, unit = Decimal(str(value)), "bps"
    else:
        number, unit = _split(value)
        unit = unit or "bps"
    scale = _RATE_UNITS.get(unit.lower())
    if scale is None:
        raise ValueError(f"unknown rate unit {unit!r} in {value!r}")
    bps = number * scale
    if bps <= 0:
        raise ValueError(f"rate must be positive: {value!r}")
    return int(bps.to_integral_value())


def interval_ns(rate_per_s: float | int) -> int:
    """round(1e9 / rate) as an integer number of nanoseconds (at least 1)."""
    if rate_per_s <= 0:
        raise ValueError(f"rate must be positive, got {rate_per_s}")
    ns = int((Decimal(NS_PER_S) / Decimal(str(rate_per_s))).to_integral_value())
    return max(ns, 1)


def serialization_ns(nbytes: int, bandwidth_bps: int) -> int:
    """Time to clock ``nbytes`` onto a link, rounded half-up to whole ns."""
    bits = nbytes * 8
    return (bits * NS_PER_S * 2 + bandwidth_bps) // (2 * bandwidth_bps)


def format_time(ns: int) -> str:
    """Render integer nanoseconds as a compact string that parse_time accepts."""
    for unit, scale in (("s", NS_PER_S), ("ms", 1_000_000), ("us", 1_000)):
        if ns % scale == 0 and ns >= scale:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


def parse_mac(text: str) -> int:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    value = 0
    for part in parts:
        octet = int(part, 16)
        if not 0 <= octet <= 0xFF:
            raise ValueError(f"bad MAC address {text!r}")
        value = (value << 8) | octet
    return value


def format_mac(value: int) -> str:
    return ":".join(f"{(value >> shift) & 0xFF:02x}" for shift in range(40, -8, -8))


def parse_ipv4(text: str) -> int:
    parts = text.split(".")
    if len(parts) != 4:
        raise ValueError(f"bad IPv4 address {text!r}")
    value = 0
    for part in parts:
        if not part.isdigit() or int(part) > 255:
            raise ValueError(f"bad IPv4 address {text!r}")
        value = (value << 8) | int(part)
    return value


def format_ipv4(value: int) -> str:
    return ".".join(str((value >> shift) & 0xFF) for shift in (24, 16, 8, 0))
