from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace


class InstanceType(enum.IntEnum):
    NORMAL = 0
    RESUBMIT = 1
    RECIRCULATE = 2
    CLONE = 3


@dataclass(slots=True)
class PacketMeta:
    """Per-switch metadata. Timestamps are integer nanoseconds of virtual time."""

    ingress_port: int = 0
    egress_port: int | None = None
    instance_type: InstanceType = InstanceType.NORMAL
    priority: int = 0
    ingress_global_timestamp: int = 0
    enq_timestamp: int = 0
    deq_timedelta: int = 0
    egress_global_timestamp: int = 0
    passes: int = 0
    user: dict = field(default_factory=dict)


@dataclass(slots=True)
class Packet:
    id: int
    data: bytes
    meta: PacketMeta = field(default_factory=PacketMeta)

    def __post_init__(self) -> None:
        if len(self.data) < 14:
            raise ValueError(f"packet {self.id}: {len(self.data)} bytes is shorter than Ethernet II")

    def with_data(self, data: bytes) -> "Packet":
        return Packet(self.id, data, replace(self.meta, user=dict(self.meta.user)))
