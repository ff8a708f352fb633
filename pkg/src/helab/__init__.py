"""helab: a laboratory for dual-stack connection establishment.

Reference Happy Eyeballs state machines (he_core) run unchanged over a
deterministic virtual network (simnet) or real sockets (realnet).  The lab
servers (dns_lab, labd) expose delay knobs that black-box measurement tools
(probe, resolver_probe) use to recover client and resolver timing behavior.
"""

from .he_core import (
    AttemptSchedule,
    CacheEntry,
    DnsEvent,
    EndpointCandidate,
    HEConfig,
    HEOutcome,
    Interleave,
    ProtocolPreference,
    ResolutionState,
    ResultCache,
    Version,
    build_schedule,
    drive,
    on_dns_event,
    on_rd_expiry,
    sort_and_interlace,
)
from .timeline import Event, EventTimeline
from .types import Family, RecordType, Transport

__all__ = [
    "AttemptSchedule",
    "CacheEntry",
    "DnsEvent",
    "EndpointCandidate",
    "Event",
    "EventTimeline",
    "Family",
    "HEConfig",
    "HEOutcome",
    "Interleave",
    "ProtocolPreference",
    "RecordType",
    "ResolutionState",
    "ResultCache",
    "Transport",
    "Version",
    "build_schedule",
    "drive",
    "on_dns_event",
    "on_rd_expiry",
    "sort_and_interlace",
]

__version__ = "0.1.0"
