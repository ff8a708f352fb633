"""Port protocols separating the connection state machines from any network.

A state machine only ever talks to three things: a clock that schedules
callbacks, a resolver that answers DNS questions, and a transport that opens
connections.  simnet provides virtual implementations on a simulated clock;
realnet provides implementations backed by actual sockets.  The machines
cannot tell the difference, which is the point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, runtime_checkable

from .timeline import EventTimeline
from .types import Family, RecordType, Transport


class TimerHandle:
    """Cancellable callback registration returned by ClockPort.call_at."""

    __slots__ = ("when", "fn", "args", "cancelled")

    def __init__(self, when: int, fn: Callable, args: tuple) -> None:
        self.when = when
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


@dataclass
class DnsReply:
    """One resolver answer (or failure) for a single question."""

    name: str
    rtype: RecordType
    addresses: tuple[str, ...] = ()
    # Service records decoded to dicts: priority, target, alpn, port, hints, ech.
    records: tuple[dict, ...] = ()
    ttl_s: int = 0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@runtime_checkable
class ClockPort(Protocol):
    timeline: EventTimeline

    def now(self) -> int: ...

    def call_at(self, when_ms: int, fn: Callable, *args: Any) -> TimerHandle: ...

    def call_later(self, delay_ms: int, fn: Callable, *args: Any) -> TimerHandle: ...

    def record(self, kind: str, **data: Any) -> None: ...

    def run_until(self, done: Callable[[], bool]) -> None: ...


@runtime_checkable
class ResolverPort(Protocol):
    def resolve(
        self, name: str, rtype: RecordType, on_reply: Callable[[DnsReply], None]
    ) -> None: ...


@runtime_checkable
class TransportPort(Protocol):
    def connect(self, candidate: Any, on_result: Callable[[bool, str | None], None]) -> Any: ...

    def abort(self, handle: Any) -> None: ...


@dataclass
class Ports:
    """The bundle every driver function receives."""

    clock: ClockPort
    resolver: ResolverPort
    transport: TransportPort
