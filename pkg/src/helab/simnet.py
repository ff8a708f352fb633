"""Deterministic virtual network on a simulated millisecond clock.

A Scenario describes how the pretend network behaves: how long each DNS
record type takes (or whether it is dropped or fails), how long each connect
takes (or whether it is refused or blackholed), and a per-family extra delay.
run() executes a program against virtual ports and returns the timeline.
Identical scenario plus identical program means byte-identical timeline.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

from .ports import DnsReply, Ports, TimerHandle
from .timeline import EventTimeline
from .types import Family, RecordType, Transport

DEFAULT_HORIZON_MS = 30_000

# connect_delays / dns_delays special behaviors
DROP = "drop"  # query never answered
FAIL = "fail"  # resolver reports failure immediately
REFUSE = "refuse"  # connect fails after 1 ms
BLACKHOLE = "blackhole"  # connect never completes

REFUSE_FAILURE_MS = 1


class HorizonExceeded(RuntimeError):
    """The simulation still had work scheduled past the horizon."""

    def __init__(self, horizon_ms: int, timeline: EventTimeline) -> None:
        super().__init__(f"events pending beyond {horizon_ms} ms horizon")
        self.timeline = timeline


DEFAULT_ANSWERS = {
    RecordType.AAAA: ("2001:db8::1",),
    RecordType.A: ("192.0.2.1",),
}


@dataclass
class Scenario:
    """Network behavior for one simulated run.

    dns_delays maps record types to a delay in ms, DROP, or FAIL; unlisted
    record types answer immediately.  connect_delays maps (address, port) to
    a delay in ms, REFUSE, or BLACKHOLE; unlisted endpoints connect after
    family_delay alone.
    """

    dns_delays: dict[RecordType, int | str] = field(default_factory=dict)
    dns_answers: dict[RecordType, tuple] = field(default_factory=dict)
    connect_delays: dict[tuple[str, int], int | str] = field(default_factory=dict)
    family_delay: dict[Family, int] = field(default_factory=dict)
    seed: int = 0

    def answers_for(self, rtype: RecordType) -> tuple:
        if rtype in self.dns_answers:
            return tuple(self.dns_answers[rtype])
        return DEFAULT_ANSWERS.get(rtype, ())

    def to_dict(self) -> dict:
        return {
            "dns_delays": {rt.value: v for rt, v in self.dns_delays.items()},
            "dns_answers": {rt.value: list(v) for rt, v in self.dns_answers.items()},
            "connect_delays": [
                {"address": a, "port": p, "behavior": v}
                for (a, p), v in self.connect_delays.items()
            ],
            "family_delay": {f.value: d for f, d in self.family_delay.items()},
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "Scenario":
        return cls(
            dns_delays={RecordType(k): v for k, v in raw.get("dns_delays", {}).items()},
            dns_answers={
                RecordType(k): tuple(v) for k, v in raw.get("dns_answers", {}).items()
            },
            connect_delays={
                (e["address"], int(e["port"])): e["behavior"]
                for e in raw.get("connect_delays", [])
            },
            family_delay={Family(k): int(v) for k, v in raw.get("family_delay", {}).items()},
            seed=int(raw.get("seed", 0)),
        )


def effective_connect_delay(scenario: Scenario, address: str, port: int, family: Family):
    """Combine per-endpoint and per-family delay.  REFUSE and BLACKHOLE win
    over any added family delay."""
    base = scenario.connect_delays.get((address, port), 0)
    if base in (REFUSE, BLACKHOLE):
        return base
    return int(base) + scenario.family_delay.get(family, 0)


class VirtualLoop:
    """Heap-driven event loop; ties break by insertion order."""

    def __init__(self, horizon_ms: int = DEFAULT_HORIZON_MS) -> None:
        self._now = 0
        self._seq = 0
        self._heap: list[tuple[int, int, TimerHandle]] = []
        self.horizon_ms = horizon_ms
        self.timeline = EventTimeline()

    def now(self) -> int:
        return self._now

    def call_at(self, when_ms: int, fn: Callable, *args: Any) -> TimerHandle:
        # Causality: nothing schedules into the past.
        when = max(int(when_ms), self._now)
        handle = TimerHandle(when, fn, args)
        self._seq += 1
        heapq.heappush(self._heap, (when, self._seq, handle))
        return handle

    def call_later(self, delay_ms: int, fn: Callable, *args: Any) -> TimerHandle:
        return self.call_at(self._now + int(delay_ms), fn, *args)

    def record(self, kind: str, **data: Any) -> None:
        self.timeline.record(self._now, kind, **data)

    def run_until(self, done: Callable[[], bool]) -> None:
        while not done() and self._heap:
            if self._heap[0][0] > self.horizon_ms:
                return
            when, _, handle = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self._now = when
            handle.fn(*handle.args)

    def run_to_quiescence(self) -> None:
        """Drain everything; raise HorizonExceeded if live work remains past
        the horizon."""
        self.run_until(lambda: False)
        if any(not h.cancelled for _, _, h in self._heap):
            raise HorizonExceeded(self.horizon_ms, self.timeline)


class SimResolver:
    def __init__(self, scenario: Scenario, loop: VirtualLoop) -> None:
        self.scenario = scenario
        self.loop = loop

    def resolve(self, name: str, rtype: RecordType, on_reply: Callable[[DnsReply], None]) -> None:
        self.loop.record("dns.query", name=name, rtype=rtype)
        behavior = self.scenario.dns_delays.get(rtype, 0)
        if behavior == DROP:
            return
        if behavior == FAIL:
            self.loop.call_later(0, self._deliver_failure, name, rtype, on_reply)
            return
        self.loop.call_later(int(behavior), self._deliver, name, rtype, on_reply)

    def _deliver(self, name: str, rtype: RecordType, on_reply) -> None:
        answers = self.scenario.answers_for(rtype)
        if rtype is RecordType.HTTPS:
            reply = DnsReply(name=name, rtype=rtype, records=tuple(answers))
            self.loop.record("dns.response", name=name, rtype=rtype, records=len(answers))
        else:
            reply = DnsReply(name=name, rtype=rtype, addresses=tuple(answers))
            self.loop.record("dns.response", name=name, rtype=rtype, addresses=list(answers))
        on_reply(reply)

    def _deliver_failure(self, name: str, rtype: RecordType, on_reply) -> None:
        self.loop.record("dns.failure", name=name, rtype=rtype, error="refused")
        on_reply(DnsReply(name=name, rtype=rtype, error="refused"))


class _SimConnection:
    __slots__ = ("candidate", "timer", "on_result", "settled")

    def __init__(self, candidate, timer, on_result) -> None:
        self.candidate = candidate
        self.timer = timer
        self.on_result = on_result
        self.settled = False


class SimTransport:
    def __init__(self, scenario: Scenario, loop: VirtualLoop) -> None:
        self.scenario = scenario
        self.loop = loop

    def connect(self, candidate, on_result) -> _SimConnection:
        self.loop.record(
            "connect.launch",
            family=candidate.family,
            address=candidate.address,
            port=candidate.port,
            transport=candidate.transport,
        )
        behavior = effective_connect_delay(
            self.scenario, candidate.address, candidate.port, candidate.family
        )
        conn = _SimConnection(candidate, None, on_result)
        if behavior == REFUSE:
            conn.timer = self.loop.call_later(
                REFUSE_FAILURE_MS, self._fail, conn, "refused"
            )
        elif behavior == BLACKHOLE:
            conn.timer = None  # never completes
        else:
            conn.timer = self.loop.call_later(int(behavior), self._succeed, conn)
        return conn

    def abort(self, conn: _SimConnection) -> None:
        if conn.settled:
            return
        conn.settled = True
        if conn.timer is not None:
            conn.timer.cancel()
        self.loop.record(
            "connect.cancel",
            family=conn.candidate.family,
            address=conn.candidate.address,
            port=conn.candidate.port,
            stage="inflight",
        )

    def _succeed(self, conn: _SimConnection) -> None:
        if conn.settled:
            return
        conn.settled = True
        self.loop.record(
            "connect.success",
            family=conn.candidate.family,
            address=conn.candidate.address,
            port=conn.candidate.port,
        )
        conn.on_result(True, None)

    def _fail(self, conn: _SimConnection, reason: str) -> None:
        if conn.settled:
            return
        conn.settled = True
        self.loop.record(
            "connect.failure",
            family=conn.candidate.family,
            address=conn.candidate.address,
            port=conn.candidate.port,
            reason=reason,
        )
        conn.on_result(False, reason)


def make_ports(scenario: Scenario, horizon_ms: int = DEFAULT_HORIZON_MS) -> Ports:
    loop = VirtualLoop(horizon_ms=horizon_ms)
    return Ports(
        clock=loop,
        resolver=SimResolver(scenario, loop),
        transport=SimTransport(scenario, loop),
    )


def run(
    scenario: Scenario,
    program: Callable[[Ports], Any],
    horizon_ms: int = DEFAULT_HORIZON_MS,
) -> EventTimeline:
    """Run program against a virtual network built from scenario.

    The program may pump the clock itself (ports.clock.run_until); afterwards
    the loop drains to quiescence so late timers still land in the timeline.
    """
    ports = make_ports(scenario, horizon_ms=horizon_ms)
    program(ports)
    ports.clock.run_to_quiescence()
    return ports.clock.timeline
