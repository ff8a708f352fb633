"""Reference clients to point the probe at.

Profile "he" is the real state machine.  The other two reproduce known field
pathologies: "no-fallback" connects IPv6 only and never touches the A
answers; "wait-for-a" refuses to start until both address records have
settled, even though the AAAA answer already arrived.
"""

from __future__ import annotations

from ..he_core import (
    HEConfig,
    HEOutcome,
    build_schedule,
    candidates_from_reply,
    drive,
    sort_and_interlace,
)
from ..ports import DnsReply, Ports
from ..types import Family, RecordType

PROFILES = ("he", "no-fallback", "wait-for-a")


class _MiniClient:
    """Shared plumbing: resolve both families, launch a fixed candidate list,
    first success wins."""

    def __init__(self, ports: Ports, name: str, port: int, config: HEConfig) -> None:
        self.ports = ports
        self.name = name
        self.port = port
        self.config = config
        self.replies: dict[RecordType, DnsReply] = {}
        self.done = False
        self.winner = None
        self.established_at = None
        self.error: str | None = None
        self._timers: list = []
        self._open: list = []
        self._launched = 0
        self._failed = 0
        self._planned = 0

    def start(self, max_wait_ms: int | None) -> None:
        for rtype in (RecordType.AAAA, RecordType.A):
            self.ports.resolver.resolve(self.name, rtype, self._on_reply)
        if max_wait_ms is not None:
            self._timers.append(self.ports.clock.call_later(max_wait_ms, self._give_up))

    def _on_reply(self, reply: DnsReply) -> None:
        if self.done:
            return
        self.replies[reply.rtype] = reply
        self.on_reply(reply)

    def on_reply(self, reply: DnsReply) -> None:
        raise NotImplementedError

    def launch_staggered(self, candidates) -> None:
        schedule = build_schedule(candidates, self.ports.clock.now(), self.config)
        self._planned += len(schedule.ordered)
        for cand, at in zip(schedule.ordered, schedule.launch_at_ms):
            self._timers.append(self.ports.clock.call_at(at, self._launch, cand))

    def _launch(self, cand) -> None:
        if self.done:
            return
        self._launched += 1
        handle = self.ports.transport.connect(
            cand, lambda ok, reason, c=cand: self._on_result(c, ok, reason)
        )
        self._open.append((cand, handle))

    def _on_result(self, cand, ok: bool, reason) -> None:
        if self.done:
            return
        if ok:
            self.winner = cand
            self.established_at = self.ports.clock.now()
            self._settle(error=None, survivor=cand)
            return
        self._failed += 1
        if self._failed >= self._planned:
            self._settle(error="all_attempts_failed")

    def _give_up(self) -> None:
        if not self.done:
            self._settle(error="timed_out" if self._launched else "resolution_failed")

    def fail_resolution(self, detail: str) -> None:
        self._settle(error="resolution_failed")

    def _settle(self, error: str | None, survivor=None) -> None:
        self.done = True
        self.error = error
        for timer in self._timers:
            timer.cancel()
        for cand, handle in self._open:
            if survivor is None or cand.key() != survivor.key():
                self.ports.transport.abort(handle)
        clock = self.ports.clock
        if error is None:
            clock.record(
                "outcome",
                winner_family=self.winner.family,
                winner_address=self.winner.address,
                established_at_ms=self.established_at,
                cached=False,
            )
        else:
            clock.record("outcome", winner_family=None, error=error)

    def outcome(self) -> HEOutcome:
        if not self.done:
            self._settle(error="all_attempts_failed" if self._launched else "resolution_failed")
        return HEOutcome(
            winner=self.winner,
            established_at_ms=self.established_at,
            timeline=self.ports.clock.timeline,
            error=self.error,
        )


class _NoFallbackClient(_MiniClient):
    """Uses only the AAAA answers; IPv4 is resolved and ignored."""

    def on_reply(self, reply: DnsReply) -> None:
        if reply.rtype is not RecordType.AAAA:
            return
        if not reply.ok or not reply.addresses:
            self.fail_resolution(reply.error or "empty answer")
            return
        cands = candidates_from_reply(reply, self.port)[:1]
        self._planned = len(cands)
        for cand in cands:
            self._launch(cand)


class _WaitForAClient(_MiniClient):
    """Starts connecting only once both A and AAAA have settled."""

    def on_reply(self, reply: DnsReply) -> None:
        if RecordType.AAAA not in self.replies or RecordType.A not in self.replies:
            return
        cands = []
        for rtype in (RecordType.AAAA, RecordType.A):
            r = self.replies[rtype]
            if r.ok:
                cands.extend(candidates_from_reply(r, self.port))
        if not cands:
            self.fail_resolution("both records failed")
            return
        ordered = sort_and_interlace(cands, self.config)
        self.launch_staggered(ordered)


def run_profile(
    ports: Ports,
    name: str,
    port: int,
    profile: str = "he",
    config: HEConfig | None = None,
    max_wait_ms: int | None = None,
) -> HEOutcome:
    config = config or HEConfig()
    if profile == "he":
        return drive(ports, name, port, config, max_wait_ms=max_wait_ms)
    if profile == "no-fallback":
        client: _MiniClient = _NoFallbackClient(ports, name, port, config)
    elif profile == "wait-for-a":
        client = _WaitForAClient(ports, name, port, config)
    else:
        raise ValueError(f"unknown profile {profile!r}")
    client.start(max_wait_ms)
    ports.clock.run_until(lambda: client.done)
    return client.outcome()
