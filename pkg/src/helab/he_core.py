"""Happy Eyeballs connection racing, v1 through v3, as one configurable machine.

The three generations differ in a handful of knobs and transitions:

* v1 resolves both families but only falls back once: a single IPv6 attempt,
  then a single IPv4 attempt one connection-attempt delay later.  It has no
  resolution delay; an A-first arrival waits for the AAAA answer (or its
  failure) before anything is attempted.
* v2 adds the resolution delay (start IPv4-only once AAAA is late by RD),
  candidate interlacing across families, and the first-address-family count.
* v3 keeps the v2 timing model and adds service records: candidates gain
  protocol hints (QUIC via alpn h3, ECH presence) that bias their ordering.

All times are integer milliseconds on the driving clock.  The pure functions
(`on_dns_event`, `on_rd_expiry`, `sort_and_interlace`, `build_schedule`) hold
the decision logic and are tested directly; `drive` wires them to the ports
and runs a full connection establishment.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .ports import DnsReply, Ports
from .timeline import EventTimeline
from .types import ADDRESS_RECORDS, Family, RecordType, Transport, family_of_address

DEFAULT_CAD_MS = 250
CAD_MIN_MS = 10
CAD_RECOMMENDED_MS = 100
CAD_MAX_MS = 2000
V1_CAD_MIN_MS = 150
V1_CAD_MAX_MS = 250
DEFAULT_RESOLUTION_DELAY_MS = 50
DEFAULT_FIRST_ADDRESS_FAMILY_COUNT = 1
DEFAULT_CACHE_TTL_S = 600


class Version(enum.Enum):
    V1 = 1
    V2 = 2
    V3 = 3


class Interleave(str, enum.Enum):
    NONE = "none"
    ALTERNATE = "alternate"


class ProtocolPreference(str, enum.Enum):
    ECH = "ECH"
    QUIC = "QUIC"
    TCP = "TCP"


class ConfigError(ValueError):
    pass


class EmptyCandidateSet(ValueError):
    pass


class DuplicateResponse(RuntimeError):
    """The same record type was reported twice for one resolution."""


class ResolutionFailed(RuntimeError):
    """Both address families failed to resolve."""


@dataclass(frozen=True)
class HEConfig:
    version: Version = Version.V2
    connection_attempt_delay_ms: int = DEFAULT_CAD_MS
    cad_min_ms: int = CAD_MIN_MS
    cad_recommended_ms: int = CAD_RECOMMENDED_MS
    cad_max_ms: int = CAD_MAX_MS
    resolution_delay_ms: int = DEFAULT_RESOLUTION_DELAY_MS
    first_address_family_count: int = DEFAULT_FIRST_ADDRESS_FAMILY_COUNT
    interleave: Interleave = Interleave.ALTERNATE
    preferred_family: Family = Family.IPV6
    protocol_preference: tuple[ProtocolPreference, ...] = (
        ProtocolPreference.ECH,
        ProtocolPreference.QUIC,
        ProtocolPreference.TCP,
    )
    result_cache_ttl_s: int = DEFAULT_CACHE_TTL_S

    def __post_init__(self) -> None:
        if self.cad_min_ms <= 0 or self.cad_max_ms < self.cad_min_ms:
            raise ConfigError("need 0 < cad_min_ms <= cad_max_ms")
        if self.connection_attempt_delay_ms <= 0:
            raise ConfigError("connection_attempt_delay_ms must be positive")
        if self.resolution_delay_ms <= 0:
            raise ConfigError("resolution_delay_ms must be positive")
        if self.first_address_family_count < 1:
            raise ConfigError("first_address_family_count must be >= 1")
        if self.result_cache_ttl_s < 0:
            raise ConfigError("result_cache_ttl_s must be >= 0")
        if len(set(self.protocol_preference)) != len(self.protocol_preference):
            raise ConfigError("protocol_preference entries must be distinct")

    @property
    def effective_cad_ms(self) -> int:
        """Configured delay clamped into the version's allowed range: v1 keeps
        its original fixed-delay band, later versions use the dynamic bounds."""
        if self.version is Version.V1:
            return max(V1_CAD_MIN_MS, min(self.connection_attempt_delay_ms, V1_CAD_MAX_MS))
        return max(self.cad_min_ms, min(self.connection_attempt_delay_ms, self.cad_max_ms))


@dataclass(frozen=True)
class EndpointCandidate:
    family: Family
    address: str
    port: int
    transport: Transport = Transport.TCP
    ech_available: bool = False
    source_record: RecordType = RecordType.A

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError(f"port out of range: {self.port}")
        if family_of_address(self.address) is not self.family:
            raise ValueError(f"{self.address} is not an {self.family.value} literal")
        if self.source_record is RecordType.A and self.family is not Family.IPV4:
            raise ValueError("A records carry IPv4 addresses")
        if self.source_record is RecordType.AAAA and self.family is not Family.IPV6:
            raise ValueError("AAAA records carry IPv6 addresses")

    def key(self) -> tuple:
        # Identity for dedup; the source record is intentionally excluded.
        return (self.family, self.address, self.port, self.transport)


@dataclass
class ResolutionState:
    """What one in-flight resolution has seen so far."""

    a_response: tuple[int, tuple[str, ...]] | None = None
    aaaa_response: tuple[int, tuple[str, ...]] | None = None
    svcb_response: tuple[int, tuple[dict, ...]] | None = None
    a_failed: bool = False
    aaaa_failed: bool = False
    svcb_failed: bool = False
    rd_deadline: int | None = None
    last_event_ms: int = 0

    def settled(self, rtype: RecordType) -> bool:
        if rtype is RecordType.A:
            return self.a_response is not None or self.a_failed
        if rtype is RecordType.AAAA:
            return self.aaaa_response is not None or self.aaaa_failed
        if rtype is RecordType.HTTPS:
            return self.svcb_response is not None or self.svcb_failed
        raise ValueError(rtype)


@dataclass(frozen=True)
class DnsEvent:
    """A resolver answer as seen by the state machine."""

    record_type: RecordType
    timestamp_ms: int
    addresses: tuple[str, ...] = ()
    records: tuple[dict, ...] = ()
    error: str | None = None


# Actions returned by the event handlers.


@dataclass(frozen=True)
class StartConnecting:
    families: tuple[Family, ...]


@dataclass(frozen=True)
class Wait:
    deadline_ms: int


@dataclass(frozen=True)
class Defer:
    reason: str = ""


Action = StartConnecting | Wait | Defer


def on_dns_event(state: ResolutionState, event: DnsEvent, config: HEConfig) -> Action:
    """Advance the resolution state with one resolver answer.

    Returns what the caller should do next.  Raises DuplicateResponse when a
    record type reports twice and ResolutionFailed when both address families
    have failed.  Events must arrive in nondecreasing timestamp order.
    """
    if event.timestamp_ms < state.last_event_ms:
        raise ValueError("events must arrive in nondecreasing timestamp order")
    state.last_event_ms = event.timestamp_ms
    if event.record_type in (RecordType.A, RecordType.AAAA, RecordType.HTTPS):
        if state.settled(event.record_type):
            raise DuplicateResponse(event.record_type.value)
    else:
        raise ValueError(f"unexpected record type {event.record_type}")

    if event.record_type is RecordType.HTTPS:
        if event.error is not None:
            state.svcb_failed = True
        else:
            state.svcb_response = (event.timestamp_ms, event.records)
        # Service records never start the race by themselves; connect timing
        # is keyed on the address records.
        return Defer("service records noted")

    failed = event.error is not None
    if event.record_type is RecordType.AAAA:
        if failed:
            state.aaaa_failed = True
            state.rd_deadline = None
            if state.a_response is not None:
                return StartConnecting((Family.IPV4,))
            if state.a_failed:
                raise ResolutionFailed(event.error or "resolution failed")
            return Defer("waiting for A")
        state.aaaa_response = (event.timestamp_ms, event.addresses)
        state.rd_deadline = None
        families = [Family.IPV6]
        if state.a_response is not None:
            families.append(Family.IPV4)
        return StartConnecting(tuple(families))

    # A record.
    if failed:
        state.a_failed = True
        if state.aaaa_response is not None:
            return Defer("already have AAAA")
        if state.aaaa_failed:
            raise ResolutionFailed(event.error or "resolution failed")
        return Defer("waiting for AAAA")
    state.a_response = (event.timestamp_ms, event.addresses)
    if state.aaaa_response is not None:
        return StartConnecting((Family.IPV6, Family.IPV4))
    if state.aaaa_failed:
        return StartConnecting((Family.IPV4,))
    if config.version is Version.V1:
        # v1 has no resolution delay: hold until AAAA answers or fails.
        return Defer("v1 waits for AAAA")
    state.rd_deadline = event.timestamp_ms + config.resolution_delay_ms
    return Wait(state.rd_deadline)


def on_rd_expiry(state: ResolutionState, now_ms: int, config: HEConfig) -> Action:
    """Decide what to do when the resolution-delay timer fires."""
    if state.aaaa_response is not None or state.aaaa_failed:
        return Defer("AAAA settled before expiry")
    if state.rd_deadline is None or now_ms < state.rd_deadline:
        return Defer("not due")
    if state.a_response is None:
        return Defer("nothing to start")
    return StartConnecting((Family.IPV4,))


def _protocol_rank(candidate: EndpointCandidate, config: HEConfig) -> int:
    if candidate.ech_available:
        token = ProtocolPreference.ECH
    elif candidate.transport is Transport.QUIC:
        token = ProtocolPreference.QUIC
    else:
        token = ProtocolPreference.TCP
    try:
        return config.protocol_preference.index(token)
    except ValueError:
        return len(config.protocol_preference)


def dedupe_candidates(candidates: list[EndpointCandidate]) -> list[EndpointCandidate]:
    """Drop repeated (family, address, port, transport) entries, keeping the
    earliest occurrence."""
    seen: set[tuple] = set()
    out = []
    for cand in candidates:
        k = cand.key()
        if k in seen:
            continue
        seen.add(k)
        out.append(cand)
    return out


def sort_and_interlace(
    candidates: list[EndpointCandidate], config: HEConfig
) -> list[EndpointCandidate]:
    """Order candidates for attempting.

    The preferred family contributes the first first_address_family_count
    entries (or all it has, if fewer); afterwards families alternate while
    both still have candidates, then the remainder is appended.  Ordering is
    stable within a family.  Under v3 each family is first stable-sorted by
    protocol preference.
    """
    cands = dedupe_candidates(candidates)
    if not cands:
        raise EmptyCandidateSet("no candidates to order")

    pref = [c for c in cands if c.family is config.preferred_family]
    other = [c for c in cands if c.family is not config.preferred_family]
    if config.version is Version.V3:
        pref.sort(key=lambda c: _protocol_rank(c, config))
        other.sort(key=lambda c: _protocol_rank(c, config))

    if config.interleave is Interleave.NONE:
        return pref + other

    n = config.first_address_family_count
    out = pref[:n]
    rest = pref[n:]
    # Alternate starting with the non-preferred family.
    take_other = True
    while rest and other:
        if take_other:
            out.append(other.pop(0))
        else:
            out.append(rest.pop(0))
        take_other = not take_other
    out.extend(other or rest)
    return out


def interlace_remaining(
    unlaunched: list[EndpointCandidate],
    config: HEConfig,
    launched_preferred: int,
    last_family: Family | None,
) -> list[EndpointCandidate]:
    """Order candidates that arrived after attempts already started.

    Continues the pattern sort_and_interlace would have produced: any unmet
    part of the preferred-family prefix quota goes first, then alternation
    resumes against the family of the most recent attempt.
    """
    cands = dedupe_candidates(unlaunched)
    pref = [c for c in cands if c.family is config.preferred_family]
    other = [c for c in cands if c.family is not config.preferred_family]
    if config.version is Version.V3:
        pref.sort(key=lambda c: _protocol_rank(c, config))
        other.sort(key=lambda c: _protocol_rank(c, config))

    if config.interleave is Interleave.NONE:
        return pref + other

    quota = max(0, config.first_address_family_count - launched_preferred)
    out = pref[:quota]
    rest = pref[quota:]
    last = config.preferred_family if out else last_family
    while rest and other:
        if last is config.preferred_family:
            out.append(other.pop(0))
        else:
            out.append(rest.pop(0))
        last = out[-1].family
    out.extend(other or rest)
    return out


@dataclass(frozen=True)
class AttemptSchedule:
    ordered: tuple[EndpointCandidate, ...]
    launch_at_ms: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.ordered) != len(self.launch_at_ms):
            raise ValueError("schedule lengths differ")


def build_schedule(
    ordered: list[EndpointCandidate], start_ms: int, config: HEConfig
) -> AttemptSchedule:
    """Assign launch times: start, start+CAD, start+2*CAD, ...

    Under v1 the list is truncated to a single fallback pair: the first
    candidate of the preferred family, then the first of the other.
    """
    if not ordered:
        raise EmptyCandidateSet("nothing to schedule")
    if config.version is Version.V1:
        picked = []
        for fam in (config.preferred_family, config.preferred_family.other):
            for cand in ordered:
                if cand.family is fam:
                    picked.append(cand)
                    break
        ordered = picked
    cad = config.effective_cad_ms
    times = [start_ms + i * cad for i in range(len(ordered))]
    return AttemptSchedule(tuple(ordered), tuple(times))


@dataclass(frozen=True)
class CacheEntry:
    name: str
    winner: EndpointCandidate
    expiry_ms: int


class ResultCache:
    """Remembers which endpoint won for a name, for a limited time."""

    def __init__(self) -> None:
        self._entries: dict[str, CacheEntry] = {}

    def store(self, entry: CacheEntry) -> None:
        self._entries[entry.name] = entry

    def lookup(self, name: str, now_ms: int) -> EndpointCandidate | None:
        """Return the cached winner, or None.  An entry at exactly its expiry
        time is already stale."""
        entry = self._entries.get(name)
        if entry is None:
            return None
        if now_ms >= entry.expiry_ms:
            del self._entries[name]
            return None
        return entry.winner

    def __len__(self) -> int:
        return len(self._entries)


@dataclass
class HEOutcome:
    winner: EndpointCandidate | None
    established_at_ms: int | None
    timeline: EventTimeline
    cache_entry: CacheEntry | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.winner is not None


def candidates_from_reply(reply: DnsReply, port: int) -> list[EndpointCandidate]:
    """Turn a resolver answer into endpoint candidates."""
    out: list[EndpointCandidate] = []
    if reply.rtype in ADDRESS_RECORDS and reply.ok:
        fam = Family.IPV6 if reply.rtype is RecordType.AAAA else Family.IPV4
        for addr in reply.addresses:
            out.append(
                EndpointCandidate(
                    family=fam, address=addr, port=port, source_record=reply.rtype
                )
            )
    elif reply.rtype is RecordType.HTTPS and reply.ok:
        for rec in reply.records:
            alpn = rec.get("alpn", ())
            quic = "h3" in alpn
            ech = bool(rec.get("ech"))
            rec_port = int(rec.get("port") or port)
            transport = Transport.QUIC if quic else Transport.TCP
            for addr in rec.get("ipv6hint", ()):
                out.append(
                    EndpointCandidate(
                        family=Family.IPV6,
                        address=addr,
                        port=rec_port,
                        transport=transport,
                        ech_available=ech,
                        source_record=RecordType.HTTPS,
                    )
                )
            for addr in rec.get("ipv4hint", ()):
                out.append(
                    EndpointCandidate(
                        family=Family.IPV4,
                        address=addr,
                        port=rec_port,
                        transport=transport,
                        ech_available=ech,
                        source_record=RecordType.HTTPS,
                    )
                )
    return out


class _Attempt:
    __slots__ = ("candidate", "handle", "launched_at", "failed")

    def __init__(self, candidate: EndpointCandidate, handle, launched_at: int) -> None:
        self.candidate = candidate
        self.handle = handle
        self.launched_at = launched_at
        self.failed = False


class Engine:
    """Runs one connection establishment over the ports.

    Use drive() unless you need to poke at the machine mid-flight.
    """

    def __init__(
        self,
        ports: Ports,
        name: str,
        port: int,
        config: HEConfig,
        cache: ResultCache | None = None,
    ) -> None:
        self.ports = ports
        self.name = name
        self.port = port
        self.config = config
        self.cache = cache
        self.state = ResolutionState()
        self.candidates: list[EndpointCandidate] = []
        self.attempts: list[_Attempt] = []
        self.connecting = False
        self.done = False
        self.winner: EndpointCandidate | None = None
        self.established_at: int | None = None
        self.cache_entry: CacheEntry | None = None
        self.error: str | None = None
        self._launch_timers: list[tuple[EndpointCandidate, object]] = []
        self._rd_timer = None
        self._giveup_timer = None
        self._launched_keys: set[tuple] = set()

    # -- lifecycle ---------------------------------------------------------

    def start(self, max_wait_ms: int | None = None) -> None:
        clock = self.ports.clock
        if self.cache is not None:
            hit = self.cache.lookup(self.name, clock.now())
            if hit is not None:
                clock.record("cache.hit", name=self.name, address=hit.address)
                self._finish_success(hit, clock.now(), cached=True)
                return
        rtypes = [RecordType.AAAA, RecordType.A]
        if self.config.version is Version.V3:
            rtypes.append(RecordType.HTTPS)
        for rtype in rtypes:
            self.ports.resolver.resolve(self.name, rtype, self._on_reply)
        if max_wait_ms is not None:
            self._giveup_timer = clock.call_later(max_wait_ms, self._give_up)

    def outcome(self) -> HEOutcome:
        if not self.done:
            # Loop went quiescent with nothing left to wait for.
            self._conclude_failure(
                "all_attempts_failed" if self.attempts else "resolution_failed"
            )
        return HEOutcome(
            winner=self.winner,
            established_at_ms=self.established_at,
            timeline=self.ports.clock.timeline,
            cache_entry=self.cache_entry,
            error=self.error,
        )

    # -- resolver events ---------------------------------------------------

    def _on_reply(self, reply: DnsReply) -> None:
        if self.done:
            return
        clock = self.ports.clock
        event = DnsEvent(
            record_type=reply.rtype,
            timestamp_ms=clock.now(),
            addresses=reply.addresses,
            records=reply.records,
            error=reply.error,
        )
        fresh = [
            c
            for c in candidates_from_reply(reply, self.port)
            if c.key() not in {x.key() for x in self.candidates}
        ]
        self.candidates.extend(fresh)
        try:
            action = on_dns_event(self.state, event, self.config)
        except ResolutionFailed as exc:
            self._conclude_failure("resolution_failed", detail=str(exc))
            return
        self._dispatch(action, fresh)

    def _dispatch(self, action: Action, fresh: list[EndpointCandidate]) -> None:
        clock = self.ports.clock
        if isinstance(action, Wait):
            clock.record("rd.wait", deadline_ms=action.deadline_ms)
            self._rd_timer = clock.call_at(action.deadline_ms, self._on_rd_expiry)
        elif isinstance(action, StartConnecting):
            if not self.connecting:
                self._begin_connecting(clock.now())
            elif fresh:
                self._merge_candidates(fresh)
        elif isinstance(action, Defer):
            if self.connecting and fresh:
                self._merge_candidates(fresh)

    def _on_rd_expiry(self) -> None:
        if self.done:
            return
        clock = self.ports.clock
        action = on_rd_expiry(self.state, clock.now(), self.config)
        if isinstance(action, StartConnecting):
            clock.record("rd.expired", deadline_ms=self.state.rd_deadline)
            if not self.connecting:
                self._begin_connecting(clock.now())

    # -- attempt scheduling --------------------------------------------------

    def _begin_connecting(self, t: int) -> None:
        self.connecting = True
        ordered = sort_and_interlace(self.candidates, self.config)
        schedule = build_schedule(ordered, t, self.config)
        for cand, at in zip(schedule.ordered, schedule.launch_at_ms):
            self._plan_launch(cand, at)

    def _plan_launch(self, cand: EndpointCandidate, at: int) -> None:
        timer = self.ports.clock.call_at(at, self._launch, cand, at)
        self._launch_timers.append((cand, timer))

    def _merge_candidates(self, fresh: list[EndpointCandidate]) -> None:
        """Extend the attempt plan with candidates that arrived after start."""
        clock = self.ports.clock
        pending: list[EndpointCandidate] = []
        for cand, timer in self._launch_timers:
            if cand.key() in self._launched_keys:
                continue
            if not timer.cancelled:
                timer.cancel()
                pending.append(cand)
        self._launch_timers.clear()
        new = [c for c in fresh if c.key() not in self._launched_keys]
        launched_pref = sum(
            1
            for a in self.attempts
            if a.candidate.family is self.config.preferred_family
        )
        last_family = self.attempts[-1].candidate.family if self.attempts else None
        ordered = interlace_remaining(
            pending + new, self.config, launched_pref, last_family
        )
        if self.config.version is Version.V1:
            # One attempt per family, total; drop anything beyond that.
            have = {a.candidate.family for a in self.attempts}
            trimmed = []
            for c in ordered:
                if c.family not in have:
                    trimmed.append(c)
                    have.add(c.family)
            ordered = trimmed
        cad = self.config.effective_cad_ms
        now = clock.now()
        # Resume the stagger from the last attempt that actually launched.
        at = max(now, self.attempts[-1].launched_at + cad) if self.attempts else now
        for cand in ordered:
            self._plan_launch(cand, at)
            at += cad

    def _launch(self, cand: EndpointCandidate, planned_at: int) -> None:
        if self.done:
            return
        handle = self.ports.transport.connect(
            cand, lambda ok, reason, c=cand: self._on_connect_result(c, ok, reason)
        )
        self._launched_keys.add(cand.key())
        self.attempts.append(_Attempt(cand, handle, planned_at))

    # -- connect results -----------------------------------------------------

    def _on_connect_result(self, cand: EndpointCandidate, ok: bool, reason: str | None) -> None:
        if self.done:
            return
        if ok:
            self._finish_success(cand, self.ports.clock.now())
            return
        for a in self.attempts:
            if a.candidate.key() == cand.key():
                a.failed = True
        if self._all_settled_and_failed():
            self._conclude_failure("all_attempts_failed")

    def _all_settled_and_failed(self) -> bool:
        if any(not t.cancelled for _, t in self._launch_timers):
            return False
        if any(not a.failed for a in self.attempts):
            return False
        # More candidates may still resolve; hold out while any address
        # record is unsettled.
        if not self.state.settled(RecordType.A) or not self.state.settled(RecordType.AAAA):
            return False
        return bool(self.attempts)

    def _cancel_pending(self, at: int) -> None:
        clock = self.ports.clock
        for cand, timer in self._launch_timers:
            if cand.key() in self._launched_keys:
                continue
            if not timer.cancelled:
                timer.cancel()
                clock.record(
                    "connect.cancel",
                    family=cand.family,
                    address=cand.address,
                    port=cand.port,
                    stage="scheduled",
                )
        self._launch_timers.clear()
        if self._rd_timer is not None:
            self._rd_timer.cancel()
        if self._giveup_timer is not None:
            self._giveup_timer.cancel()

    def _finish_success(self, cand: EndpointCandidate, t: int, cached: bool = False) -> None:
        clock = self.ports.clock
        self.winner = cand
        self.established_at = t
        self.done = True
        self._cancel_pending(t)
        for a in self.attempts:
            if a.candidate.key() != cand.key() and not a.failed:
                self.ports.transport.abort(a.handle)
        if not cached:
            expiry = t + self.config.result_cache_ttl_s * 1000
            self.cache_entry = CacheEntry(name=self.name, winner=cand, expiry_ms=expiry)
            if self.cache is not None:
                self.cache.store(self.cache_entry)
        clock.record(
            "outcome",
            winner_family=cand.family,
            winner_address=cand.address,
            established_at_ms=t,
            cached=cached,
        )

    def _conclude_failure(self, error: str, detail: str | None = None) -> None:
        if self.done:
            return
        clock = self.ports.clock
        self.done = True
        self.error = error
        self._cancel_pending(clock.now())
        for a in self.attempts:
            if not a.failed:
                self.ports.transport.abort(a.handle)
        data = {"error": error}
        if detail:
            data["detail"] = detail
        clock.record("outcome", winner_family=None, **data)

    def _give_up(self) -> None:
        if self.done:
            return
        self._conclude_failure(
            "all_attempts_failed" if self.attempts else "resolution_failed",
            detail="gave up waiting",
        )


def drive(
    ports: Ports,
    name: str,
    port: int,
    config: HEConfig | None = None,
    cache: ResultCache | None = None,
    max_wait_ms: int | None = None,
) -> HEOutcome:
    """Establish one connection to name:port and report what happened.

    Failures come back as an HEOutcome with winner=None and error set, so a
    timeline is always available for analysis.
    """
    config = config or HEConfig()
    engine = Engine(ports, name, port, config, cache=cache)
    engine.start(max_wait_ms=max_wait_ms)
    ports.clock.run_until(lambda: engine.done)
    return engine.outcome()
