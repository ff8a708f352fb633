"""Real-socket implementations of the clock, resolver, and transport ports.

The loop owns the timeline and runs in the driving thread; worker threads
doing blocking socket I/O hand their results back with post(), so events are
recorded and callbacks fire in one thread, just like in simnet.  Timestamps
are integer milliseconds on a monotonic clock whose epoch can be shared with
the lab servers to make client and server logs directly comparable.
"""

from __future__ import annotations

import heapq
import secrets
import socket
import threading
from typing import Any, Callable

from . import dns_wire as dw
from .dns_lab import Wallclock
from .ports import DnsReply, Ports, TimerHandle
from .timeline import EventTimeline
from .types import Family, RecordType

DEFAULT_DNS_TIMEOUT_MS = 5_000
DEFAULT_CONNECT_TIMEOUT_MS = 20_000

QTYPE_OF = {
    RecordType.A: dw.TYPE_A,
    RecordType.AAAA: dw.TYPE_AAAA,
    RecordType.HTTPS: dw.TYPE_HTTPS,
}


class RealLoop:
    """Single-threaded scheduler over wall time."""

    def __init__(self, clock: Wallclock | None = None) -> None:
        self.clock = clock or Wallclock()
        self.timeline = EventTimeline()
        self._cond = threading.Condition()
        self._heap: list[tuple[int, int, TimerHandle]] = []
        self._seq = 0

    def now(self) -> int:
        return self.clock.now()

    def call_at(self, when_ms: int, fn: Callable, *args: Any) -> TimerHandle:
        handle = TimerHandle(int(when_ms), fn, args)
        with self._cond:
            self._seq += 1
            heapq.heappush(self._heap, (handle.when, self._seq, handle))
            self._cond.notify()
        return handle

    def call_later(self, delay_ms: int, fn: Callable, *args: Any) -> TimerHandle:
        return self.call_at(self.now() + int(delay_ms), fn, *args)

    def post(self, fn: Callable, *args: Any) -> None:
        """Thread-safe: run fn on the loop thread as soon as possible."""
        self.call_at(self.now(), fn, *args)

    def record(self, kind: str, **data: Any) -> None:
        self.timeline.record(self.now(), kind, **data)

    def run_until(self, done: Callable[[], bool], idle_slice_ms: int = 50) -> None:
        """Pump timers until done() is true.  Never exits on an empty heap;
        callers bound the wait themselves (drive's max_wait_ms does)."""
        while not done():
            due = None
            with self._cond:
                now = self.now()
                while self._heap and self._heap[0][2].cancelled:
                    heapq.heappop(self._heap)
                if self._heap and self._heap[0][0] <= now:
                    due = heapq.heappop(self._heap)[2]
                else:
                    timeout = idle_slice_ms / 1000.0
                    if self._heap:
                        timeout = min(timeout, (self._heap[0][0] - now) / 1000.0)
                    self._cond.wait(max(timeout, 0.001))
            if due is not None and not due.cancelled:
                due.fn(*due.args)


class UdpResolver:
    """Asks one DNS server over UDP, one worker thread per question."""

    def __init__(
        self,
        loop: RealLoop,
        server: tuple[str, int],
        timeout_ms: int = DEFAULT_DNS_TIMEOUT_MS,
    ) -> None:
        self.loop = loop
        self.server = server
        self.timeout_ms = timeout_ms

    def resolve(self, name: str, rtype: RecordType, on_reply: Callable[[DnsReply], None]) -> None:
        self.loop.record("dns.query", name=name, rtype=rtype)
        t = threading.Thread(
            target=self._worker, args=(name, rtype, on_reply), daemon=True
        )
        t.start()

    def _worker(self, name: str, rtype: RecordType, on_reply) -> None:
        txid = secrets.randbelow(65536)
        query = dw.build_query(name, QTYPE_OF[rtype], txid)
        fam = socket.AF_INET6 if ":" in self.server[0] else socket.AF_INET
        reply: DnsReply
        try:
            with socket.socket(fam, socket.SOCK_DGRAM) as sock:
                sock.settimeout(self.timeout_ms / 1000.0)
                sock.sendto(query, self.server)
                while True:
                    wire, _ = sock.recvfrom(4096)
                    msg = dw.parse_message(wire)
                    if msg.txid == txid:
                        break
            reply = self._decode(name, rtype, msg)
        except socket.timeout:
            reply = DnsReply(name=name, rtype=rtype, error="timeout")
        except (OSError, dw.WireError) as exc:
            reply = DnsReply(name=name, rtype=rtype, error=str(exc))
        self.loop.post(self._deliver, reply, on_reply)

    def _decode(self, name: str, rtype: RecordType, msg: dw.Message) -> DnsReply:
        if msg.rcode != dw.RCODE_NOERROR:
            return DnsReply(name=name, rtype=rtype, error=f"rcode {msg.rcode}")
        addresses: list[str] = []
        records: list[dict] = []
        ttl = 0
        for rr in msg.answers:
            ttl = rr.ttl
            if rr.rtype == dw.TYPE_A and rtype is RecordType.A:
                addresses.append(dw.unpack_a(rr.rdata))
            elif rr.rtype == dw.TYPE_AAAA and rtype is RecordType.AAAA:
                addresses.append(dw.unpack_aaaa(rr.rdata))
            elif rr.rtype == dw.TYPE_HTTPS and rtype is RecordType.HTTPS:
                records.append(dw.parse_https_rdata(rr.rdata))
        if not addresses and not records:
            return DnsReply(name=name, rtype=rtype, error="no answers")
        return DnsReply(
            name=name,
            rtype=rtype,
            addresses=tuple(addresses),
            records=tuple(records),
            ttl_s=ttl,
        )

    def _deliver(self, reply: DnsReply, on_reply) -> None:
        if reply.ok:
            self.loop.record(
                "dns.response",
                name=reply.name,
                rtype=reply.rtype,
                addresses=list(reply.addresses),
            )
        else:
            self.loop.record(
                "dns.failure", name=reply.name, rtype=reply.rtype, error=reply.error
            )
        on_reply(reply)


class _RealConnection:
    __slots__ = ("candidate", "sock", "aborted", "settled")

    def __init__(self, candidate) -> None:
        self.candidate = candidate
        self.sock: socket.socket | None = None
        self.aborted = False
        self.settled = False


class TcpTransport:
    """Opens TCP connections, one worker thread per attempt."""

    def __init__(self, loop: RealLoop, timeout_ms: int = DEFAULT_CONNECT_TIMEOUT_MS) -> None:
        self.loop = loop
        self.timeout_ms = timeout_ms
        self._conns: list[_RealConnection] = []

    def close_all(self) -> None:
        """Release every socket this transport opened, the winner included."""
        for conn in self._conns:
            if conn.sock is not None:
                try:
                    conn.sock.close()
                except OSError:
                    pass

    def connect(self, candidate, on_result: Callable[[bool, str | None], None]):
        self.loop.record(
            "connect.launch",
            family=candidate.family,
            address=candidate.address,
            port=candidate.port,
            transport=candidate.transport,
        )
        conn = _RealConnection(candidate)
        self._conns.append(conn)
        t = threading.Thread(target=self._worker, args=(conn, on_result), daemon=True)
        t.start()
        return conn

    def _worker(self, conn: _RealConnection, on_result) -> None:
        cand = conn.candidate
        fam = socket.AF_INET6 if cand.family is Family.IPV6 else socket.AF_INET
        sock = socket.socket(fam, socket.SOCK_STREAM)
        conn.sock = sock
        sock.settimeout(self.timeout_ms / 1000.0)
        try:
            sock.connect((cand.address, cand.port))
            ok, reason = True, None
        except socket.timeout:
            ok, reason = False, "timeout"
        except OSError as exc:
            ok, reason = False, exc.strerror or str(exc)
        self.loop.post(self._deliver, conn, ok, reason, on_result)

    def _deliver(self, conn: _RealConnection, ok: bool, reason, on_result) -> None:
        if conn.aborted or conn.settled:
            return
        conn.settled = True
        cand = conn.candidate
        if ok:
            self.loop.record(
                "connect.success", family=cand.family, address=cand.address, port=cand.port
            )
        else:
            self.loop.record(
                "connect.failure",
                family=cand.family,
                address=cand.address,
                port=cand.port,
                reason=reason,
            )
            if conn.sock is not None:
                conn.sock.close()
        on_result(ok, reason)

    def abort(self, conn: _RealConnection) -> None:
        if conn.aborted or conn.settled:
            return
        conn.aborted = True
        self.loop.record(
            "connect.cancel",
            family=conn.candidate.family,
            address=conn.candidate.address,
            port=conn.candidate.port,
            stage="inflight",
        )
        if conn.sock is not None:
            try:
                conn.sock.close()
            except OSError:
                pass


def make_ports(
    dns_server: tuple[str, int],
    clock: Wallclock | None = None,
    dns_timeout_ms: int = DEFAULT_DNS_TIMEOUT_MS,
    connect_timeout_ms: int = DEFAULT_CONNECT_TIMEOUT_MS,
) -> Ports:
    loop = RealLoop(clock)
    return Ports(
        clock=loop,
        resolver=UdpResolver(loop, dns_server, timeout_ms=dns_timeout_ms),
        transport=TcpTransport(loop, timeout_ms=connect_timeout_ms),
    )
