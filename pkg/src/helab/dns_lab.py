"""Authoritative DNS server whose answers can be delayed on request.

Query names under the base zone encode their own treatment:

    d<delay_ms>-<a|aaaa|https|none>-<nonce>.<base_zone>

The middle token names the record type whose answer is held back by
<delay_ms>; every other type answers immediately.  The nonce makes each name
unique so upstream caches never short-circuit a measurement.  The server also
serves explicitly configured zones (for resolver experiments, where each
delay gets its own zone apex and its own name-server names).

Only UDP transport is spoken.  Answer TTLs default to 0.
"""

from __future__ import annotations

import argparse
import json
import re
import secrets
import select
import socket
import struct
import threading
import time
from dataclasses import dataclass, field

from . import dns_wire as dw
from .types import Family

DEFAULT_BASE_ZONE = "he-test.example."
DEFAULT_V4 = ("127.0.0.1",)
DEFAULT_V6 = ("::1",)
DEFAULT_TTL_S = 0

TARGET_TOKENS = ("a", "aaaa", "https", "none")

_ENCODED_RE = re.compile(r"^d(\d{1,7})-(a|aaaa|https|none)-([a-z0-9-]+)$")


class BadEncoding(ValueError):
    pass


class NotAuthoritative(ValueError):
    pass


@dataclass(frozen=True)
class EncodedName:
    delay_ms: int
    target_record: str  # "a" | "aaaa" | "https" | "none"
    nonce: str
    base_zone: str

    def render(self) -> str:
        return f"d{self.delay_ms}-{self.target_record}-{self.nonce}.{self.base_zone}"


def parse_encoded_name(name: str, base_zone: str) -> EncodedName:
    """Parse a delay-encoded name.  Raises NotAuthoritative when the name is
    not under base_zone, BadEncoding when the first label is malformed."""
    name = name.lower().rstrip(".") + "."
    base = base_zone.lower().rstrip(".") + "."
    if not name.endswith("." + base) and name != base:
        raise NotAuthoritative(name)
    head = name[: -(len(base) + 1)]
    if not head or "." in head:
        raise BadEncoding(f"expected a single encoded label, got {head!r}")
    m = _ENCODED_RE.match(head)
    if not m:
        raise BadEncoding(f"cannot decode {head!r}")
    return EncodedName(
        delay_ms=int(m.group(1)),
        target_record=m.group(2),
        nonce=m.group(3),
        base_zone=base,
    )


def fresh_nonce(n: int = 6) -> str:
    return secrets.token_hex(n // 2 + 1)[:n]


# -- zones ---------------------------------------------------------------------


@dataclass
class ZoneSpec:
    """A tiny explicit zone: apex, name servers, and literal records."""

    apex: str
    ns_names: tuple[str, ...]
    a_records: dict[str, tuple[str, ...]] = field(default_factory=dict)
    aaaa_records: dict[str, tuple[str, ...]] = field(default_factory=dict)
    https_records: dict[str, tuple[dict, ...]] = field(default_factory=dict)
    serial: int = 1
    delay_ms: int = 0  # answers for in-zone content names are held this long

    def __post_init__(self) -> None:
        self.apex = self.apex.lower().rstrip(".") + "."
        self.ns_names = tuple(n.lower().rstrip(".") + "." for n in self.ns_names)

    def to_dict(self) -> dict:
        return {
            "apex": self.apex,
            "ns_names": list(self.ns_names),
            "a_records": {k: list(v) for k, v in self.a_records.items()},
            "aaaa_records": {k: list(v) for k, v in self.aaaa_records.items()},
            "https_records": {k: list(v) for k, v in self.https_records.items()},
            "serial": self.serial,
            "delay_ms": self.delay_ms,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ZoneSpec":
        return cls(
            apex=raw["apex"],
            ns_names=tuple(raw["ns_names"]),
            a_records={k: tuple(v) for k, v in raw.get("a_records", {}).items()},
            aaaa_records={k: tuple(v) for k, v in raw.get("aaaa_records", {}).items()},
            https_records={k: tuple(v) for k, v in raw.get("https_records", {}).items()},
            serial=int(raw.get("serial", 1)),
            delay_ms=int(raw.get("delay_ms", 0)),
        )


_zone_counter = 0


def synthesize_resolver_zones(
    delays_ms: list[int],
    base_apex: str = "rr-lab.example.",
    server_v4: tuple[str, ...] = DEFAULT_V4,
    server_v6: tuple[str, ...] = DEFAULT_V6,
    ns_per_zone: int = 2,
    glue: bool = True,
) -> list[ZoneSpec]:
    """One zone per delay value, each with globally unique apex and NS names.

    Unique NS names stop a recursive resolver from reusing a cached name
    server address across zones, which would hide its lookup behavior.
    """
    global _zone_counter
    base = base_apex.lower().rstrip(".") + "."
    zones = []
    for delay in delays_ms:
        _zone_counter += 1
        token = f"{_zone_counter:03d}-{fresh_nonce(4)}"
        apex = f"d{delay}-{token}.{base}"
        ns_names = tuple(f"ns{i + 1}-{token}.{apex}" for i in range(ns_per_zone))
        zone = ZoneSpec(apex=apex, ns_names=ns_names, delay_ms=delay)
        zone.a_records[apex] = server_v4
        zone.aaaa_records[apex] = server_v6
        if glue:
            for ns in zone.ns_names:
                zone.a_records[ns] = server_v4
                zone.aaaa_records[ns] = server_v6
        zones.append(zone)
    return zones


# -- serving -------------------------------------------------------------------


@dataclass
class DnsLabConfig:
    base_zone: str = DEFAULT_BASE_ZONE
    v4_addresses: tuple[str, ...] = DEFAULT_V4
    v6_addresses: tuple[str, ...] = DEFAULT_V6
    answer_ttl_s: int = DEFAULT_TTL_S
    https_params: dict | None = None  # served for https-targeted encoded names
    zones: tuple[ZoneSpec, ...] = ()

    def __post_init__(self) -> None:
        self.base_zone = self.base_zone.lower().rstrip(".") + "."


@dataclass
class TimedResponse:
    delay_ms: int
    wire: bytes
    log: dict


def _soa_rr(config: DnsLabConfig, zone: str) -> dw.ResourceRecord:
    return dw.ResourceRecord(
        name=zone,
        rtype=dw.TYPE_SOA,
        ttl=config.answer_ttl_s,
        rdata=dw.pack_soa(f"ns1.{zone}", f"lab.{zone}", serial=1),
    )


def _zone_for(config: DnsLabConfig, name: str) -> ZoneSpec | None:
    """Longest-suffix match among explicit zones."""
    best = None
    for zone in config.zones:
        if name == zone.apex or name.endswith("." + zone.apex):
            if best is None or len(zone.apex) > len(best.apex):
                best = zone
    return best


def _answer_from_zone(
    zone: ZoneSpec, name: str, qtype: int, ttl: int
) -> tuple[list[dw.ResourceRecord], bool]:
    """Returns (answers, name_exists)."""
    exists = (
        name in zone.a_records
        or name in zone.aaaa_records
        or name in zone.https_records
        or name == zone.apex
        or name in zone.ns_names
    )
    out: list[dw.ResourceRecord] = []
    if qtype == dw.TYPE_A:
        for addr in zone.a_records.get(name, ()):
            out.append(dw.ResourceRecord(name, dw.TYPE_A, ttl, dw.pack_a(addr)))
    elif qtype == dw.TYPE_AAAA:
        for addr in zone.aaaa_records.get(name, ()):
            out.append(dw.ResourceRecord(name, dw.TYPE_AAAA, ttl, dw.pack_aaaa(addr)))
    elif qtype == dw.TYPE_HTTPS:
        for rec in zone.https_records.get(name, ()):
            rdata = dw.pack_https(rec.get("priority", 1), rec.get("target", "."), rec)
            out.append(dw.ResourceRecord(name, dw.TYPE_HTTPS, ttl, rdata))
    elif qtype == dw.TYPE_NS and name == zone.apex:
        for ns in zone.ns_names:
            out.append(dw.ResourceRecord(name, dw.TYPE_NS, ttl, dw.pack_ns(ns)))
    elif qtype == dw.TYPE_SOA and name == zone.apex:
        out.append(
            dw.ResourceRecord(
                name, dw.TYPE_SOA, ttl, dw.pack_soa(zone.ns_names[0], f"lab.{zone.apex}", zone.serial)
            )
        )
    return out, exists


def serve(query_wire: bytes, config: DnsLabConfig) -> TimedResponse:
    """Compute the reply and how long to hold it.  Never raises on bad input;
    malformed packets that still have a parsable header get FORMERR."""
    try:
        msg = dw.parse_message(query_wire)
    except dw.WireError:
        # Best effort: echo the id if we can see one.
        if len(query_wire) >= 2:
            txid = int.from_bytes(query_wire[:2], "big")
            hdr = struct.pack("!HHHHHH", txid, 0x8000 | dw.RCODE_FORMERR, 0, 0, 0, 0)
            return TimedResponse(0, hdr, {"error": "unparsable"})
        return TimedResponse(0, b"", {"error": "unparsable"})

    def reply(rcode=dw.RCODE_NOERROR, aa=True, answers=None, authorities=None):
        return dw.build_reply(msg, rcode=rcode, aa=aa, answers=answers, authorities=authorities)

    if len(msg.questions) != 1:
        return TimedResponse(0, reply(rcode=dw.RCODE_FORMERR), {"error": "qdcount"})
    q = msg.questions[0]
    qname = q.name.lower()
    ttl = config.answer_ttl_s
    log = {
        "qname": qname,
        "qtype": dw.TYPE_NAMES.get(q.qtype, str(q.qtype)),
        "txid": msg.txid,
    }

    zone = _zone_for(config, qname)
    if zone is not None:
        answers, exists = _answer_from_zone(zone, qname, q.qtype, ttl)
        if not exists:
            return TimedResponse(
                0, reply(rcode=dw.RCODE_NXDOMAIN, authorities=[_soa_rr(config, zone.apex)]), log
            )
        delay = zone.delay_ms if qname not in zone.ns_names else 0
        if not answers:
            return TimedResponse(
                delay, reply(authorities=[_soa_rr(config, zone.apex)]), log
            )
        return TimedResponse(delay, reply(answers=answers), log)

    # Encoded-name service under the base zone.
    base = config.base_zone
    if qname == base or qname == f"ns1.{base}":
        # Minimal infrastructure records so stub setups can delegate to us.
        if qname == base and q.qtype == dw.TYPE_NS:
            return TimedResponse(
                0, reply(answers=[dw.ResourceRecord(base, dw.TYPE_NS, ttl, dw.pack_ns(f"ns1.{base}"))]), log
            )
        if qname == base and q.qtype == dw.TYPE_SOA:
            return TimedResponse(0, reply(answers=[_soa_rr(config, base)]), log)
        answers = []
        if q.qtype == dw.TYPE_A:
            answers = [
                dw.ResourceRecord(qname, dw.TYPE_A, ttl, dw.pack_a(a))
                for a in config.v4_addresses
            ]
        elif q.qtype == dw.TYPE_AAAA:
            answers = [
                dw.ResourceRecord(qname, dw.TYPE_AAAA, ttl, dw.pack_aaaa(a))
                for a in config.v6_addresses
            ]
        if answers:
            return TimedResponse(0, reply(answers=answers), log)
        return TimedResponse(0, reply(authorities=[_soa_rr(config, base)]), log)

    try:
        enc = parse_encoded_name(qname, base)
    except NotAuthoritative:
        log["error"] = "not_authoritative"
        return TimedResponse(0, reply(rcode=dw.RCODE_REFUSED, aa=False), log)
    except BadEncoding:
        log["error"] = "bad_encoding"
        return TimedResponse(
            0, reply(rcode=dw.RCODE_NXDOMAIN, authorities=[_soa_rr(config, base)]), log
        )

    delay = 0
    answers = []
    if q.qtype == dw.TYPE_A:
        if enc.target_record == "a":
            delay = enc.delay_ms
        answers = [
            dw.ResourceRecord(qname, dw.TYPE_A, ttl, dw.pack_a(a))
            for a in config.v4_addresses
        ]
    elif q.qtype == dw.TYPE_AAAA:
        if enc.target_record == "aaaa":
            delay = enc.delay_ms
        answers = [
            dw.ResourceRecord(qname, dw.TYPE_AAAA, ttl, dw.pack_aaaa(a))
            for a in config.v6_addresses
        ]
    elif q.qtype == dw.TYPE_HTTPS and config.https_params is not None:
        if enc.target_record == "https":
            delay = enc.delay_ms
        rdata = dw.pack_https(1, ".", config.https_params)
        answers = [dw.ResourceRecord(qname, dw.TYPE_HTTPS, ttl, rdata)]

    log["delay_ms"] = delay
    if not answers:
        # Supported name, unsupported type: empty NOERROR.
        return TimedResponse(delay, reply(authorities=[_soa_rr(config, base)]), log)
    return TimedResponse(delay, reply(answers=answers), log)


# -- UDP frontend ----------------------------------------------------------------


class QueryLog:
    """Thread-safe event log; optionally mirrored to a JSONL file."""

    def __init__(self, path: str | None = None) -> None:
        self._lock = threading.Lock()
        self._events: list[dict] = []
        self._path = path

    def append(self, event: dict) -> None:
        with self._lock:
            self._events.append(event)
            if self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, sort_keys=True) + "\n")

    def snapshot(self) -> list[dict]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)


class Wallclock:
    """Millisecond monotonic clock with a shareable epoch."""

    def __init__(self, epoch_ns: int | None = None) -> None:
        self.epoch_ns = epoch_ns if epoch_ns is not None else time.monotonic_ns()

    def now(self) -> int:
        return (time.monotonic_ns() - self.epoch_ns) // 1_000_000


class UdpDnsServer:
    """Serves DnsLabConfig over UDP sockets, one thread per socket, with
    delayed sends handled by timers."""

    def __init__(
        self,
        config: DnsLabConfig,
        listen: tuple[tuple[str, int], ...] = (("127.0.0.1", 0),),
        clock: Wallclock | None = None,
        log_path: str | None = None,
    ) -> None:
        self.config = config
        self.clock = clock or Wallclock()
        self.query_log = QueryLog(log_path)
        self._socks: list[socket.socket] = []
        self._threads: list[threading.Thread] = []
        self._timers: list[threading.Timer] = []
        self._running = False
        self.addresses: list[tuple[str, int]] = []
        for host, port in listen:
            fam = socket.AF_INET6 if ":" in host else socket.AF_INET
            sock = socket.socket(fam, socket.SOCK_DGRAM)
            sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            sock.bind((host, port))
            self._socks.append(sock)
            self.addresses.append(sock.getsockname()[:2])

    def start(self) -> None:
        self._running = True
        for sock in self._socks:
            t = threading.Thread(target=self._serve_loop, args=(sock,), daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        self._running = False
        for timer in self._timers:
            timer.cancel()
        for sock in self._socks:
            sock.close()
        for t in self._threads:
            t.join(timeout=2)

    def _serve_loop(self, sock: socket.socket) -> None:
        while self._running:
            try:
                ready, _, _ = select.select([sock], [], [], 0.2)
            except (OSError, ValueError):
                return
            if not ready:
                continue
            try:
                wire, peer = sock.recvfrom(4096)
            except OSError:
                return
            received_ms = self.clock.now()
            timed = serve(wire, self.config)
            entry = dict(timed.log)
            entry.update(
                {
                    "event": "query",
                    "ts_ms": received_ms,
                    "client": peer[0],
                    "family": Family.IPV6.value if ":" in peer[0] else Family.IPV4.value,
                }
            )
            self.query_log.append(entry)
            if not timed.wire:
                continue
            if timed.delay_ms <= 0:
                self._send(sock, timed, peer, entry)
            else:
                # Delay counts from receipt; serve() cost is inside the budget.
                timer = threading.Timer(
                    timed.delay_ms / 1000.0, self._send, args=(sock, timed, peer, entry)
                )
                timer.daemon = True
                self._timers.append(timer)
                timer.start()

    def _send(self, sock, timed: TimedResponse, peer, query_entry: dict) -> None:
        try:
            sock.sendto(timed.wire, peer)
        except OSError:
            return
        response_entry = {
            "event": "response",
            "ts_ms": self.clock.now(),
            "qname": query_entry.get("qname"),
            "qtype": query_entry.get("qtype"),
            "client": query_entry.get("client"),
            "family": query_entry.get("family"),
            "delay_ms": timed.delay_ms,
        }
        self.query_log.append(response_entry)


def load_zone_files(paths: list[str]) -> list[ZoneSpec]:
    zones = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        items = raw if isinstance(raw, list) else [raw]
        zones.extend(ZoneSpec.from_dict(item) for item in items)
    return zones


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dns-lab", description="Authoritative DNS server with delay-encoded names"
    )
    parser.add_argument(
        "--listen",
        action="append",
        default=None,
        metavar="HOST:PORT",
        help="listen address, repeatable (default 127.0.0.1:5533 and [::1]:5533)",
    )
    parser.add_argument("--base-zone", default=DEFAULT_BASE_ZONE)
    parser.add_argument("--v4", action="append", default=None, help="default A answer, repeatable")
    parser.add_argument("--v6", action="append", default=None, help="default AAAA answer, repeatable")
    parser.add_argument("--ttl", type=int, default=DEFAULT_TTL_S)
    parser.add_argument("--zones", action="append", default=[], help="zone JSON file, repeatable")
    parser.add_argument("--log", default=None, help="append query log JSONL here")
    args = parser.parse_args(argv)

    def split_hostport(s: str) -> tuple[str, int]:
        host, _, port = s.rpartition(":")
        return host.strip("[]"), int(port)

    listen = tuple(
        split_hostport(s) for s in (args.listen or ["127.0.0.1:5533", "[::1]:5533"])
    )
    config = DnsLabConfig(
        base_zone=args.base_zone,
        v4_addresses=tuple(args.v4 or DEFAULT_V4),
        v6_addresses=tuple(args.v6 or DEFAULT_V6),
        answer_ttl_s=args.ttl,
        zones=tuple(load_zone_files(args.zones)),
    )
    server = UdpDnsServer(config, listen=listen, log_path=args.log)
    server.start()
    print(f"dns-lab serving {config.base_zone} on " + ", ".join(f"{h}:{p}" for h, p in server.addresses))
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
