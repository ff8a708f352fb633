"""Measurement target daemon: a ladder of dual-stack HTTP endpoints.

Each ladder tier pairs an IPv4 and an IPv6 endpoint under one domain.  The
tier index maps to the AAAA-response delay that dns_lab applies for that
domain, so a client walking the ladder reveals where it stops waiting for
IPv6.  labd itself answers instantly; it reports who connected (GET /echo),
describes the ladder (GET /ladder), and accepts submitted observation grids
(POST /results).  Inference over those grids lives here too.

An application-layer shaping hook can hold IPv6 HTTP responses, but it
cannot delay TCP handshakes; kernel-level shaping is out of scope, and
handshake-delay experiments belong in simnet.
"""

from __future__ import annotations

import argparse
import json
import socket
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import urlparse

from .dns_lab import Wallclock
from .types import Family, family_of_address, unmap_address

DEFAULT_DELAY_LADDER_MS = (
    0, 50, 100, 150, 200, 250, 300, 350, 400, 500,
    600, 800, 1000, 1500, 2000, 2500, 3000, 5000,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DelayTier:
    tier_index: int
    delay_ms: int
    domain: str
    v4_endpoint: tuple[str, int]
    v6_endpoint: tuple[str, int]

    def to_dict(self) -> dict:
        return {
            "tier_index": self.tier_index,
            "delay_ms": self.delay_ms,
            "domain": self.domain,
            "v4_endpoint": list(self.v4_endpoint),
            "v6_endpoint": list(self.v6_endpoint),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "DelayTier":
        return cls(
            tier_index=int(raw["tier_index"]),
            delay_ms=int(raw["delay_ms"]),
            domain=raw["domain"],
            v4_endpoint=(raw["v4_endpoint"][0], int(raw["v4_endpoint"][1])),
            v6_endpoint=(raw["v6_endpoint"][0], int(raw["v6_endpoint"][1])),
        )


def default_ladder(
    base_zone: str = "he-test.example.",
    v4_addr: str = "127.0.0.1",
    v6_addr: str = "::1",
    base_port: int = 8440,
    delays: tuple[int, ...] = DEFAULT_DELAY_LADDER_MS,
    nonce: str = "ladder",
) -> list[DelayTier]:
    """Build the canonical ladder: one tier per delay, strictly increasing,
    every tier on its own port and its own delay-encoded domain."""
    if list(delays) != sorted(set(delays)):
        raise ValueError("ladder delays must be strictly increasing")
    base = base_zone.rstrip(".") + "."
    tiers = []
    for i, delay in enumerate(delays):
        domain = f"d{delay}-aaaa-{nonce}{i:02d}.{base}"
        port = base_port + i if base_port else 0
        tiers.append(
            DelayTier(
                tier_index=i,
                delay_ms=delay,
                domain=domain,
                v4_endpoint=(v4_addr, port),
                v6_endpoint=(v6_addr, port),
            )
        )
    return tiers


# -- inference -------------------------------------------------------------------


@dataclass
class CadIntervalResult:
    """Half-open-from-below interval (lo_ms, hi_ms] bracketing the client's
    connection attempt delay.  lo_ms None means unbounded below, hi_ms None
    unbounded above."""

    lo_ms: int | None
    hi_ms: int | None
    inconsistent: bool

    def format(self) -> str:
        lo = "-inf" if self.lo_ms is None else str(self.lo_ms)
        if self.hi_ms is None:
            return f"({lo}, inf)"
        return f"({lo}, {self.hi_ms}]"


def infer_cad_interval(observations: list[tuple[int, Family]]) -> CadIntervalResult:
    """Bracket the fallback threshold from (delay_ms, winning family) pairs.

    The winner at each delay is the majority family across its observations
    (ties count as IPv4, i.e. fallback seen).  The client switched families
    somewhere after the largest delay IPv6 still won and at or before the
    smallest delay IPv4 won beyond that.
    """
    by_delay: dict[int, list[Family]] = {}
    for delay, fam in observations:
        by_delay.setdefault(int(delay), []).append(fam)
    if len(by_delay) < 2:
        raise ValueError("need observations at two or more delays")
    majority: dict[int, Family] = {}
    inconsistent = False
    for delay, fams in by_delay.items():
        v6 = sum(1 for f in fams if f is Family.IPV6)
        v4 = len(fams) - v6
        if v6 and v4:
            inconsistent = True
        majority[delay] = Family.IPV6 if v6 > v4 else Family.IPV4
    delays = sorted(majority)
    v6_delays = [d for d in delays if majority[d] is Family.IPV6]
    lo = max(v6_delays) if v6_delays else None
    hi = None
    for d in delays:
        if majority[d] is Family.IPV4 and (lo is None or d > lo):
            hi = d
            break
    return CadIntervalResult(lo_ms=lo, hi_ms=hi, inconsistent=inconsistent)


@dataclass
class ConsistencyReport:
    per_tier_violations: dict[int, float]
    inconsistent_repetitions: int
    total_repetitions: int

    @property
    def global_fraction(self) -> float:
        if not self.total_repetitions:
            return 0.0
        return self.inconsistent_repetitions / self.total_repetitions


def consistency_score(
    observations: list[tuple[int, int, Family]]
) -> ConsistencyReport:
    """Measure how cleanly the grid follows the expected monotone pattern
    (IPv6 at small delays, IPv4 past the threshold, one switch).

    observations are (delay_ms, repetition, family) cells.  A repetition is
    inconsistent when it uses IPv4 at some delay and IPv6 at a larger one.  A
    cell violates when it takes part in such an inversion; per-tier fractions
    count violating cells over that tier's repetitions.
    """
    grid: dict[int, dict[int, Family]] = {}
    for delay, rep, fam in observations:
        grid.setdefault(int(rep), {})[int(delay)] = fam
    if not grid:
        raise ValueError("no observations")
    for rep, cells in grid.items():
        if len(cells) < 2:
            raise ValueError(f"repetition {rep} covers fewer than two delays")

    tiers = sorted({d for cells in grid.values() for d in cells})
    violations: dict[int, int] = {d: 0 for d in tiers}
    seen: dict[int, int] = {d: 0 for d in tiers}
    inconsistent_reps = 0
    for rep in sorted(grid):
        cells = grid[rep]
        delays = sorted(cells)
        rep_bad = False
        for i, d in enumerate(delays):
            seen[d] += 1
            fam = cells[d]
            bad = False
            if fam is Family.IPV4:
                bad = any(cells[d2] is Family.IPV6 for d2 in delays[i + 1 :])
            else:
                bad = any(cells[d2] is Family.IPV4 for d2 in delays[:i])
            if bad:
                violations[d] += 1
                rep_bad = True
        if rep_bad:
            inconsistent_reps += 1
    per_tier = {
        d: (violations[d] / seen[d] if seen[d] else 0.0) for d in tiers
    }
    return ConsistencyReport(
        per_tier_violations=per_tier,
        inconsistent_repetitions=inconsistent_reps,
        total_repetitions=len(grid),
    )


# -- result storage ----------------------------------------------------------------


class OptInRequired(PermissionError):
    pass


@dataclass
class SessionEntry:
    tier_index: int
    repetition: int
    family: str
    elapsed_ms: int | None = None


@dataclass
class SessionRecord:
    session_id: str
    opt_in: bool
    user_agent: str = ""
    platform: str = ""
    entries: list[SessionEntry] = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "SessionRecord":
        entries = [
            SessionEntry(
                tier_index=int(e["tier_index"]),
                repetition=int(e["repetition"]),
                family=str(e["family"]),
                elapsed_ms=None if e.get("elapsed_ms") is None else int(e["elapsed_ms"]),
            )
            for e in raw.get("entries", [])
        ]
        return cls(
            session_id=str(raw["session_id"]),
            opt_in=bool(raw.get("opt_in", False)),
            user_agent=str(raw.get("user_agent", "")),
            platform=str(raw.get("platform", "")),
            entries=entries,
        )


@dataclass
class StoreAck:
    session_id: str
    stored: int
    duplicates: int

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "stored": self.stored,
            "duplicates": self.duplicates,
        }


class SessionStore:
    """Append-only JSONL store, deduplicating on (session, tier, repetition)."""

    def __init__(self, path: str | None) -> None:
        self._path = path
        self._lock = threading.Lock()
        self._seen: set[tuple[str, int, int]] = set()
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        row = json.loads(line)
                        self._seen.add(
                            (row["session_id"], int(row["tier_index"]), int(row["repetition"]))
                        )
            except FileNotFoundError:
                pass

    def store(self, record: SessionRecord) -> StoreAck:
        if not record.opt_in:
            raise OptInRequired("submission without opt_in")
        stored = 0
        duplicates = 0
        with self._lock:
            rows = []
            for entry in record.entries:
                key = (record.session_id, entry.tier_index, entry.repetition)
                if key in self._seen:
                    duplicates += 1
                    continue
                self._seen.add(key)
                rows.append(
                    {
                        "schema": SCHEMA_VERSION,
                        "session_id": record.session_id,
                        "user_agent": record.user_agent,
                        "platform": record.platform,
                        "tier_index": entry.tier_index,
                        "repetition": entry.repetition,
                        "family": entry.family,
                        "elapsed_ms": entry.elapsed_ms,
                    }
                )
                stored += 1
            if rows and self._path:
                with open(self._path, "a", encoding="utf-8") as fh:
                    for row in rows:
                        fh.write(json.dumps(row, sort_keys=True) + "\n")
        return StoreAck(session_id=record.session_id, stored=stored, duplicates=duplicates)


# -- HTTP service -----------------------------------------------------------------


@dataclass
class AcceptEvent:
    ts_ms: int
    family: str
    client: str
    port: int
    tier_index: int


class AcceptLog:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._events: list[AcceptEvent] = []

    def append(self, ev: AcceptEvent) -> None:
        with self._lock:
            self._events.append(ev)

    def snapshot(self) -> list[AcceptEvent]:
        with self._lock:
            return list(self._events)

    def __len__(self) -> int:
        with self._lock:
            return len(self._events)


class _TierHTTPServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, bind, handler, tier: DelayTier, service: "LabdService", family):
        self.address_family = family
        self.tier = tier
        self.service = service
        super().__init__(bind, handler)

    def get_request(self):
        # Accept time is the closest application-visible moment to the
        # handshake completing.
        sock, addr = super().get_request()
        client = unmap_address(addr[0])
        self.service.accept_log.append(
            AcceptEvent(
                ts_ms=self.service.clock.now(),
                family=family_of_address(client).value,
                client=client,
                port=self.server_address[1],
                tier_index=self.tier.tier_index,
            )
        )
        return sock, addr


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # quiet
        pass

    def _send_json(self, code: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Content-Length", "0")
        self.end_headers()

    def do_GET(self):
        server: _TierHTTPServer = self.server  # type: ignore[assignment]
        service = server.service
        path = urlparse(self.path).path
        if path == "/echo":
            client = unmap_address(self.client_address[0])
            fam = family_of_address(client)
            if fam is Family.IPV6 and service.shaping == "app-hold":
                # Holds the response body, not the handshake; see module doc.
                time.sleep(server.tier.delay_ms / 1000.0)
            self._send_json(
                200,
                {
                    "client_address": client,
                    "family": fam.value,
                    "tier_index": server.tier.tier_index,
                    "delay_ms": server.tier.delay_ms,
                    "domain": server.tier.domain,
                    "server_timestamp_ms": service.clock.now(),
                    "run_nonce": service.run_nonce,
                },
            )
        elif path == "/ladder":
            self._send_json(
                200,
                {
                    "schema": SCHEMA_VERSION,
                    "run_nonce": service.run_nonce,
                    "tiers": [t.to_dict() for t in service.ladder],
                },
            )
        else:
            self._send_json(404, {"error": "unknown path"})

    def do_POST(self):
        server: _TierHTTPServer = self.server  # type: ignore[assignment]
        service = server.service
        path = urlparse(self.path).path
        if path != "/results":
            self._send_json(404, {"error": "unknown path"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            record = SessionRecord.from_dict(json.loads(self.rfile.read(length)))
        except (ValueError, KeyError, TypeError):
            self._send_json(400, {"error": "bad submission"})
            return
        try:
            ack = service.store.store(record)
        except OptInRequired:
            self._send_json(403, {"error": "opt_in required"})
            return
        except OSError:
            self._send_json(503, {"error": "storage unavailable"})
            return
        self._send_json(200, ack.to_dict())


class LabdService:
    """Runs one HTTP server per ladder endpoint (v4 and v6 per tier)."""

    def __init__(
        self,
        ladder: list[DelayTier],
        store: SessionStore | None = None,
        clock: Wallclock | None = None,
        shaping: str = "none",
        run_nonce: str = "",
    ) -> None:
        if shaping not in ("none", "app-hold"):
            raise ValueError(f"unknown shaping mode {shaping!r}")
        self.store = store or SessionStore(None)
        self.clock = clock or Wallclock()
        self.shaping = shaping
        self.run_nonce = run_nonce
        self.accept_log = AcceptLog()
        self._servers: list[_TierHTTPServer] = []
        self._threads: list[threading.Thread] = []
        self.ladder: list[DelayTier] = []
        for tier in ladder:
            self.ladder.append(self._bind_tier(tier))

    def _bind_tier(self, tier: DelayTier) -> DelayTier:
        """Bind both endpoints; with port 0 the pair retries until one port is
        free on both addresses, so each tier keeps a single port."""
        v4_host = tier.v4_endpoint[0]
        v6_host = tier.v6_endpoint[0]
        want = tier.v4_endpoint[1]
        for attempt in range(20):
            v4 = _TierHTTPServer((v4_host, want), _Handler, tier, self, socket.AF_INET)
            got = v4.server_address[1]
            try:
                v6 = _TierHTTPServer((v6_host, got), _Handler, tier, self, socket.AF_INET6)
            except OSError:
                v4.server_close()
                if want:
                    raise
                continue
            bound = DelayTier(
                tier_index=tier.tier_index,
                delay_ms=tier.delay_ms,
                domain=tier.domain,
                v4_endpoint=(v4_host, got),
                v6_endpoint=(v6_host, got),
            )
            v4.tier = bound
            v6.tier = bound
            self._servers.extend([v4, v6])
            return bound
        raise OSError("could not bind a shared port for tier")

    def start(self) -> None:
        for server in self._servers:
            t = threading.Thread(target=server.serve_forever, daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self) -> None:
        for server in self._servers:
            server.shutdown()
            server.server_close()
        for t in self._threads:
            t.join(timeout=2)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="labd", description="Delay-ladder measurement target")
    parser.add_argument("--v4", default="127.0.0.1")
    parser.add_argument("--v6", default="::1")
    parser.add_argument("--base-port", type=int, default=8440)
    parser.add_argument("--base-zone", default="he-test.example.")
    parser.add_argument("--ladder", default=None, help="ladder JSON file (overrides defaults)")
    parser.add_argument("--storage", default=None, help="JSONL file for submitted results")
    parser.add_argument("--shaping", choices=["none", "app-hold"], default="none")
    args = parser.parse_args(argv)

    if args.ladder:
        with open(args.ladder, encoding="utf-8") as fh:
            ladder = [DelayTier.from_dict(t) for t in json.load(fh)["tiers"]]
    else:
        ladder = default_ladder(args.base_zone, args.v4, args.v6, args.base_port)
    service = LabdService(ladder, store=SessionStore(args.storage))
    service.start()
    print("labd tiers:")
    for tier in service.ladder:
        print(f"  [{tier.tier_index:2d}] {tier.delay_ms:5d} ms  {tier.domain}  port {tier.v4_endpoint[1]}")
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
